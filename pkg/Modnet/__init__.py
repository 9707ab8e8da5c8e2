"""Top-level package for Modnet."""

__author__ = """Modnet developers"""
__version__ = "0.1.0"
