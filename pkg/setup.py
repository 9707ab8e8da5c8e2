"""The setup script."""
from pathlib import Path
from setuptools import setup, find_packages

with open("README.md") as readme_file:
    readme = readme_file.read()

# Get the path to the requirements.txt file
requirements_path = Path(__file__).parent / 'requirements.txt'

# Read the contents of the requirements file
with open(requirements_path) as f:
    requirements = f.read().splitlines()

test_requirements = [
    "pytest>=3",
]

setup(
    python_requires=">=3.9",
    classifiers=[
        "Development Status :: 2 - Pre-Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Natural Language :: English",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
    description="A python command-line utility for learning solution operators of parametric PDE families with Green's-function networks",
    long_description=readme,
    long_description_content_type="text/markdown",
    entry_points={
        "console_scripts": [
            "Modnet=Modnet.Modnet:modnet",
        ],
    },
    install_requires=requirements,
    license="MIT license",
    include_package_data=True,
    package_data={"Modnet": ["templates/*"]},
    keywords="Modnet",
    name="Modnet",
    packages=find_packages(
        include=["Modnet", "Modnet.*"],
        exclude=[
            "runs/*",
            "references/*",
        ],
    ),
    test_suite="tests",
    tests_require=test_requirements,
    version="0.0.1",
    zip_safe=False,
)
