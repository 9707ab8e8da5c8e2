"""Script for writing the files a run leaves behind"""

import json
import logging
import os

import numpy as np
import yaml

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def _json_ready(value):
    if isinstance(value, dict):
        return {str(k): _json_ready(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_ready(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def savejson(record, filename):
    """
    Write a JSON file. Floats are written with repr, so they read back
    bit-exactly.

    Parameters:
        record (dict): Data to write.
        filename (str): Output path; parent directories are created.

    Returns:
        str: The path written.
    """
    os.makedirs(os.path.dirname(os.path.abspath(filename)), exist_ok=True)
    with open(filename, "w") as handle:
        json.dump(_json_ready(record), handle, indent=1, allow_nan=False)
    return filename


def saveconfig(raw, filename):
    """Write the resolved configuration snapshot as YAML."""
    os.makedirs(os.path.dirname(os.path.abspath(filename)), exist_ok=True)
    with open(filename, "w") as handle:
        yaml.safe_dump(_json_ready(raw), handle, sort_keys=False)
    return filename


def savecheckpoint(operator, adam, epoch, filename, quadrature=None):
    """
    Save the operator's networks and the optimizer state.

    Parameters:
        operator (ModNetOperator): Networks to store.
        adam (AdamState): Optimizer state.
        epoch (int): Epochs run so far.
        filename (str): Output path.
        quadrature (dict): Rule sizes needed to rebuild the operator.

    Returns:
        str: The path written.
    """
    record = {
        "schema_version": SCHEMA_VERSION,
        "family": operator.family,
        "epoch": epoch,
        "networks": {name: net.to_dict() for name, net in operator.networks().items()},
        "quadrature": quadrature or {},
        "adam": adam.to_dict(),
    }
    return savejson(record, filename)


def savehistory(history, filename):
    """Write the per-epoch loss history (a polars DataFrame) as CSV."""
    os.makedirs(os.path.dirname(os.path.abspath(filename)), exist_ok=True)
    history.write_csv(filename)
    return filename


def savegrid(frame, filename):
    """Write a grid or slice DataFrame as CSV."""
    os.makedirs(os.path.dirname(os.path.abspath(filename)), exist_ok=True)
    frame.write_csv(filename)
    return filename


def savemetrics(name, problem, seed, variants, filename):
    """
    Write metrics.json.

    Parameters:
        name (str): Experiment name.
        problem (str): Problem family.
        seed (int): Seed of the run.
        variants (dict): variant -> {epochs_run, best_loss, tests: [...]}.
        filename (str): Output path.
    """
    record = {
        "schema_version": SCHEMA_VERSION,
        "name": name,
        "problem": problem,
        "seed": seed,
        "variants": variants,
    }
    return savejson(record, filename)
