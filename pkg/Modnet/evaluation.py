"""Comparing a trained operator with reference solutions"""

import logging
import os

import numpy as np
import polars as pl

from .filewriter import savegrid
from .reference import metrics

logger = logging.getLogger(__name__)

DEFAULT_GRIDS = {
    "poisson2d": (101, 101),
    "auxiliary2d": (101, 101),
    "nonlinearpoisson2d": (101, 101),
    "rte1d": (101, 60),
    "burgers1d": (500,),
}


def member_tag(problem, value):
    """File-name tag of one test member, e.g. 'a_15' or 'a2_0.11'."""
    return f"{problem.parameter}_{value:g}"


def comparison_frame(points, names, predicted, reference):
    """Columns of the point coordinates, prediction, reference and difference."""
    frame = {name: points[:, i] for i, name in enumerate(names)}
    frame.update({"u_pred": predicted, "u_ref": reference, "diff": predicted - reference})
    return pl.DataFrame(frame)


def slice_points(problem, counts, axis, value):
    """Grid line of the evaluation grid with coordinate ``axis`` fixed."""
    axes = problem.axes(counts)
    index = problem.axes_names.index(axis)
    free = [name for name in problem.axes_names if name != axis]
    line = axes[free[0]]
    points = np.zeros((len(line), len(problem.axes_names)))
    points[:, index] = value
    points[:, problem.axes_names.index(free[0])] = line
    return points


def evaluate_member(problem, op, value, spec, out_dir, cache_dir=None):
    """
    Evaluate one test member and write its CSV files.

    Parameters:
    - problem: The problem.
    - op (ModNetOperator): Trained operator.
    - value (float): Family parameter of the test member.
    - spec (EvaluationSpec): Grid, slices and density resolution.
    - out_dir (str): Directory for the CSV files.
    - cache_dir (str): Reference cache directory.

    Returns:
    - (dict, list): the test record for metrics.json and the files written.
    """
    counts = spec.grid or DEFAULT_GRIDS[problem.family]
    tag = member_tag(problem, value)
    files = []

    predicted = problem.predict_grid(op, value, counts)
    reference = problem.reference_grid(value, counts, cache_dir)
    points = predicted.points()
    frame = comparison_frame(points, problem.axes_names, predicted.values.ravel(), reference.values.ravel())
    files.append(savegrid(frame, os.path.join(out_dir, f"solution_{tag}.csv")))
    record = {"parameter": problem.parameter, "value": value, "quantity": "u", **metrics(predicted, reference)}

    if problem.family == "rte1d":
        rho_pred = problem.predict_density_grid(op, value, spec.density_points)
        rho_ref = problem.reference_density_grid(value, spec.density_points, cache_dir)
        x = rho_pred.axes["x"]
        density = pl.DataFrame(
            {"x": x, "rho_pred": rho_pred.values, "rho_ref": rho_ref.values, "diff": rho_pred.values - rho_ref.values}
        )
        files.append(savegrid(density, os.path.join(out_dir, f"density_{tag}.csv")))
        record = {"parameter": problem.parameter, "value": value, "quantity": "rho", **metrics(rho_pred, rho_ref)}
        record["solution"] = metrics(predicted, reference)

    for axis, values in spec.slices.items():
        for position in values:
            line = slice_points(problem, counts, axis, position)
            frame = comparison_frame(
                line,
                problem.axes_names,
                problem.predict(op, value, line),
                np.asarray(problem.reference_values(value, line, cache_dir=cache_dir)),
            )
            files.append(savegrid(frame, os.path.join(out_dir, f"slice_{tag}_{axis}_{position:g}.csv")))

    logger.info("test %s: %s", tag, {k: record[k] for k in ("rmse", "relative_error", "max_error")})
    return record, files


def evaluate(problem, op, spec, out_dir, cache_dir=None):
    """Evaluate every test member of ``spec``; returns (records, files)."""
    records, files = [], []
    for value in spec.tests:
        record, written = evaluate_member(problem, op, value, spec, out_dir, cache_dir)
        records.append(record)
        files.extend(written)
    return records, files
