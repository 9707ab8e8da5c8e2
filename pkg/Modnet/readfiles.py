"""Reading experiment configurations, checkpoints and grids"""

import copy
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import polars as pl
import yaml

from .exceptions import ConfigError, ContractError
from .losses import LossWeights
from .network import ACTIVATIONS, MlpNetwork
from .problems import PROBLEMS, NetworkSpec, make_problem
from .reference import GridSolution, LabelSpec, constant_rte_coefficients, example_rte_coefficients
from .training import AdamState, FamilySpec, Schedule

logger = logging.getLogger(__name__)

DEFAULTS = {
    "networks": {
        "green": {"hidden": [128, 128, 128, 128], "activation": "tanh"},
        "outer": {"hidden": [256], "activation": "sigmoid"},
    },
    "quadrature": {"interior": [10, 10], "inflow": [30, 30], "velocity": 30, "density": 30},
    "family": {"sampling": "with_replacement"},
    "loss": "least_square",
    "weights": {"pde": 1.0, "bc": 1.0, "data": 0.0},
    "labels": None,
    "schedule": {
        "learning_rate": 1.0e-3,
        "patience": None,
        "log_every": 100,
        "chunk_rows": 32768,
    },
    "evaluation": {"tests": [], "grid": None, "slices": {}},
}

NETWORK_DEFAULTS = {
    "rte1d": {"green": {"hidden": [128, 256, 256, 128], "activation": "tanh"}},
    "burgers1d": {"green": {"hidden": [256, 256, 256, 256], "activation": "sigmoid"}},
}

REQUIRED = ("name", "problem.family", "family.parameter", "family.grid", "family.k",
            "schedule.epochs", "schedule.interior", "schedule.seed")


@dataclass(frozen=True)
class EvaluationSpec:
    """Test members and the grids they are evaluated on."""

    tests: tuple = ()
    grid: tuple = ()
    slices: dict = field(default_factory=dict)
    density_points: int = 101


@dataclass
class ExperimentConfig:
    """
    A validated experiment.

    ``raw`` keeps the merged dictionary that produced it, so it can be
    written back as the run's config snapshot.
    """

    name: str
    problem: object
    family: FamilySpec
    weights: LossWeights
    schedule: Schedule
    loss: str
    labels: LabelSpec
    evaluation: EvaluationSpec
    chunk_rows: int
    raw: dict
    variants: dict = field(default_factory=dict)


def deep_merge(base, overrides):
    """Recursively merge ``overrides`` into a copy of ``base``; None replaces."""
    merged = copy.deepcopy(base)
    for key, value in (overrides or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _get(raw, path):
    node = raw
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            raise ConfigError("required field is missing", path)
        node = node[part]
    return node


def _integer(value, path, minimum=1):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ConfigError(f"expected an integer, got {value!r}", path)
    if value < minimum:
        raise ConfigError(f"must be >= {minimum}, got {value}", path)
    return int(value)


def _number(value, path, minimum=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not np.isfinite(value):
        raise ConfigError(f"expected a finite number, got {value!r}", path)
    if minimum is not None and value < minimum:
        raise ConfigError(f"must be >= {minimum}, got {value}", path)
    return float(value)


def _grid(value, path):
    """A list of numbers, or {start, step, count} for an arithmetic grid."""
    if isinstance(value, dict):
        for key in ("start", "step", "count"):
            if key not in value:
                raise ConfigError("required field is missing", f"{path}.{key}")
        start = _number(value["start"], f"{path}.start")
        step = _number(value["step"], f"{path}.step")
        count = _integer(value["count"], f"{path}.count")
        return tuple(start + step * i for i in range(count))
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError("expected a non-empty list or {start, step, count}", path)
    return tuple(_number(v, f"{path}[{i}]") for i, v in enumerate(value))


def _network(raw, path):
    hidden = raw.get("hidden")
    if not isinstance(hidden, (list, tuple)) or not hidden:
        raise ConfigError("expected a non-empty list of widths", f"{path}.hidden")
    hidden = tuple(_integer(w, f"{path}.hidden[{i}]") for i, w in enumerate(hidden))
    activation = raw.get("activation", "tanh")
    if activation not in ACTIVATIONS:
        raise ConfigError(f"expected one of {ACTIVATIONS}, got {activation!r}", f"{path}.activation")
    return NetworkSpec(hidden, activation)


def _rte_coefficients(value):
    if value in (None, "example"):
        return example_rte_coefficients()
    if isinstance(value, dict):
        return constant_rte_coefficients(
            _number(value.get("sigma_t"), "problem.coefficients.sigma_t", 0.0),
            _number(value.get("sigma_a", 0.0), "problem.coefficients.sigma_a", 0.0),
            _number(value.get("epsilon", 1.0), "problem.coefficients.epsilon", 0.0),
        )
    raise ConfigError("expected 'example' or constant sigma_t/sigma_a/epsilon", "problem.coefficients")


def _problem(raw):
    family = _get(raw, "problem.family")
    if family not in PROBLEMS:
        raise ConfigError(f"expected one of {sorted(PROBLEMS)}, got {family!r}", "problem.family")
    options = {k: v for k, v in raw["problem"].items() if k != "family"}
    networks = raw["networks"]
    quadrature = raw["quadrature"]
    options["green"] = _network(networks["green"], "networks.green")
    if family in ("poisson2d", "auxiliary2d", "nonlinearpoisson2d"):
        interior = quadrature["interior"]
        if not isinstance(interior, (list, tuple)) or len(interior) != 2:
            raise ConfigError("expected [nx, ny]", "quadrature.interior")
        options["quadrature"] = tuple(_integer(n, f"quadrature.interior[{i}]") for i, n in enumerate(interior))
    if family in ("nonlinearpoisson2d", "burgers1d"):
        options["outer"] = _network(networks["outer"], "networks.outer")
    if family == "rte1d":
        inflow = quadrature["inflow"]
        if not isinstance(inflow, (list, tuple)) or len(inflow) != 2:
            raise ConfigError("expected [n_positive, n_negative]", "quadrature.inflow")
        options["inflow_nodes"] = tuple(_integer(n, f"quadrature.inflow[{i}]") for i, n in enumerate(inflow))
        for key, name in (("velocity", "velocity_nodes"), ("density", "density_nodes")):
            count = _integer(quadrature[key], f"quadrature.{key}", 2)
            if count % 2:
                raise ConfigError("velocity rules need an even node count", f"quadrature.{key}")
            options[name] = count
        options["coefficients_"] = _rte_coefficients(options.pop("coefficients", None))
        if "reference_nv" in options and options["reference_nv"] % 2:
            raise ConfigError("must be even", "problem.reference_nv")
    try:
        return make_problem(family, **options)
    except TypeError as error:
        raise ConfigError(f"unsupported problem option ({error})", "problem") from None
    except ContractError as error:
        raise ConfigError(str(error), "problem") from None


def build_config(raw, variants=None):
    """
    Validate a merged configuration dictionary.

    Parameters:
    - raw (dict): Configuration with defaults applied.
    - variants (dict): Variant name -> ExperimentConfig, attached as is.

    Returns:
    - ExperimentConfig

    Raises ConfigError naming the offending field.
    """
    for path in REQUIRED:
        _get(raw, path)
    name = str(raw["name"])
    problem = _problem(raw)

    fam = raw["family"]
    grid = _grid(fam["grid"], "family.grid")
    k = _integer(fam["k"], "family.k")
    sampling = fam.get("sampling", "with_replacement")
    try:
        family = FamilySpec(str(fam["parameter"]), grid, k, sampling)
    except ContractError as error:
        raise ConfigError(str(error), "family") from None

    weights_raw = raw["weights"]
    weights = {}
    for key in ("pde", "bc", "data", "bc_left", "bc_right"):
        if weights_raw.get(key) is not None:
            weights[key] = _number(weights_raw[key], f"weights.{key}", 0.0)
    weights = LossWeights(**weights)

    labels = None
    if raw.get("labels"):
        kind = raw["labels"].get("kind")
        if kind == "none":
            labels = None
        elif kind not in ("u", "rho"):
            raise ConfigError(f"expected u, rho or none, got {kind!r}", "labels.kind")
        else:
            counts = raw["labels"].get("counts")
            if not isinstance(counts, (list, tuple)) or not counts:
                raise ConfigError("expected a list of counts", "labels.counts")
            labels = LabelSpec(kind, tuple(_integer(c, f"labels.counts[{i}]") for i, c in enumerate(counts)))
            resolution = getattr(problem, "reference_nx", None)
            if resolution is not None and labels.counts[0] > resolution + 1:
                raise ConfigError("label grid exceeds the reference solver resolution", "labels.counts")
    if weights.data > 0 and labels is None:
        raise ConfigError("a positive data weight needs labels", "weights.data")

    loss = raw.get("loss", "least_square")
    if loss not in ("least_square", "variational"):
        raise ConfigError(f"expected least_square or variational, got {loss!r}", "loss")
    if loss == "variational" and problem.family != "poisson2d":
        raise ConfigError("the variational loss is only available for poisson2d", "loss")

    sched = raw["schedule"]
    patience = sched.get("patience")
    schedule = Schedule(
        epochs=_integer(sched["epochs"], "schedule.epochs", 0),
        interior=_integer(sched["interior"], "schedule.interior"),
        boundary=_integer(sched.get("boundary", 1), "schedule.boundary"),
        seed=_integer(sched["seed"], "schedule.seed", 0),
        learning_rate=_number(sched.get("learning_rate", 1e-3), "schedule.learning_rate", 0.0),
        patience=None if patience is None else _integer(patience, "schedule.patience", 0),
        log_every=_integer(sched.get("log_every", 100), "schedule.log_every"),
        progress=bool(sched.get("progress", True)),
    )
    chunk_rows = _integer(sched.get("chunk_rows", 32768), "schedule.chunk_rows")

    ev = raw["evaluation"]
    tests = tuple(_number(v, f"evaluation.tests[{i}]") for i, v in enumerate(ev.get("tests") or []))
    grid_counts = ev.get("grid") or []
    grid_counts = tuple(_integer(c, f"evaluation.grid[{i}]", 2) for i, c in enumerate(grid_counts))
    slices = {}
    for axis, values in (ev.get("slices") or {}).items():
        if axis not in problem.axes_names:
            raise ConfigError(f"unknown axis {axis!r}", f"evaluation.slices.{axis}")
        slices[axis] = tuple(_number(v, f"evaluation.slices.{axis}[{i}]") for i, v in enumerate(values))
    evaluation = EvaluationSpec(
        tests, grid_counts, slices, _integer(ev.get("density_points", 101), "evaluation.density_points", 2)
    )

    return ExperimentConfig(
        name, problem, family, weights, schedule, loss, labels, evaluation, chunk_rows, raw, variants or {}
    )


def readconfig(path, seed=None, overrides=None):
    """
    Read and validate a YAML experiment configuration.

    Parameters:
    - path (str): YAML file.
    - seed (int): Replaces schedule.seed when given.
    - overrides (dict): Merged over the file before validation.

    Returns:
    - ExperimentConfig with one ExperimentConfig per entry of ``variants``.

    Example:
    >>> config = readconfig("configs/example1.yaml", seed=3)
    >>> config.schedule.seed
    3
    """
    try:
        with open(path) as handle:
            raw = yaml.safe_load(handle)
    except OSError as error:
        raise ConfigError(f"cannot read configuration: {error}") from None
    except yaml.YAMLError as error:
        raise ConfigError(f"invalid YAML: {error}") from None
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    return resolve(raw, seed, overrides)


def resolve(raw, seed=None, overrides=None):
    """Apply defaults, overrides and variants to a configuration mapping."""
    variants_raw = raw.get("variants") or {}
    if not isinstance(variants_raw, dict):
        raise ConfigError("expected a mapping of variant name to overrides", "variants")
    problem = raw.get("problem")
    family = problem.get("family") if isinstance(problem, dict) else None
    networks = NETWORK_DEFAULTS.get(family, {}) if isinstance(family, str) else {}
    defaults = deep_merge(DEFAULTS, {"networks": networks})
    base = deep_merge(defaults, {k: v for k, v in raw.items() if k != "variants"})
    base = deep_merge(base, overrides)
    if seed is not None:
        base = deep_merge(base, {"schedule": {"seed": seed}})
    variants = {}
    for name, changes in variants_raw.items():
        merged = deep_merge(base, changes)
        try:
            variants[str(name)] = build_config(merged)
        except ConfigError as error:
            raise ConfigError(str(error), f"variants.{name}") from None
    config = build_config(base, variants)
    config.raw = dict(base, variants=variants_raw) if variants_raw else base
    return config


def readcheckpoint(path):
    """
    Read a training checkpoint.

    Returns:
    - dict with 'family', 'epoch', 'networks' (name -> network record),
      'adam' (AdamState) and the rest of the record.
    """
    try:
        with open(path) as handle:
            record = json.load(handle)
    except (OSError, json.JSONDecodeError) as error:
        raise ContractError(f"cannot read checkpoint {path}: {error}") from None
    for key in ("family", "networks", "adam"):
        if key not in record:
            raise ContractError(f"checkpoint {path} is missing {key!r}")
    record["networks"] = {name: MlpNetwork.from_dict(net) for name, net in record["networks"].items()}
    record["adam"] = AdamState.from_dict(record["adam"])
    return record


def readgrid(path, axes, column="u"):
    """Read a grid CSV written by ``filewriter.savegrid``."""
    path = Path(path)
    if not path.exists():
        raise ContractError(f"grid file {path} does not exist")
    return GridSolution.from_frame(pl.read_csv(path), axes, column)
