"""Running configured experiments end to end"""

import logging
import os

import polars as pl

from .evaluation import DEFAULT_GRIDS, evaluate, member_tag
from .exceptions import ContractError
from .filewriter import savecheckpoint, saveconfig, savegrid, savehistory, savemetrics
from .readfiles import readcheckpoint
from .reference import make_labels
from .report import generate_report
from .solutionoperator import ModNetOperator
from .training import train

logger = logging.getLogger(__name__)

DEFAULT_VARIANT = "default"


def _relative(paths, root):
    return [os.path.relpath(p, root) for p in paths]


def build_labels(config, cache_dir=None):
    """Labels for every member of the family grid, or None without a label spec."""
    if config.labels is None:
        return None
    problem = config.problem
    rule = problem.density_rule() if config.labels.kind == "rho" else None
    print(f"Generating {config.labels.kind}-labels for {len(config.family.grid)} family members")
    return {
        value: make_labels(problem, value, config.labels, rule, cache_dir=cache_dir)
        for value in config.family.grid
    }


def run_variant(config, out_dir, cache_dir=None):
    """
    Train and evaluate one configuration, writing its files to ``out_dir``.

    Returns:
    - (dict, list): the variant's metrics record and the files written.
    """
    os.makedirs(out_dir, exist_ok=True)
    problem = config.problem
    labels = build_labels(config, cache_dir)
    operator = problem.build_operator(config.schedule.seed, config.chunk_rows)
    print(f"Training {problem.family} operator ({sum(n.num_parameters for n in operator.networks().values())} parameters)")
    run = train(problem, operator, config.family, config.weights, config.schedule, labels, config.loss)

    files = [
        savehistory(run.history_frame(), os.path.join(out_dir, "loss_history.csv")),
        savecheckpoint(
            run.operator, run.adam, run.epochs_run, os.path.join(out_dir, "checkpoint.json"),
            config.raw.get("quadrature"),
        ),
    ]
    print("Evaluating test members")
    tests, written = evaluate(problem, run.operator, config.evaluation, out_dir, cache_dir)
    files.extend(written)
    record = {
        "epochs_run": run.epochs_run,
        "best_loss": run.best_loss,
        "best_epoch": run.best_epoch,
        "stopped_early": run.stopped_early,
        "tests": tests,
    }
    return record, files


def run(config, out_dir, cache_dir=None):
    """
    Run every variant of an experiment.

    Writes config.yaml, metrics.json and report.md to ``out_dir``; the
    default variant's files go to ``out_dir`` itself and each named variant
    gets a subdirectory.

    Returns:
    - dict: metrics.json contents.
    """
    os.makedirs(out_dir, exist_ok=True)
    cache_dir = cache_dir or os.path.join(out_dir, "references")
    saveconfig(config.raw, os.path.join(out_dir, "config.yaml"))
    variants = config.variants or {DEFAULT_VARIANT: config}
    results, files = {}, []
    for name, variant in variants.items():
        print(f"Running variant {name}")
        target = out_dir if name == DEFAULT_VARIANT else os.path.join(out_dir, name)
        results[name], written = run_variant(variant, target, cache_dir)
        files.extend(written)
    savemetrics(config.name, config.problem.family, config.schedule.seed, results, os.path.join(out_dir, "metrics.json"))
    generate_report(
        config.name,
        config.problem.family,
        _parameters(config),
        results,
        _relative(files, out_dir),
        os.path.join(out_dir, "report.md"),
    )
    return {"name": config.name, "problem": config.problem.family, "seed": config.schedule.seed, "variants": results}


def _parameters(config):
    return {
        "seed": config.schedule.seed,
        "epochs": config.schedule.epochs,
        "family": f"{config.family.parameter} in {list(config.family.grid)} (K={config.family.k}, {config.family.sampling})",
        "loss": config.loss,
        "weights": config.raw.get("weights"),
        "labels": config.raw.get("labels"),
        "learning_rate": config.schedule.learning_rate,
        "patience": config.schedule.patience,
    }


def load_operator(config, checkpoint):
    """Rebuild a trained operator from a checkpoint file for ``config``'s problem."""
    record = readcheckpoint(checkpoint)
    problem = config.problem
    if record["family"] != problem.family:
        raise ContractError(
            f"checkpoint holds a {record['family']} operator but the configuration is {problem.family}"
        )
    template = problem.build_operator(config.schedule.seed, config.chunk_rows)
    nets = record["networks"]
    outer = nets.pop("F", None)
    return ModNetOperator(
        template.family,
        nets,
        outer,
        template.interior_rule,
        template.positive_rule,
        template.negative_rule,
        config.chunk_rows,
        {"epoch": record["epoch"]},
    )


def evaluate_checkpoint(config, checkpoint, out_dir, cache_dir=None):
    """Evaluate a saved operator on the configuration's test members."""
    operator = load_operator(config, checkpoint)
    tests, files = evaluate(config.problem, operator, config.evaluation, out_dir, cache_dir)
    results = {DEFAULT_VARIANT: {"epochs_run": operator.metadata["epoch"], "best_loss": None, "tests": tests}}
    savemetrics(config.name, config.problem.family, config.schedule.seed, results, os.path.join(out_dir, "metrics.json"))
    return results


def make_reference(config, out_dir):
    """
    Compute and cache reference solutions for the test members and labels
    for the family grid.

    Returns:
    - list: files written besides the cache.
    """
    problem = config.problem
    counts = config.evaluation.grid or DEFAULT_GRIDS[problem.family]
    files = []
    for value in config.evaluation.tests:
        print(f"Reference for {member_tag(problem, value)}")
        grid = problem.reference_grid(value, counts, out_dir)
        files.append(savegrid(grid.to_frame(), os.path.join(out_dir, f"reference_{member_tag(problem, value)}.csv")))
    written = set()
    for variant in (config, *config.variants.values()):
        spec = variant.labels
        if spec is None or (spec.kind, spec.counts) in written:
            continue
        written.add((spec.kind, spec.counts))
        shape = "x".join(str(c) for c in spec.counts)
        for value, label_set in build_labels(variant, out_dir).items():
            files.append(
                savegrid(
                    label_frame(problem, label_set),
                    os.path.join(out_dir, f"labels_{spec.kind}_{shape}_{member_tag(problem, value)}.csv"),
                )
            )
    return files


def label_frame(problem, label_set):
    """Label points and values, one column per coordinate plus the label kind."""
    names = problem.axes_names[: label_set.points.shape[1]]
    frame = {name: label_set.points[:, i] for i, name in enumerate(names)}
    frame[label_set.kind] = label_set.values
    return pl.DataFrame(frame)
