# /usr/bin/python3
"""Script to specify arguments on CLI"""
import logging
import os
import sys

import click

from .exceptions import ModnetError
from .experiment import evaluate_checkpoint, make_reference, run
from .readfiles import readconfig
from .report import getparameters


def _configure_logging(verbose, quiet):
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s: %(message)s")


def _fail(error):
    click.echo(f"Error: {error}", err=True)
    sys.exit(error.exit_code)


def _output_dir(out_dir, config):
    return out_dir or os.path.join("runs", config.name)


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Log every training epoch that is reported")
@click.option("--quiet", "-q", is_flag=True, help="Only log warnings and errors")
@click.pass_context
def modnet(ctx, verbose, quiet):
    """Train and evaluate Green's-function operator networks for parametric PDE families."""
    _configure_logging(verbose, quiet)
    ctx.obj = {"quiet": quiet}


@modnet.command("run")
@click.option("--config", "-c", required=True, help="Provide a YAML experiment configuration")
@click.option("--out-dir", "-o", help="Provide the run directory (default runs/<name>)")
@click.option("--seed", "-s", type=int, help="Override the seed of the configuration")
@click.option("--cache-dir", "-cd", help="Provide a directory for cached reference solutions")
@click.option("--epochs", "-e", type=int, help="Override the number of training epochs")
@click.pass_context
def run_command(ctx, config, out_dir, seed, cache_dir, epochs):
    """Train every variant of an experiment and evaluate it on its test members."""
    params = getparameters(vars())
    overrides = {"schedule": {}}
    if "epochs" in params:
        overrides["schedule"]["epochs"] = params["epochs"]
    if ctx.obj and ctx.obj.get("quiet"):
        overrides["schedule"]["progress"] = False
    try:
        print("Reading configuration")
        experiment = readconfig(params["config"], seed=params.get("seed"), overrides=overrides)
        target = _output_dir(out_dir, experiment)
        run(experiment, target, cache_dir)
    except ModnetError as error:
        _fail(error)
    print(f"Run written to {target}")


@modnet.command("evaluate")
@click.option("--config", "-c", required=True, help="Provide the configuration the checkpoint was trained with")
@click.option("--checkpoint", "-ck", required=True, help="Provide a checkpoint.json written by a run")
@click.option("--out-dir", "-o", help="Provide a directory for the evaluation files")
@click.option("--seed", "-s", type=int, help="Override the seed of the configuration")
@click.option("--cache-dir", "-cd", help="Provide a directory for cached reference solutions")
def evaluate_command(config, checkpoint, out_dir, seed, cache_dir):
    """Evaluate a trained operator against reference solutions."""
    try:
        print("Reading configuration")
        experiment = readconfig(config, seed=seed)
        target = out_dir or os.path.join(os.path.dirname(os.path.abspath(checkpoint)), "evaluation")
        print("Evaluating checkpoint")
        evaluate_checkpoint(experiment, checkpoint, target, cache_dir)
    except ModnetError as error:
        _fail(error)
    print(f"Evaluation written to {target}")


@modnet.command("make-reference")
@click.option("--config", "-c", required=True, help="Provide a YAML experiment configuration")
@click.option("--out-dir", "-o", help="Provide the reference directory (default references/<name>)")
def make_reference_command(config, out_dir):
    """Compute and cache reference grids and labels for an experiment."""
    try:
        experiment = readconfig(config)
        target = out_dir or os.path.join("references", experiment.name)
        files = make_reference(experiment, target)
    except ModnetError as error:
        _fail(error)
    print(f"Wrote {len(files)} reference files to {target}")


if __name__ == "__main__":
    modnet()
