import os

from jinja2 import Environment, PackageLoader


def getparameters(vardict):
    """
    Filter out None values from a dictionary and return a new dictionary with only non-None values.

    Parameters:
    - vardict (dict): A dictionary where keys are option names and values are option values.

    Returns:
    - paramdict (dict): A filtered dictionary containing only key-value pairs from `vardict` where the value is not None.

    Used on the command line's local variables to find the options the user actually set, so that only
    those override the configuration file.

    Example:
    >>> getparameters({'seed': 7, 'out_dir': None, 'config': 'configs/example1.yaml'})
    {'seed': 7, 'config': 'configs/example1.yaml'}
    """
    paramdict = {}
    for key, val in vardict.items():
        if val is not None:
            paramdict[key] = val
    return paramdict


def _format(value):
    if value is None:
        return "n/a"
    if isinstance(value, float):
        return f"{value:.4e}"
    return str(value)


def generate_report(name, problem, parameters, variants, files, filename):
    """
    Render the Markdown summary of a run.

    Parameters:
    - name (str): Experiment name.
    - problem (str): Problem family.
    - parameters (dict): Settings of the run (seed, epochs, weights, ...).
    - variants (dict): variant -> {epochs_run, best_loss, tests: [...]}, as in metrics.json.
    - files (list): Paths of the CSV outputs, relative to the run directory.
    - filename (str): Output path of the report.

    Returns:
    - str: The path written.

    The template `report.md.j2` ships with the package under `Modnet/templates`. It lays out one
    table of test errors per variant, followed by the run parameters and the list of output files.
    """
    env = Environment(loader=PackageLoader("Modnet", "templates"), trim_blocks=True, lstrip_blocks=True)
    env.filters["num"] = _format
    template = env.get_template("report.md.j2")
    report = template.render(
        name=name,
        problem=problem,
        parameters=parameters,
        variants=variants,
        files=files,
    )
    os.makedirs(os.path.dirname(os.path.abspath(filename)), exist_ok=True)
    with open(filename, "w") as fh:
        fh.write(report)
    return filename
