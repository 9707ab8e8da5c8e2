"""Error types raised by Modnet and the exit codes the command line maps them to"""


class ModnetError(Exception):
    """Base class for every error Modnet raises on purpose."""

    exit_code = 1


class ContractError(ModnetError, ValueError):
    """
    An argument broke the contract of an operation (bad shape, empty point
    set, unknown family, ...).

    Contract errors caused by a configuration file exit with code 2.
    """

    exit_code = 2


class ConfigError(ContractError):
    """
    A configuration file could not be read or failed validation.

    Parameters:
    - message (str): What is wrong.
    - field (str): Dotted path of the offending field, e.g. 'schedule.epochs'.
    """

    exit_code = 2

    def __init__(self, message, field=None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class NumericError(ModnetError, ArithmeticError):
    """
    A non-finite value appeared during evaluation or training.

    Parameters:
    - message (str): What happened.
    - op (str): Name of the recorded operation that produced the value, if known.
    - epoch (int): Training epoch, if raised during training.
    - terms (dict): Loss terms of the failing epoch, if known.
    """

    exit_code = 3

    def __init__(self, message, op=None, epoch=None, terms=None):
        self.op = op
        self.epoch = epoch
        self.terms = dict(terms or {})
        details = []
        if op is not None:
            details.append(f"op={op}")
        if epoch is not None:
            details.append(f"epoch={epoch}")
        if self.terms:
            details.append(
                ", ".join(f"{key}={value!r}" for key, value in self.terms.items())
            )
        if details:
            message = f"{message} ({'; '.join(details)})"
        super().__init__(message)


class SolverError(ModnetError, RuntimeError):
    """A reference solver did not converge within its iteration cap."""

    exit_code = 4
