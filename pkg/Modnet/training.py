"""Collocation sampling, Adam and the training loop"""

import copy
import logging
from dataclasses import dataclass, field

import numpy as np
import polars as pl
from tqdm import tqdm

from .autodiff import GradientTape
from .exceptions import ContractError, NumericError
from .losses import stack_labels

logger = logging.getLogger(__name__)

SAMPLING_MODES = ("with_replacement", "without_replacement", "fixed")


@dataclass(frozen=True)
class Rectangle:
    """An axis-aligned box given by (low, high) bounds per coordinate."""

    bounds: tuple

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        if not bounds or any(not hi > lo for lo, hi in bounds):
            raise ContractError(f"degenerate domain {self.bounds}")
        object.__setattr__(self, "bounds", bounds)

    @property
    def dimension(self):
        return len(self.bounds)

    def segments(self):
        """The 2-D box sides in the order x = low, x = high, y = low, y = high."""
        return tuple(
            BoundarySegment(self.bounds, axis, self.bounds[axis][side])
            for axis in range(self.dimension)
            for side in (0, 1)
        )


@dataclass(frozen=True)
class BoundarySegment:
    """Points of ``bounds`` with coordinate ``axis`` fixed to ``value``."""

    bounds: tuple
    axis: int
    value: float


def _check_count(n, kind):
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 0:
        raise ContractError(f"number of {kind} points must be a non-negative integer, got {n!r}")


def sample_interior(domain, n, rng):
    """
    n points drawn uniformly from the domain.

    Parameters:
    - domain (Rectangle): The domain.
    - n (int): Number of points, >= 0.
    - rng (np.random.Generator): Source of randomness.

    Returns:
    - np.ndarray: (n, d) points.
    """
    _check_count(n, "interior")
    low = np.array([lo for lo, _ in domain.bounds])
    high = np.array([hi for _, hi in domain.bounds])
    return low + (high - low) * rng.random((n, domain.dimension))


def sample_boundary(segment, n, rng):
    """n points drawn uniformly from a boundary segment; (n, d)."""
    _check_count(n, "boundary")
    points = sample_interior(Rectangle(segment.bounds), n, rng)
    points[:, segment.axis] = segment.value
    return points


@dataclass(frozen=True)
class FamilySpec:
    """
    The parameter grid of a problem family and how members are drawn.

    Parameters:
    - parameter (str): Name of the family parameter (e.g. 'a', 'a2', 'c2').
    - grid (tuple): Candidate values.
    - k (int): Members drawn per epoch.
    - sampling (str): 'with_replacement', 'without_replacement' or 'fixed'
      (the whole grid every epoch; k must equal its size).
    """

    parameter: str
    grid: tuple
    k: int
    sampling: str = "with_replacement"

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(float(v) for v in self.grid))
        if not self.grid or self.k < 1:
            raise ContractError("a family needs a non-empty grid and k >= 1")
        if self.sampling not in SAMPLING_MODES:
            raise ContractError(f"unknown sampling mode {self.sampling!r}")
        if self.sampling != "with_replacement" and self.k > len(self.grid):
            raise ContractError(f"cannot draw {self.k} distinct members from a grid of {len(self.grid)}")
        if self.sampling == "fixed" and self.k != len(self.grid):
            raise ContractError("fixed sampling uses the whole grid; k must equal its size")

    def draw(self, rng):
        grid = np.asarray(self.grid)
        if self.sampling == "fixed":
            return grid.copy()
        return rng.choice(grid, size=self.k, replace=self.sampling == "with_replacement")


@dataclass
class AdamState:
    """Moment estimates and hyperparameters of Adam."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "step": self.step,
            "m": {k: v.tolist() for k, v in self.m.items()},
            "v": {k: v.tolist() for k, v in self.v.items()},
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            data["learning_rate"],
            data["beta1"],
            data["beta2"],
            data["eps"],
            data["step"],
            {k: np.asarray(v, dtype=np.float64) for k, v in data["m"].items()},
            {k: np.asarray(v, dtype=np.float64) for k, v in data["v"].items()},
        )


def adam_step(params, grads, state):
    """
    One bias-corrected Adam update.

    Parameters:
    - params (dict): slot -> array.
    - grads (dict): slot -> gradient array (same keys and shapes).
    - state (AdamState): Current moments; not modified.

    Returns:
    - (dict, AdamState): Updated parameters and state.
    """
    if set(params) != set(grads):
        raise ContractError("parameters and gradients name different slots")
    step = state.step + 1
    m, v, updated = {}, {}, {}
    for name, value in params.items():
        grad = grads[name]
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"non-finite gradient for {name}")
        m[name] = state.beta1 * state.m.get(name, np.zeros_like(value)) + (1 - state.beta1) * grad
        v[name] = state.beta2 * state.v.get(name, np.zeros_like(value)) + (1 - state.beta2) * grad * grad
        m_hat = m[name] / (1 - state.beta1**step)
        v_hat = v[name] / (1 - state.beta2**step)
        updated[name] = value - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return updated, AdamState(state.learning_rate, state.beta1, state.beta2, state.eps, step, m, v)


class EarlyStopping:
    """
    Stops when the loss has not improved for more than ``patience``
    consecutive epochs. ``patience=None`` never stops.
    """

    def __init__(self, patience=None):
        if patience is not None and patience < 0:
            raise ContractError("patience must be >= 0")
        self.patience = patience
        self.best = np.inf
        self.best_epoch = None
        self.waiting = 0

    def update(self, epoch, loss):
        """Record ``loss``; returns (improved, stop)."""
        if loss < self.best:
            self.best = loss
            self.best_epoch = epoch
            self.waiting = 0
            return True, False
        self.waiting += 1
        return False, self.patience is not None and self.waiting > self.patience


@dataclass(frozen=True)
class Schedule:
    """
    Training budget and sampling sizes.

    Parameters:
    - epochs (int): Maximum number of epochs, >= 0.
    - interior (int): Interior points per epoch.
    - boundary (int): Points per boundary segment per epoch.
    - seed (int): Seed of every random draw.
    - learning_rate (float): Adam step size.
    - patience (int): Early-stopping patience; None disables it.
    - log_every (int): Epochs between progress updates.
    """

    epochs: int
    interior: int
    boundary: int
    seed: int
    learning_rate: float = 1e-3
    patience: int = None
    log_every: int = 100
    progress: bool = True

    def __post_init__(self):
        if self.epochs < 0:
            raise ContractError("epochs must be >= 0")
        if self.interior < 1 or self.boundary < 1:
            raise ContractError("sample sizes must be positive")
        if not self.learning_rate > 0:
            raise ContractError("learning rate must be positive")
        if self.log_every < 1:
            raise ContractError("log_every must be positive")


@dataclass
class TrainRun:
    """Outcome of ``train``: the best parameters, optimizer state and history.

    ``adam`` is the optimizer state the best parameters were evaluated with,
    so its step count is ``best_epoch - 1``.
    """

    operator: object
    adam: AdamState
    history: list
    best_loss: float
    best_epoch: int
    epochs_run: int
    stopped_early: bool = False

    def history_frame(self):
        if not self.history:
            return pl.DataFrame({"epoch": [], "loss_total": []}, schema={"epoch": pl.Int64, "loss_total": pl.Float64})
        return pl.DataFrame(self.history)


def train(problem, operator, family, weights, schedule, labels=None, loss="least_square", adam=None):
    """
    Minimise the family-averaged risk with Adam.

    Each epoch draws K family members, fresh collocation points shared by
    those members, evaluates the risk on a new gradient tape and takes one
    Adam step. The parameters with the lowest epoch loss are kept.

    Parameters:
    - problem: A problem from ``Modnet.problems``.
    - operator (ModNetOperator): Initial operator.
    - family (FamilySpec): Members and how they are drawn.
    - weights (LossWeights): Risk weights.
    - schedule (Schedule): Budget, sample sizes and seed.
    - labels (dict): family parameter value -> LabelSet, or None.
    - loss (str): 'least_square' or 'variational' (poisson2d only).
    - adam (AdamState): Resume from this optimizer state.

    Returns:
    - TrainRun

    Raises NumericError when an epoch produces a non-finite loss.
    """
    rng = np.random.default_rng(schedule.seed)
    state = adam or AdamState(learning_rate=schedule.learning_rate)
    params = {name: np.array(value) for name, value in operator.slots().items()}
    best_params = copy.deepcopy(params)
    best_state = copy.deepcopy(state)
    stopper = EarlyStopping(schedule.patience)
    history = []
    stopped = False

    bar = tqdm(
        range(1, schedule.epochs + 1),
        desc=f"Training {problem.family}",
        disable=not schedule.progress,
        mininterval=1.0,
    )
    for epoch in bar:
        members = family.draw(rng)
        batch = problem.collocation(rng, schedule.interior, schedule.boundary)
        member_labels = None
        if labels:
            missing = [m for m in members if float(m) not in labels]
            if missing:
                raise ContractError(f"no labels for family members {missing}")
            member_labels = stack_labels([labels[float(m)] for m in members])

        current = operator.with_slots(params)
        tape = GradientTape()
        recorded = current.watch(tape)
        risk = problem.risk(current, members, batch, weights, member_labels, recorded, loss)
        terms = risk.export()
        if not all(np.isfinite(value) for value in terms.values()):
            raise NumericError("non-finite loss", epoch=epoch, terms=terms)
        grads = tape.gradient(risk.total)

        history.append({"epoch": epoch, **terms})
        improved, stop = stopper.update(epoch, terms["loss_total"])
        if improved:
            best_params = copy.deepcopy(params)
            best_state = copy.deepcopy(state)
        params, state = adam_step(params, grads, state)

        if epoch % schedule.log_every == 0 or epoch == 1:
            bar.set_postfix(loss=f"{terms['loss_total']:.3e}", best=f"{stopper.best:.3e}")
            logger.info("epoch %d: %s", epoch, terms)
        if stop:
            logger.info("early stopping at epoch %d (best epoch %d)", epoch, stopper.best_epoch)
            stopped = True
            break
    bar.close()

    return TrainRun(
        operator.with_slots(best_params),
        best_state,
        history,
        float(stopper.best) if history else float("nan"),
        stopper.best_epoch,
        len(history),
        stopped,
    )
