"""
Reference solutions: closed forms for the elliptic families and finite
difference / discrete-ordinates solvers for transport and Burgers.

Closed forms are written with the ``autodiff`` elementwise helpers so that
they accept numbers, arrays and jets alike.
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import polars as pl
from scipy.interpolate import RegularGridInterpolator
from scipy.linalg import solve_banded

from . import autodiff as ad
from .autodiff import Jet
from .exceptions import ContractError, SolverError
from .losses import LabelSet
from .quadrature import half_range_rule

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------


def poisson_exact(a, x, y):
    """u = a/2 * x(x-1) * y(y-1), the solution of -Laplace(u) = g_a on the unit square."""
    return 0.5 * a * x * (x - 1.0) * y * (y - 1.0)


def poisson_source(a, x, y):
    """g_a = -a (x^2 - x + y^2 - y)."""
    return -a * (x * x - x + y * y - y)


def nonlinear_exact(a, x, y):
    """Solution of -Laplace(u) + c u^3 = g_a; the nonlinear family shares the Poisson closed form."""
    return poisson_exact(a, x, y)


def nonlinear_source(a, x, y, cubic=0.01):
    """Source of -Laplace(u) + cubic u^3 = g that makes ``nonlinear_exact`` the solution."""
    u = nonlinear_exact(a, x, y)
    return poisson_source(a, x, y) + cubic * u * u * u


def _value(x):
    return np.asarray(ad.value_of(x.value if isinstance(x, Jet) else x), dtype=np.float64)


def _check_auxiliary_domain(x, y):
    xv, yv = _value(x), _value(y)
    if np.any(xv < 0) or np.any(xv > 1) or np.any(yv < 1) or np.any(yv > 2):
        raise ContractError("auxiliary problem is defined on [0, 1] x [1, 2]")


def _auxiliary_branch(x, y):
    below = _value(y) < 1.5
    return ad.where(below, ad.cos(np.pi * y), ad.sin(2.0 * np.pi * y))


def auxiliary_coeff(x, y):
    """a(x, y) = (sin(4 pi x y) + 2) / y."""
    _check_auxiliary_domain(x, y)
    return (ad.sin(4.0 * np.pi * x * y) + 2.0) / y


def auxiliary_exact(x, y):
    """
    u = x(x-1)(y-1)(y-2)(x + h(y)) with h = cos(pi y) for y < 1.5 and
    h = sin(2 pi y) otherwise.
    """
    _check_auxiliary_domain(x, y)
    return x * (x - 1.0) * (y - 1.0) * (y - 2.0) * (x + _auxiliary_branch(x, y))


def auxiliary_source(x, y):
    """g = u_x + a u for ``auxiliary_exact``, expanded."""
    _check_auxiliary_domain(x, y)
    h = _auxiliary_branch(x, y)
    factor = 2.0 * x - 1.0 + x * (x - 1.0) * (2.0 + ad.sin(4.0 * np.pi * x * y)) / y
    return (y * y - 3.0 * y + 2.0) * (x * x - x + factor * (x + h))


# ---------------------------------------------------------------------------
# Grid solutions
# ---------------------------------------------------------------------------


@dataclass
class GridSolution:
    """
    Values on a tensor grid.

    Parameters:
    - axes (dict): axis name -> increasing 1-D coordinates, in array order.
    - values (np.ndarray): shape (len(axis_1), len(axis_2), ...).
    - metadata (dict): solver details (scheme, resolution, iterations, ...).
    """

    axes: dict
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.axes = {name: np.asarray(a, dtype=np.float64) for name, a in self.axes.items()}
        self.values = np.asarray(self.values, dtype=np.float64)
        shape = tuple(len(a) for a in self.axes.values())
        if self.values.shape != shape:
            raise ContractError(f"values {self.values.shape} do not match axes {shape}")

    @property
    def names(self):
        return list(self.axes)

    def points(self):
        """All grid points as an (N, d) array, first axis varying slowest."""
        mesh = np.meshgrid(*self.axes.values(), indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def interpolate(self, points):
        """(Bi)linear interpolation at (N, d) points; extrapolates at the edges."""
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if len(self.axes) == 1:
            (axis,) = self.axes.values()
            return np.interp(points[:, 0], axis, self.values)
        interpolator = RegularGridInterpolator(
            tuple(self.axes.values()), self.values, bounds_error=False, fill_value=None
        )
        return interpolator(points)

    def to_frame(self, column="u"):
        frame = {name: col for name, col in zip(self.names, self.points().T)}
        frame[column] = self.values.ravel()
        return pl.DataFrame(frame)

    @classmethod
    def from_frame(cls, frame, axes, column="u", metadata=None):
        coordinates = {name: np.unique(frame[name].to_numpy()) for name in axes}
        shape = tuple(len(c) for c in coordinates.values())
        ordered = frame.sort(list(axes))
        return cls(coordinates, ordered[column].to_numpy().reshape(shape), dict(metadata or {}))


def metrics(predicted, reference):
    """
    Error metrics of a prediction against a reference on the same points.

    Returns:
    - dict: rmse, relative_error (l2, None when the reference is zero and the
      prediction is not), max_error.
    """
    predicted = np.asarray(getattr(predicted, "values", predicted), dtype=np.float64).ravel()
    reference = np.asarray(getattr(reference, "values", reference), dtype=np.float64).ravel()
    if predicted.shape != reference.shape or predicted.size == 0:
        raise ContractError("prediction and reference must be non-empty and of equal size")
    diff = predicted - reference
    ref_norm = np.linalg.norm(reference)
    diff_norm = np.linalg.norm(diff)
    if ref_norm > 0:
        relative = float(diff_norm / ref_norm)
    elif diff_norm == 0:
        relative = 0.0
    else:
        logger.warning("relative error undefined for a zero reference")
        relative = None
    return {
        "rmse": float(np.sqrt(np.mean(diff * diff))),
        "relative_error": relative,
        "max_error": float(np.max(np.abs(diff))),
    }


# ---------------------------------------------------------------------------
# Radiative transfer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RteCoefficients:
    """Total cross section, absorption and Knudsen number as functions of x."""

    sigma_t: object
    sigma_a: object
    epsilon: object

    def evaluate(self, x):
        x = np.asarray(x, dtype=np.float64)
        sigma_t = np.broadcast_to(np.asarray(self.sigma_t(x), dtype=np.float64), x.shape)
        sigma_a = np.broadcast_to(np.asarray(self.sigma_a(x), dtype=np.float64), x.shape)
        epsilon = np.broadcast_to(np.asarray(self.epsilon(x), dtype=np.float64), x.shape)
        if np.any(sigma_t <= 0) or np.any(epsilon <= 0) or np.any(sigma_a < 0):
            raise ContractError("sigma_t and epsilon must be positive, sigma_a non-negative")
        return sigma_t, sigma_a, epsilon


def _constant(value):
    return lambda x: np.full(np.shape(x), float(value))


def example_rte_coefficients():
    """sigma_t = x + 1, sigma_a = x for x < 1; both constant (2 and 1) beyond; eps = 1."""
    return RteCoefficients(
        lambda x: np.where(np.asarray(x) < 1.0, np.asarray(x) + 1.0, 2.0),
        lambda x: np.where(np.asarray(x) < 1.0, np.asarray(x), 1.0),
        _constant(1.0),
    )


def constant_rte_coefficients(sigma_t, sigma_a, epsilon=1.0):
    return RteCoefficients(_constant(sigma_t), _constant(sigma_a), _constant(epsilon))


def _sweep(mu, inflow, scale, source, h):
    """
    Implicit upwind sweep of mu u_x + scale u = source along x for each
    velocity in ``mu`` (all of one sign).

    Returns:
    - (nx + 1, len(mu)) values.
    """
    n = len(scale)
    u = np.empty((n, len(mu)))
    if len(mu) == 0:
        return u
    speed = np.abs(mu) / h
    if np.all(mu > 0):
        u[0] = inflow
        for i in range(1, n):
            u[i] = (speed * u[i - 1] + source[i]) / (speed + scale[i])
    else:
        u[-1] = inflow
        for i in range(n - 2, -1, -1):
            u[i] = (speed * u[i + 1] + source[i]) / (speed + scale[i])
    return u


def _sweep_all(mu, phi_left, phi_right, scale, source, h):
    u = np.empty((len(scale), len(mu)))
    positive, negative, still = mu > 0, mu < 0, mu == 0
    u[:, positive] = _sweep(mu[positive], phi_left(mu[positive]), scale, source, h)
    u[:, negative] = _sweep(mu[negative], phi_right(mu[negative]), scale, source, h)
    if np.any(still):
        u[:, still] = (source / scale)[:, None]
    return u


def rte_solve(
    coefficients,
    phi_left,
    phi_right,
    nx,
    nv,
    x_left=0.0,
    x_right=2.0,
    tol=1e-10,
    max_iterations=20000,
):
    """
    Discrete-ordinates solve of the steady transport equation with inflow
    boundaries, by source iteration over first-order implicit upwind sweeps.

    Parameters:
    - coefficients (RteCoefficients): sigma_t, sigma_a, epsilon.
    - phi_left (callable): Inflow at x_left for v > 0, vectorized in v.
    - phi_right (callable): Inflow at x_right for v < 0.
    - nx (int): Number of cells (nx + 1 grid nodes).
    - nv (int): Even number of ordinates (half-range Gauss nodes).
    - tol (float): Sup-norm change of the density that ends the iteration.

    Returns:
    - GridSolution: axes x and v (the ordinates); metadata holds the density,
      the ordinate weights and the iteration count.

    Raises SolverError when the iteration cap is reached.
    """
    if nx < 2 or nv < 2 or nv % 2:
        raise ContractError(f"need nx >= 2 and an even nv >= 2, got nx={nx}, nv={nv}")
    if not x_right > x_left:
        raise ContractError("empty slab")
    x = np.linspace(x_left, x_right, nx + 1)
    h = (x_right - x_left) / nx
    rule = half_range_rule(nv)
    mu, w = rule.nodes, rule.weights
    sigma_t, sigma_a, epsilon = coefficients.evaluate(x)
    scale = sigma_t / epsilon
    scattering = sigma_t / epsilon - epsilon * sigma_a

    rho = np.zeros_like(x)
    for iteration in range(1, max_iterations + 1):
        u = _sweep_all(mu, phi_left, phi_right, scale, scattering * rho, h)
        updated = 0.5 * u @ w
        change = float(np.max(np.abs(updated - rho)))
        rho = updated
        if change < tol:
            break
    else:
        raise SolverError(
            f"source iteration did not converge in {max_iterations} iterations (change {change:.3e})"
        )
    logger.info("rte_solve converged in %d iterations (nx=%d, nv=%d)", iteration, nx, nv)
    return GridSolution(
        {"x": x, "v": mu},
        u,
        {
            "scheme": "discrete-ordinates/implicit-upwind/source-iteration",
            "nx": nx,
            "nv": nv,
            "iterations": iteration,
            "density": rho,
            "weights": w,
        },
    )


def density_grid(solution):
    """The converged density of an ``rte_solve`` result as a grid over x."""
    return GridSolution({"x": solution.axes["x"]}, solution.metadata["density"], {"scheme": solution.metadata["scheme"]})


def rte_profile(density, coefficients, phi_left, phi_right, velocities):
    """
    The solution at arbitrary velocities, by one sweep per velocity against
    the scattering source of a converged density (see ``density_grid``).

    Returns:
    - GridSolution on (solution's x nodes) x (velocities, sorted).
    """
    x = density.axes["x"]
    velocities = np.sort(np.asarray(velocities, dtype=np.float64).ravel())
    if np.any(np.abs(velocities) > 1):
        raise ContractError("velocities must lie in [-1, 1]")
    sigma_t, sigma_a, epsilon = coefficients.evaluate(x)
    scale = sigma_t / epsilon
    source = (sigma_t / epsilon - epsilon * sigma_a) * density.values
    h = x[1] - x[0]
    values = _sweep_all(velocities, phi_left, phi_right, scale, source, h)
    return GridSolution({"x": x, "v": velocities}, values, dict(density.metadata))


# ---------------------------------------------------------------------------
# Burgers
# ---------------------------------------------------------------------------


def _burgers_residual(u, nu, h):
    """Net numerical flux per cell (times h) at the interior nodes."""
    left, right = u[:-1], u[1:]
    flux = 0.5 * np.maximum(left, 0.0) ** 2 + 0.5 * np.minimum(right, 0.0) ** 2
    flux = flux - nu * (right - left) / h
    return flux[1:] - flux[:-1]


def _burgers_jacobian(u, nu, h):
    """Banded (1, 1) Jacobian of ``_burgers_residual`` w.r.t. the interior nodes."""
    inner = u[1:-1]
    n = len(inner)
    bands = np.zeros((3, n))
    # d R_i / d u_{i+1}
    bands[0, 1:] = np.minimum(u[2:-1], 0.0) - nu / h
    # d R_i / d u_i
    bands[1] = np.maximum(inner, 0.0) - np.minimum(inner, 0.0) + 2.0 * nu / h
    # d R_i / d u_{i-1}
    bands[2, :-1] = -np.maximum(u[1:-2], 0.0) - nu / h
    return bands


def burgers_solve(nu, u_left, u_right, nx, tol=1e-10, max_iterations=200):
    """
    Steady viscous Burgers (u^2/2)_x = nu u_xx on [-1, 1] with Dirichlet ends.

    Conservative finite differences with the Engquist-Osher flux. Damped
    Newton from the linear profile; falls back to implicit pseudo-time
    stepping when Newton stalls.

    Parameters:
    - nu (float): Viscosity, > 0.
    - u_left, u_right (float): Boundary values at x = -1 and x = 1.
    - nx (int): Number of grid nodes, >= 3.
    - tol (float): Sup-norm target of the per-cell residual.

    Returns:
    - GridSolution on axis x.

    Raises SolverError if neither method converges.
    """
    if nx < 3:
        raise ContractError(f"need at least 3 grid nodes, got {nx}")
    if not nu > 0:
        raise ContractError(f"viscosity must be positive, got {nu}")
    x = np.linspace(-1.0, 1.0, nx)
    h = x[1] - x[0]
    u = u_left + (u_right - u_left) * (x + 1.0) / 2.0

    def norm(v):
        return float(np.max(np.abs(_burgers_residual(v, nu, h))))

    residual = norm(u)
    method = "newton"
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        if residual < tol:
            break
        step = solve_banded((1, 1), _burgers_jacobian(u, nu, h), -_burgers_residual(u, nu, h))
        damping = 1.0
        while damping > 1e-4:
            trial = u.copy()
            trial[1:-1] += damping * step
            trial_residual = norm(trial)
            if trial_residual < residual:
                break
            damping *= 0.5
        else:
            break
        u, residual = trial, trial_residual

    if residual >= tol:
        logger.warning("Newton stalled at residual %.3e; switching to pseudo-time stepping", residual)
        method = "pseudo-time"
        dtau = h
        for iterations in range(1, 50 * max_iterations + 1):
            bands = _burgers_jacobian(u, nu, h)
            bands[1] += 1.0 / dtau
            u[1:-1] += solve_banded((1, 1), bands, -_burgers_residual(u, nu, h))
            new_residual = norm(u)
            dtau = min(dtau * 2.0, 1e6) if new_residual < residual else max(dtau * 0.5, 1e-8)
            residual = new_residual
            if residual < tol:
                break
        else:
            raise SolverError(f"Burgers solver did not converge (residual {residual:.3e})")
    logger.info("burgers_solve: %s converged in %d iterations", method, iterations)
    return GridSolution(
        {"x": x},
        u,
        {"scheme": f"engquist-osher/{method}", "nx": nx, "iterations": iterations, "residual": residual},
    )


# ---------------------------------------------------------------------------
# Labels and caching
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LabelSpec:
    """
    Where labels are taken.

    kind 'u': a counts[0] x counts[1] equidistant grid over the problem's
    domain (or counts[0] points for 1-D problems). kind 'rho': counts[0]
    equidistant x values.
    """

    kind: str
    counts: tuple

    def __post_init__(self):
        if self.kind not in ("u", "rho"):
            raise ContractError(f"unknown label kind {self.kind!r}")
        counts = tuple(int(c) for c in self.counts)
        if not counts or min(counts) < 1:
            raise ContractError(f"label counts must be positive, got {self.counts}")
        object.__setattr__(self, "counts", counts)


def make_labels(problem, parameter, spec, rule=None, cache_dir=None):
    """
    Labels for one family member, from its closed form or reference solver.

    Parameters:
    - problem: A problem from ``Modnet.problems``.
    - parameter (float): The family parameter.
    - spec (LabelSpec): Label kind and grid.
    - rule (QuadratureRule): Velocity rule for rho-labels (30 half-range
      nodes by default).

    Returns:
    - LabelSet
    """
    points = problem.label_points(spec)
    if spec.kind == "rho":
        rule = half_range_rule(30) if rule is None else rule
        values = problem.reference_density(parameter, points[:, 0], rule, cache_dir=cache_dir)
    else:
        values = problem.reference_values(parameter, points, cache_dir=cache_dir)
    return LabelSet(spec.kind, points, values)


def cache_key(**fields):
    """Stable hash of the quantities that determine a reference solution."""
    text = json.dumps(fields, sort_keys=True, default=lambda v: np.asarray(v).tolist())
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def cached_grid(cache_dir, name, key, axes, compute):
    """
    Load a GridSolution from ``<cache_dir>/<name>-<key>.csv`` or compute and
    store it. No caching when ``cache_dir`` is None.
    """
    if cache_dir is None:
        return compute()
    path = Path(cache_dir) / f"{name}-{key}.csv"
    if path.exists():
        logger.info("Reading cached reference %s", path)
        return GridSolution.from_frame(pl.read_csv(path), axes)
    solution = compute()
    path.parent.mkdir(parents=True, exist_ok=True)
    solution.to_frame().write_csv(path)
    return solution
