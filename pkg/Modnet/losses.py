"""
Empirical risks for the supported PDE families.

Every risk takes a *field*: a callable ``field(points, coords=(), pairs=())``
returning a ``Jet`` whose components are (M, K) arrays, one column per family
member. A trained operator, a closed-form solution or an interpolated
reference solution can all be plugged in, so the same code both trains the
networks and checks that known solutions have zero residual.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Jet, channel_layout
from .exceptions import ContractError
from .quadrature import half_range_rule

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossWeights:
    """
    Penalty weights of the risk terms.

    Parameters:
    - pde (float): Interior residual weight (lambda_1).
    - bc (float): Boundary weight (lambda_2).
    - data (float): Label weight (lambda_3).
    - bc_left, bc_right (float): Separate weights for the two ends of a 1-D
      problem; fall back to ``bc``.
    """

    pde: float = 1.0
    bc: float = 1.0
    data: float = 0.0
    bc_left: float = None
    bc_right: float = None

    def __post_init__(self):
        for name in ("pde", "bc", "data", "bc_left", "bc_right"):
            value = getattr(self, name)
            if value is None:
                continue
            if not np.isfinite(value) or value < 0:
                raise ContractError(f"loss weight {name} must be finite and >= 0, got {value}")
            object.__setattr__(self, name, float(value))

    @property
    def left(self):
        return self.bc if self.bc_left is None else self.bc_left

    @property
    def right(self):
        return self.bc if self.bc_right is None else self.bc_right

    def scaled(self, factor):
        return LossWeights(
            self.pde * factor,
            self.bc * factor,
            self.data * factor,
            None if self.bc_left is None else self.bc_left * factor,
            None if self.bc_right is None else self.bc_right * factor,
        )


@dataclass(frozen=True)
class CollocationBatch:
    """
    Points of one training step.

    Parameters:
    - interior (np.ndarray): (M, d) interior points.
    - boundary (dict): segment name -> (n, d) boundary points, in segment order.
    - coefficients (dict): name -> callable of the point coordinates
      (e.g. 'a' for the auxiliary coefficient, 'sigma_t' for transport).
    """

    interior: np.ndarray
    boundary: dict = field(default_factory=dict)
    coefficients: dict = field(default_factory=dict)


@dataclass(frozen=True)
class LabelSet:
    """
    Supervised data for one family member (values (n,)) or for K members
    sharing their points (values (n, K)).

    kind is 'u' for solution values at ``points`` or 'rho' for velocity
    averages at the x coordinates in ``points``.
    """

    kind: str
    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in ("u", "rho"):
            raise ContractError(f"unknown label kind {self.kind!r}")
        points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        values = np.asarray(self.values, dtype=np.float64)
        if len(points) != len(values):
            raise ContractError("labels need one value per point")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.points)


def stack_labels(label_sets):
    """Combine the labels of K family members that share label points."""
    label_sets = list(label_sets)
    first = label_sets[0]
    for other in label_sets[1:]:
        if other.kind != first.kind or not np.array_equal(other.points, first.points):
            raise ContractError("family members must share label kind and points")
    return LabelSet(first.kind, first.points, np.column_stack([ls.values for ls in label_sets]))


@dataclass
class Risk:
    """A weighted risk and its unweighted terms (scalars, possibly tape nodes)."""

    total: object
    terms: dict

    def export(self):
        """Term values as floats, keyed by history column name."""
        values = {"loss_total": float(np.asarray(ad.value_of(self.total)))}
        for name, term in self.terms.items():
            values[name] = float(np.asarray(ad.value_of(term)))
        return values


def average_over_family(per_member, k):
    """
    Average per-member risks: (1/K) * sum_k R_k.

    Parameters:
    - per_member: (K,) array or node, or a list of K scalars.
    - k (int): Family size, K >= 1.
    """
    if k < 1:
        raise ContractError("family size K must be at least 1")
    if isinstance(per_member, (list, tuple)):
        if len(per_member) != k:
            raise ContractError(f"expected {k} member risks, got {len(per_member)}")
        total = per_member[0]
        for value in per_member[1:]:
            total = total + value
        return total * (1.0 / k)
    if np.shape(ad.value_of(per_member))[-1] != k:
        raise ContractError(f"expected {k} member risks")
    return ad.mean(per_member)


def _mean_square(residual):
    """Per-member mean of squared residuals, averaged over the family."""
    per_member = ad.mean(residual * residual, axis=0)
    return average_over_family(per_member, np.shape(ad.value_of(per_member))[-1])


def _check_points(points, what):
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or len(points) == 0:
        raise ContractError(f"{what} point set is empty")
    return points


def _combine(weights, pde, boundary, data, boundary_weights=None):
    """Weighted sum: lambda_1 pde + sum_i w_i bc_i + lambda_3 data."""
    terms = {"loss_pde": pde}
    total = weights.pde * pde
    for name, term in boundary.items():
        terms[name] = term
        weight = weights.bc if boundary_weights is None else boundary_weights[name]
        total = total + weight * term
    if data is not None:
        terms["loss_data"] = data
        total = total + weights.data * data
    return Risk(total, terms)


def _data_term(field_, labels, weights, density_rule=None):
    if labels is None or len(labels) == 0:
        if weights.data > 0:
            raise ContractError("a positive data weight needs labels")
        return None
    if labels.kind == "u":
        predicted = field_(labels.points).value
    else:
        predicted = velocity_average(field_, labels.points[:, 0], density_rule)
    target = labels.values if labels.values.ndim == 2 else labels.values[:, None]
    return _mean_square(predicted - target)


def _zero_boundary(field_, batch):
    terms = {}
    for k, (name, points) in enumerate(batch.boundary.items(), start=1):
        points = _check_points(points, f"boundary {name}")
        terms[f"loss_bc_{k}"] = _mean_square(field_(points).value)
    return terms


def risk_poisson_ls(field_, source, batch, weights, labels=None):
    """
    Least-squares risk for -Laplace(u) = g with u = 0 on the boundary.

    Parameters:
    - field_ (callable): The field (see module docstring).
    - source (callable): points (M, 2) -> (M, K) source values.
    - batch (CollocationBatch): interior points and four boundary segments.
    - weights (LossWeights): lambda_1 (pde), lambda_2 (bc), lambda_3 (data).
    - labels (LabelSet): Optional u-labels.

    Returns:
    - Risk: loss_pde, loss_bc_1..4, and loss_data when labels are given.
    """
    interior = _check_points(batch.interior, "interior")
    jet = field_(interior, (0, 1), ((0, 0), (1, 1)))
    residual = -(jet.second(0, 0) + jet.second(1, 1)) - source(interior)
    return _combine(
        weights,
        _mean_square(residual),
        _zero_boundary(field_, batch),
        _data_term(field_, labels, weights),
    )


def risk_poisson_vi(field_, source, batch, weights, labels=None):
    """
    Variational (Ritz) risk: mean of |grad u|^2 / 2 - g u plus boundary
    penalties. Same arguments as ``risk_poisson_ls``.
    """
    interior = _check_points(batch.interior, "interior")
    jet = field_(interior, (0, 1))
    ux, uy = jet.first(0), jet.first(1)
    density = 0.5 * (ux * ux + uy * uy) - source(interior) * jet.value
    per_member = ad.mean(density, axis=0)
    energy = average_over_family(per_member, np.shape(ad.value_of(per_member))[-1])
    return _combine(
        weights,
        energy,
        _zero_boundary(field_, batch),
        _data_term(field_, labels, weights),
    )


def risk_auxiliary(field_, source, batch, weights, labels=None):
    """
    Risk for u_x + a(x, y) u = g with u = 0 on all four sides.

    The coefficient is read from ``batch.coefficients['a']``.
    """
    interior = _check_points(batch.interior, "interior")
    coefficient = batch.coefficients["a"](interior[:, 0:1], interior[:, 1:2])
    jet = field_(interior, (0,))
    residual = jet.first(0) + coefficient * jet.value - source(interior)
    return _combine(
        weights,
        _mean_square(residual),
        _zero_boundary(field_, batch),
        _data_term(field_, labels, weights),
    )


def risk_nonlinear(field_, source, batch, weights, labels=None, cubic=0.01):
    """Risk for -Laplace(u) + cubic * u^3 = g with u = 0 on the boundary."""
    interior = _check_points(batch.interior, "interior")
    jet = field_(interior, (0, 1), ((0, 0), (1, 1)))
    u = jet.value
    residual = -(jet.second(0, 0) + jet.second(1, 1)) + cubic * u * u * u - source(interior)
    return _combine(
        weights,
        _mean_square(residual),
        _zero_boundary(field_, batch),
        _data_term(field_, labels, weights),
    )


def velocity_average(field_, x, rule=None):
    """
    rho(x) = 1/2 * sum_j w_j u(x, v_j) over a velocity rule on (-1, 1).

    Returns:
    - (M, K) values.
    """
    rule = half_range_rule(30) if rule is None else rule
    x = np.asarray(x, dtype=np.float64).ravel()
    m, n = len(x), len(rule)
    points = np.column_stack([np.repeat(x, n), np.tile(rule.nodes, m)])
    values = field_(points).value
    k = np.shape(ad.value_of(values))[-1]
    blocks = ad.reshape(values, (m, n, k))
    return ad.sum_(blocks * (0.5 * rule.weights)[None, :, None], axis=1)


def risk_rte(
    field_,
    inflow,
    batch,
    weights,
    labels=None,
    velocity_rule=None,
    density_rule=None,
):
    """
    Risk for the steady transport equation
    eps v u_x + sigma_t u = (sigma_t - eps^2 sigma_a) rho on (x_L, x_R) x (-1, 1),
    written as v u_x + (sigma_t / eps) u - (sigma_t / eps - eps sigma_a) rho.

    Parameters:
    - field_ (callable): Field over points (x, v).
    - inflow (tuple): (phi_left, phi_right), each mapping velocities (n,) to
      (n, K) inflow values.
    - batch (CollocationBatch): interior (x, v) points and boundary segments
      'left' (v > 0 at x_L) and 'right' (v < 0 at x_R); coefficients
      'sigma_t', 'sigma_a', 'epsilon' as functions of x.
    - weights (LossWeights): pde, bc_left, bc_right, data.
    - labels (LabelSet): u-labels at (x, v) or rho-labels at x.
    - velocity_rule (QuadratureRule): rule for rho inside the residual.
    - density_rule (QuadratureRule): rule for rho-labels.

    Returns:
    - Risk: loss_pde, loss_bc_L, loss_bc_R, loss_data.
    """
    interior = _check_points(batch.interior, "interior")
    x, v = interior[:, 0:1], interior[:, 1:2]
    sigma_t = batch.coefficients["sigma_t"](x)
    sigma_a = batch.coefficients["sigma_a"](x)
    epsilon = batch.coefficients["epsilon"](x)
    jet = field_(interior, (0,))
    rho = velocity_average(field_, x.ravel(), velocity_rule)
    residual = (
        v * jet.first(0)
        + (sigma_t / epsilon) * jet.value
        - (sigma_t / epsilon - epsilon * sigma_a) * rho
    )
    phi_left, phi_right = inflow
    left = _check_points(batch.boundary["left"], "left boundary")
    right = _check_points(batch.boundary["right"], "right boundary")
    boundary = {
        "loss_bc_L": _mean_square(field_(left).value - phi_left(left[:, 1])),
        "loss_bc_R": _mean_square(field_(right).value - phi_right(right[:, 1])),
    }
    return _combine(
        weights,
        _mean_square(residual),
        boundary,
        _data_term(field_, labels, weights, density_rule),
        {"loss_bc_L": weights.left, "loss_bc_R": weights.right},
    )


def risk_burgers(field_, boundary_values, batch, weights, labels=None, nu=1.0):
    """
    Risk for the steady viscous Burgers equation (u^2/2)_x - nu u_xx = 0 on
    (-1, 1) with Dirichlet ends.

    Parameters:
    - boundary_values (np.ndarray): (K, 2) values phi(-1), phi(1) per member.
    - weights: pde, bc_left (x = -1), bc_right (x = 1), data.
    """
    interior = _check_points(batch.interior, "interior")
    jet = field_(interior, (0,), ((0, 0),))
    residual = jet.value * jet.first(0) - nu * jet.second(0, 0)
    boundary_values = np.atleast_2d(np.asarray(boundary_values, dtype=np.float64))
    ends = field_(np.array([[-1.0], [1.0]])).value
    boundary = {
        "loss_bc_L": _mean_square(ends[0:1] - boundary_values[:, 0][None, :]),
        "loss_bc_R": _mean_square(ends[1:2] - boundary_values[:, 1][None, :]),
    }
    return _combine(
        weights,
        _mean_square(residual),
        boundary,
        _data_term(field_, labels, weights),
        {"loss_bc_L": weights.left, "loss_bc_R": weights.right},
    )


def closed_form_field(function, parameters):
    """
    Wrap ``function(p, *coordinates)`` as a field over K parameter values.

    ``p`` arrives as a (1, K) array and each coordinate as an (M, 1) jet, so
    any closed form written with the ``autodiff`` elementwise helpers gives
    exact derivatives.
    """
    parameters = np.asarray(parameters, dtype=np.float64).reshape(1, -1)
    ones = np.ones_like(parameters)

    def field_(points, coords=(), pairs=()):
        points = np.asarray(points, dtype=np.float64)
        coords, pairs = channel_layout(coords, pairs)
        variables = [
            Jet.variable(points[:, i : i + 1], i, coords, pairs) for i in range(points.shape[1])
        ]
        out = Jet.lift(function(parameters, *variables)) * ones
        return Jet(out.value, out.d1, out.d2, coords, pairs).full()

    return field_
