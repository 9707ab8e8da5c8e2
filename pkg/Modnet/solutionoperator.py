"""
The solution operator: Green's function networks contracted against source
or boundary data with a fixed quadrature rule.

For the linear interior families u(x) = sum_j w_j G(x, x'_j) g(x'_j); the
transport family integrates two Green's functions over the inflow
velocities; the nonlinear families pass that sum through an outer network F.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import GradientTape, Jet, channel_layout
from .exceptions import ContractError
from .losses import velocity_average
from .network import MlpNetwork, jet_stack, network_jet
from .quadrature import QuadratureRule

logger = logging.getLogger(__name__)

FAMILIES = ("poisson2d", "auxiliary2d", "rte1d", "burgers1d", "nonlinearpoisson2d")
INTERIOR_FAMILIES = ("poisson2d", "auxiliary2d", "nonlinearpoisson2d")
OUTER_FAMILIES = ("burgers1d", "nonlinearpoisson2d")


@dataclass(frozen=True)
class SourceSample:
    """
    Data the operator integrates against, sampled at the rule's nodes.

    - interior families: ``values`` = g at the tensor nodes.
    - rte1d: ``values`` = phi_L at the positive-velocity nodes, ``right`` =
      phi_R at the negative-velocity nodes.
    - burgers1d: ``values`` = (phi(-1), phi(1)).
    """

    values: np.ndarray
    right: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.right is not None:
            object.__setattr__(self, "right", np.asarray(self.right, dtype=np.float64))
        arrays = [self.values] + ([] if self.right is None else [self.right])
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise ContractError("source samples must be finite")


@dataclass
class ModNetOperator:
    """
    Networks and quadrature of one operator.

    Parameters:
    - family (str): One of FAMILIES.
    - green (dict): 'G' for the interior families, 'GL' and 'GR' for
      rte1d and burgers1d.
    - outer (MlpNetwork): F, for the nonlinear families only.
    - interior_rule (tuple): (nodes (n, 2), weights (n,)) for the interior families.
    - positive_rule, negative_rule (QuadratureRule): inflow velocity rules (rte1d).
    - chunk_rows (int): Largest number of network rows evaluated at once on
      a tape; larger Green's sums are recomputed chunk by chunk in the
      backward pass.
    """

    family: str
    green: dict
    outer: MlpNetwork = None
    interior_rule: tuple = None
    positive_rule: QuadratureRule = None
    negative_rule: QuadratureRule = None
    chunk_rows: int = 32768
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ContractError(f"unknown family {self.family!r}")
        expected = ("GL", "GR") if self.family in ("rte1d", "burgers1d") else ("G",)
        if tuple(sorted(self.green)) != expected:
            raise ContractError(f"{self.family} needs Green's networks {expected}, got {tuple(self.green)}")
        if (self.outer is not None) != (self.family in OUTER_FAMILIES):
            raise ContractError(f"outer network F is required exactly for {OUTER_FAMILIES}")
        if self.family == "rte1d":
            for net in self.green.values():
                if net.output_transform != "exponential" or net.input_size != 3:
                    raise ContractError("transport Green's networks take (x, v, v') and use the exponential output")
            if self.positive_rule is None or self.negative_rule is None:
                raise ContractError("rte1d needs inflow velocity rules")
            if np.any(self.positive_rule.nodes <= 0) or np.any(self.negative_rule.nodes >= 0):
                raise ContractError("inflow rules must cover v > 0 and v < 0 respectively")
        if self.family in INTERIOR_FAMILIES:
            if self.interior_rule is None or self.green["G"].input_size != 4:
                raise ContractError("interior families need a tensor rule and G over (x, y, x', y')")
        if self.family == "burgers1d" and any(net.input_size != 1 for net in self.green.values()):
            raise ContractError("Burgers Green's networks take x only")

    def networks(self):
        """All networks keyed by name ('F' for the outer network)."""
        nets = dict(self.green)
        if self.outer is not None:
            nets["F"] = self.outer
        return nets

    def slots(self):
        """Every parameter array keyed by slot name."""
        named = {}
        for name, net in self.networks().items():
            named.update(net.slots(name))
        return named

    def with_slots(self, values):
        """A copy of the operator using the parameter arrays in ``values``."""
        nets = {name: net.with_slots(name, values) for name, net in self.networks().items()}
        outer = nets.pop("F", None)
        return ModNetOperator(
            self.family,
            nets,
            outer,
            self.interior_rule,
            self.positive_rule,
            self.negative_rule,
            self.chunk_rows,
            dict(self.metadata),
        )

    def watch(self, tape):
        """Put every parameter on ``tape``; returns name -> list of (W, b) nodes."""
        return {name: net.watch(tape, name) for name, net in self.networks().items()}


def _green_rows(points, nodes):
    m, n = len(points), len(nodes)
    return np.hstack([np.repeat(points, n, axis=0), np.tile(nodes, (m, 1))])


def _unflatten(flat):
    return [(flat[i], flat[i + 1]) for i in range(0, len(flat), 2)]


def _green_chunk(net, params, points, nodes, coefficient, coords, pairs):
    stacked, _, _ = jet_stack(net, _green_rows(points, nodes), coords, pairs, params)
    channels = len(ad.value_of(stacked))
    blocks = ad.reshape(stacked, (channels, len(points), len(nodes)))
    return ad.matmul(blocks, coefficient)


def green_sum(net, params, points, nodes, coefficient, coords=(), pairs=(), chunk_rows=32768):
    """
    sum_j G(p, node_j) * coefficient[j, k] for every point p and member k,
    with derivative channels along the point coordinates.

    Parameters:
    - net (MlpNetwork): G over (point, node) concatenated.
    - params (list): (W, b) pairs, arrays or tape nodes.
    - points (np.ndarray): (M, p) evaluation points.
    - nodes (np.ndarray): (n, q) quadrature nodes.
    - coefficient (np.ndarray): (n, K) quadrature weight times source value.

    Returns:
    - Jet with (M, K) components.
    """
    coords, pairs = channel_layout(coords, pairs)
    points = np.asarray(points, dtype=np.float64)
    nodes = np.asarray(nodes, dtype=np.float64).reshape(len(nodes), -1)
    params = net.parameters() if params is None else params
    flat = [p for pair in params for p in pair]
    per_chunk = max(1, chunk_rows // len(nodes))
    recorded = any(isinstance(p, ad.Node) for p in flat)

    if not recorded:
        stacked = np.concatenate(
            [
                _green_chunk(net, params, points[s : s + per_chunk], nodes, coefficient, coords, pairs)
                for s in range(0, len(points), per_chunk)
            ],
            axis=1,
        )
        return Jet.from_stack(stacked, coords, pairs)
    if len(points) <= per_chunk:
        stacked = _green_chunk(net, params, points, nodes, coefficient, coords, pairs)
        return Jet.from_stack(stacked, coords, pairs)

    def forward(*values):
        pairs_ = _unflatten(values)
        return np.concatenate(
            [
                _green_chunk(net, pairs_, points[s : s + per_chunk], nodes, coefficient, coords, pairs)
                for s in range(0, len(points), per_chunk)
            ],
            axis=1,
        )

    def vjp(g, out, *values):
        grads = [np.zeros_like(v) for v in values]
        for s in range(0, len(points), per_chunk):
            tape = GradientTape()
            leaves = [tape.watch(str(i), v) for i, v in enumerate(values)]
            chunk = _green_chunk(
                net, _unflatten(leaves), points[s : s + per_chunk], nodes, coefficient, coords, pairs
            )
            inner = ad.sum_(chunk * g[:, s : s + per_chunk])
            for i, grad in enumerate(tape.gradient(inner).values()):
                grads[i] += grad
        return tuple(grads)

    stacked = ad.primitive("green_sum", forward, vjp, *flat)
    return Jet.from_stack(stacked, coords, pairs)


def _stack(samples, attribute="values"):
    if isinstance(samples, SourceSample):
        samples = [samples]
    arrays = [getattr(s, attribute) for s in samples]
    if any(a is None for a in arrays):
        raise ContractError(f"source samples lack {attribute}")
    return np.stack([np.atleast_1d(a) for a in arrays])


def _params(op, params, name):
    if params is None:
        return op.networks()[name].parameters()
    return params[name]


def _outer(op, inner, params):
    """F applied elementwise to an (M, K) jet."""
    m, k = inner.shape
    flat = inner.reshape((m * k, 1))
    stacked, coords, pairs = jet_stack(op.outer, flat, params=_params(op, params, "F"))
    return Jet.from_stack(stacked, coords, pairs).reshape((m, k))


def interior_jet(op, samples, points, coords=(), pairs=(), params=None):
    """The linear Green's sum for interior families; (M, K) components."""
    if op.family not in INTERIOR_FAMILIES:
        raise ContractError(f"{op.family} has no interior Green's sum")
    nodes, weights = op.interior_rule
    values = _stack(samples)
    if values.shape[1] != len(nodes):
        raise ContractError(f"expected {len(nodes)} source samples per member, got {values.shape[1]}")
    coefficient = weights[:, None] * values.T
    return green_sum(
        op.green["G"], _params(op, params, "G"), points, nodes, coefficient, coords, pairs, op.chunk_rows
    )


def rte_jet(op, samples, points, coords=(), pairs=(), params=None):
    """Transport solution over points (x, v); only x derivatives are meaningful."""
    if op.family != "rte1d":
        raise ContractError(f"{op.family} is not a transport family")
    left, right = _stack(samples), _stack(samples, "right")
    if left.shape[1] != len(op.positive_rule) or right.shape[1] != len(op.negative_rule):
        raise ContractError("inflow samples do not match the inflow rules")
    coefficient_left = op.positive_rule.weights[:, None] * left.T
    coefficient_right = op.negative_rule.weights[:, None] * right.T
    return green_sum(
        op.green["GL"], _params(op, params, "GL"), points, op.positive_rule.nodes,
        coefficient_left, coords, pairs, op.chunk_rows,
    ) + green_sum(
        op.green["GR"], _params(op, params, "GR"), points, op.negative_rule.nodes,
        coefficient_right, coords, pairs, op.chunk_rows,
    )


def burgers_jet(op, samples, points, coords=(), pairs=(), params=None):
    """F(G_L(x) phi(-1) + G_R(x) phi(1)) at (M, 1) points."""
    if op.family != "burgers1d":
        raise ContractError(f"{op.family} is not the Burgers family")
    ends = _stack(samples)
    if ends.shape[1] != 2:
        raise ContractError("Burgers samples are (phi(-1), phi(1))")
    left = network_jet(op.green["GL"], points, coords, pairs, _params(op, params, "GL"))
    right = network_jet(op.green["GR"], points, coords, pairs, _params(op, params, "GR"))
    inner = left * ends[:, 0][None, :] + right * ends[:, 1][None, :]
    return _outer(op, inner.full(), params)


def solution_jet(op, samples, points, coords=(), pairs=(), params=None):
    """Dispatch to the family's evaluation; components are (M, K)."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if op.family == "rte1d":
        return rte_jet(op, samples, points, coords, pairs, params)
    if op.family == "burgers1d":
        return burgers_jet(op, samples, points, coords, pairs, params)
    inner = interior_jet(op, samples, points, coords, pairs, params)
    if op.family == "nonlinearpoisson2d":
        return _outer(op, inner, params)
    return inner


def operator_field(op, samples, params=None):
    """The operator as a field for the risk functions."""

    def field_(points, coords=(), pairs=()):
        return solution_jet(op, samples, points, coords, pairs, params)

    return field_


def _single(op, families, sample, point):
    if op.family not in families:
        raise ContractError(f"operation not defined for family {op.family!r}")
    jet = solution_jet(op, [sample], np.asarray([point], dtype=np.float64))
    return float(np.asarray(jet.value)[0, 0])


def eval_poisson(op, src, x, y):
    """u(x, y) for a linear interior family (poisson2d or auxiliary2d)."""
    return _single(op, ("poisson2d", "auxiliary2d"), src, (x, y))


def eval_nonlinear(op, src, x, y):
    return _single(op, ("nonlinearpoisson2d",), src, (x, y))


def eval_rte(op, bc, x, v):
    return _single(op, ("rte1d",), bc, (x, v))


def eval_burgers(op, bc, x):
    return _single(op, ("burgers1d",), bc, (x,))


def density(op, bc, x, rho_rule):
    """rho(x) = 1/2 sum_j w_j u(x, xi_j) for one member."""
    if op.family != "rte1d":
        raise ContractError("density is defined for the transport family only")
    values = velocity_average(operator_field(op, [bc]), [x], rho_rule)
    return float(np.asarray(values)[0, 0])
