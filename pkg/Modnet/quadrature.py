"""Gauss-Legendre rules used to discretize the Green's function integrals"""

import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import ContractError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class QuadratureRule:
    """
    Nodes and weights on an interval (a, b).

    Nodes lie strictly inside the interval in increasing order and the
    weights are positive.
    """

    nodes: np.ndarray
    weights: np.ndarray
    interval: tuple = (-1.0, 1.0)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        a, b = (float(v) for v in self.interval)
        if nodes.ndim != 1 or nodes.shape != weights.shape or len(nodes) == 0:
            raise ContractError("nodes and weights must be non-empty vectors of equal length")
        if not (a < b and np.all(nodes > a) and np.all(nodes < b)):
            raise ContractError(f"nodes must lie strictly inside ({a}, {b})")
        if np.any(np.diff(nodes) <= 0) or np.any(weights <= 0):
            raise ContractError("nodes must increase and weights must be positive")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "interval", (a, b))

    def __len__(self):
        return len(self.nodes)

    def integrate(self, function):
        """Apply the rule to a vectorized function."""
        return float(np.dot(self.weights, function(self.nodes)))


def gauss_legendre(n):
    """
    n-point Gauss-Legendre rule on (-1, 1).

    Roots of P_n are found by Newton's method on the three-term recurrence,
    started from the cosine estimate of each root.

    Parameters:
    - n (int): Number of nodes, n >= 1.

    Returns:
    - QuadratureRule: exact for polynomials up to degree 2n - 1.

    Example:
    >>> gauss_legendre(2).nodes
    array([-0.57735027,  0.57735027])
    """
    if int(n) != n or n < 1:
        raise ContractError(f"number of nodes must be a positive integer, got {n}")
    n = int(n)
    x = np.cos(np.pi * (np.arange(n) + 0.75) / (n + 0.5))
    for _ in range(100):
        p0, p1 = np.ones(n), x.copy()
        for k in range(2, n + 1):
            p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
        derivative = n * (x * p1 - p0) / (x * x - 1.0)
        step = p1 / derivative
        x = x - step
        if np.max(np.abs(step)) <= 1e-15:
            break
    p0, p1 = np.ones(n), x.copy()
    for k in range(2, n + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    derivative = n * (x * p1 - p0) / (x * x - 1.0)
    weights = 2.0 / ((1.0 - x * x) * derivative * derivative)

    order = np.argsort(x)
    x, weights = x[order], weights[order]
    # symmetric about 0 by construction; remove rounding asymmetry
    x = 0.5 * (x - x[::-1])
    weights = 0.5 * (weights + weights[::-1])
    return QuadratureRule(x, weights, (-1.0, 1.0))


def map_rule(rule, a, b):
    """
    Affinely map a rule on (-1, 1) to (a, b).

    Nodes become (b - a)/2 * x + (a + b)/2 and weights are scaled by (b - a)/2.
    """
    if not b > a:
        raise ContractError(f"interval ({a}, {b}) is empty or reversed")
    lo, hi = rule.interval
    scale = (b - a) / (hi - lo)
    return QuadratureRule(a + (rule.nodes - lo) * scale, rule.weights * scale, (a, b))


def composite(rules):
    """Join rules on adjacent intervals into one rule on their union."""
    rules = sorted(rules, key=lambda r: r.interval[0])
    for left, right in zip(rules[:-1], rules[1:]):
        if left.interval[1] != right.interval[0]:
            raise ContractError("composite rules need adjacent intervals")
    return QuadratureRule(
        np.concatenate([r.nodes for r in rules]),
        np.concatenate([r.weights for r in rules]),
        (rules[0].interval[0], rules[-1].interval[1]),
    )


def half_range_rule(n, a=-1.0, b=1.0):
    """
    n-node rule on (a, b) made of two n/2-node Gauss rules split at the
    midpoint. Used for velocity integrals, whose integrand jumps at v = 0.
    """
    if n < 2 or n % 2:
        raise ContractError(f"a half-range rule needs an even node count, got {n}")
    half = gauss_legendre(n // 2)
    middle = 0.5 * (a + b)
    return composite([map_rule(half, a, middle), map_rule(half, middle, b)])


def tensor2d(rule_x, rule_y):
    """
    Tensor-product rule on a rectangle.

    Returns:
    - list of (node_x, node_y, weight) with weight = w_x * w_y, x varying
      slowest.
    """
    return [
        (float(x), float(y), float(wx * wy))
        for x, wx in zip(rule_x.nodes, rule_x.weights)
        for y, wy in zip(rule_y.nodes, rule_y.weights)
    ]


def tensor_arrays(rule_x, rule_y):
    """``tensor2d`` as arrays: nodes (n, 2) and weights (n,)."""
    xs, ys = np.meshgrid(rule_x.nodes, rule_y.nodes, indexing="ij")
    weights = np.outer(rule_x.weights, rule_y.weights)
    return np.column_stack([xs.ravel(), ys.ravel()]), weights.ravel()
