"""
The PDE families Modnet learns solution operators for.

Each problem knows its domain, its parameterized data, how to build an
operator with the right networks and quadrature, its risk, and where its
reference solution comes from.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .exceptions import ContractError
from .losses import (
    CollocationBatch,
    risk_auxiliary,
    risk_burgers,
    risk_nonlinear,
    risk_poisson_ls,
    risk_poisson_vi,
    risk_rte,
    velocity_average,
)
from .network import mlp_new
from .quadrature import gauss_legendre, half_range_rule, map_rule, tensor_arrays
from .reference import (
    GridSolution,
    auxiliary_coeff,
    auxiliary_exact,
    auxiliary_source,
    burgers_solve,
    cache_key,
    cached_grid,
    density_grid,
    example_rte_coefficients,
    nonlinear_exact,
    nonlinear_source,
    poisson_exact,
    poisson_source,
    rte_profile,
    rte_solve,
)
from .solutionoperator import ModNetOperator, SourceSample, operator_field, solution_jet
from .training import Rectangle, sample_boundary, sample_interior

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NetworkSpec:
    """Hidden widths and activation of one network."""

    hidden: tuple = (128, 128, 128, 128)
    activation: str = "tanh"


def _values(result):
    return np.asarray(ad.value_of(result), dtype=np.float64)


class Problem:
    """Shared behaviour of all problems; subclasses fill in the physics."""

    family = None
    parameter = None
    axes_names = ()

    def label_points(self, spec):
        axes = self.axes(spec.counts if spec.kind == "u" else spec.counts[:1])
        grid = GridSolution(axes, np.zeros(tuple(len(a) for a in axes.values())))
        return grid.points()

    def predict(self, op, parameter, points):
        """Operator output for one member at (N, d) points; (N,)."""
        jet = solution_jet(op, self.source_samples(op, [parameter]), points)
        return _values(jet.value)[:, 0]

    def predict_grid(self, op, parameter, counts):
        axes = self.axes(counts)
        shape = tuple(len(a) for a in axes.values())
        grid = GridSolution(axes, np.zeros(shape))
        return GridSolution(axes, self.predict(op, parameter, grid.points()).reshape(shape))

    def reference_values(self, parameter, points, cache_dir=None):
        raise NotImplementedError

    def reference_grid(self, parameter, counts, cache_dir=None):
        axes = self.axes(counts)
        shape = tuple(len(a) for a in axes.values())
        grid = GridSolution(axes, np.zeros(shape))
        values = self.reference_values(parameter, grid.points(), cache_dir=cache_dir)
        return GridSolution(axes, values.reshape(shape), {"parameter": parameter})


@dataclass
class InteriorProblem(Problem):
    """A second-order problem on a rectangle with zero Dirichlet data."""

    domain: Rectangle = field(default_factory=lambda: Rectangle(((0.0, 1.0), (0.0, 1.0))))
    quadrature: tuple = (10, 10)
    green: NetworkSpec = field(default_factory=NetworkSpec)

    axes_names = ("x", "y")

    def axes(self, counts):
        if len(counts) != 2:
            raise ContractError(f"{self.family} grids need two counts, got {counts}")
        return {
            name: np.linspace(lo, hi, int(n))
            for name, (lo, hi), n in zip(self.axes_names, self.domain.bounds, counts)
        }

    def interior_rule(self):
        (x0, x1), (y0, y1) = self.domain.bounds
        nx, ny = self.quadrature
        return tensor_arrays(map_rule(gauss_legendre(nx), x0, x1), map_rule(gauss_legendre(ny), y0, y1))

    def build_operator(self, seed, chunk_rows=32768):
        rng = np.random.default_rng(seed)
        green = mlp_new((4, *self.green.hidden, 1), self.green.activation, "identity", rng)
        return ModNetOperator(self.family, {"G": green}, None, self.interior_rule(), chunk_rows=chunk_rows)

    def source(self, p, x, y):
        raise NotImplementedError

    def exact(self, p, x, y):
        raise NotImplementedError

    def source_samples(self, op, parameters):
        nodes, _ = op.interior_rule
        return [
            SourceSample(_values(self.source(float(p), nodes[:, 0], nodes[:, 1])).ravel())
            for p in parameters
        ]

    def source_function(self, parameters):
        p = np.asarray(parameters, dtype=np.float64)[None, :]
        return lambda points: _values(self.source(p, points[:, 0:1], points[:, 1:2])) * np.ones_like(p)

    def collocation(self, rng, interior, boundary):
        segments = self.domain.segments()
        return CollocationBatch(
            sample_interior(self.domain, interior, rng),
            {f"side_{k}": sample_boundary(s, boundary, rng) for k, s in enumerate(segments, start=1)},
            self.coefficients(),
        )

    def coefficients(self):
        return {}

    def reference_values(self, parameter, points, cache_dir=None):
        points = np.asarray(points, dtype=np.float64)
        return _values(self.exact(float(parameter), points[:, 0], points[:, 1]))


@dataclass
class Poisson2D(InteriorProblem):
    """-Laplace(u) = -a (x^2 - x + y^2 - y) on the unit square, u = 0 on the boundary."""

    family = "poisson2d"
    parameter = "a"

    def source(self, p, x, y):
        return poisson_source(p, x, y)

    def exact(self, p, x, y):
        return poisson_exact(p, x, y)

    def risk(self, op, parameters, batch, weights, labels=None, params=None, loss="least_square"):
        field_ = operator_field(op, self.source_samples(op, parameters), params)
        if loss == "variational":
            return risk_poisson_vi(field_, self.source_function(parameters), batch, weights, labels)
        if loss != "least_square":
            raise ContractError(f"unknown loss {loss!r}")
        return risk_poisson_ls(field_, self.source_function(parameters), batch, weights, labels)


@dataclass
class Auxiliary2D(InteriorProblem):
    """
    u_x + a(x, y) u = s g(x, y) on [0, 1] x [1, 2], u = 0 on the boundary.

    The family parameter is the amplitude s of the fixed source; the
    solution scales with it.
    """

    domain: Rectangle = field(default_factory=lambda: Rectangle(((0.0, 1.0), (1.0, 2.0))))
    family = "auxiliary2d"
    parameter = "scale"

    def source(self, p, x, y):
        return p * auxiliary_source(x, y)

    def exact(self, p, x, y):
        return p * auxiliary_exact(x, y)

    def coefficients(self):
        return {"a": lambda x, y: _values(auxiliary_coeff(x, y))}

    def risk(self, op, parameters, batch, weights, labels=None, params=None, loss="least_square"):
        field_ = operator_field(op, self.source_samples(op, parameters), params)
        return risk_auxiliary(field_, self.source_function(parameters), batch, weights, labels)


@dataclass
class NonlinearPoisson2D(InteriorProblem):
    """-Laplace(u) + c u^3 = g_a on the unit square; shares its solution with Poisson2D."""

    cubic: float = 0.01
    outer: NetworkSpec = field(default_factory=lambda: NetworkSpec((256,), "sigmoid"))
    family = "nonlinearpoisson2d"
    parameter = "a"

    def build_operator(self, seed, chunk_rows=32768):
        rng = np.random.default_rng(seed)
        green = mlp_new((4, *self.green.hidden, 1), self.green.activation, "identity", rng)
        outer = mlp_new((1, *self.outer.hidden, 1), self.outer.activation, "identity", rng)
        return ModNetOperator(self.family, {"G": green}, outer, self.interior_rule(), chunk_rows=chunk_rows)

    def source(self, p, x, y):
        return nonlinear_source(p, x, y, self.cubic)

    def exact(self, p, x, y):
        return nonlinear_exact(p, x, y)

    def risk(self, op, parameters, batch, weights, labels=None, params=None, loss="least_square"):
        field_ = operator_field(op, self.source_samples(op, parameters), params)
        return risk_nonlinear(field_, self.source_function(parameters), batch, weights, labels, self.cubic)


@dataclass
class Rte1D(Problem):
    """
    Steady transport on (x_left, x_right) x (-1, 1) with inflow data
    phi(v) = a1 cos(omega v) + a2 sin(omega v) + 2 on both ends; the family
    parameter is a2.
    """

    coefficients_: object = field(default_factory=example_rte_coefficients)
    x_left: float = 0.0
    x_right: float = 2.0
    a1: float = 1.0
    omega: float = 1.0
    inflow_nodes: tuple = (30, 30)
    velocity_nodes: int = 30
    density_nodes: int = 30
    green: NetworkSpec = field(default_factory=lambda: NetworkSpec((128, 256, 256, 128), "tanh"))
    reference_nx: int = 400
    reference_nv: int = 240

    family = "rte1d"
    parameter = "a2"
    axes_names = ("x", "v")

    def __post_init__(self):
        if not self.x_right > self.x_left:
            raise ContractError("empty slab")
        self._densities = {}

    @property
    def domain(self):
        return Rectangle(((self.x_left, self.x_right), (-1.0, 1.0)))

    def inflow(self, a2, v):
        return self.a1 * np.cos(self.omega * v) + a2 * np.sin(self.omega * v) + 2.0

    def velocity_rule(self):
        return half_range_rule(self.velocity_nodes)

    def density_rule(self):
        return half_range_rule(self.density_nodes)

    def axes(self, counts):
        if len(counts) == 1:
            return {"x": np.linspace(self.x_left, self.x_right, int(counts[0]))}
        nx, nv = counts
        return {"x": np.linspace(self.x_left, self.x_right, int(nx)), "v": np.linspace(-1.0, 1.0, int(nv))}

    def build_operator(self, seed, chunk_rows=32768):
        rng = np.random.default_rng(seed)
        hidden = self.green.hidden
        green = {
            name: mlp_new((3, *hidden, 1), self.green.activation, "exponential", rng) for name in ("GL", "GR")
        }
        positive = map_rule(gauss_legendre(self.inflow_nodes[0]), 0.0, 1.0)
        negative = map_rule(gauss_legendre(self.inflow_nodes[1]), -1.0, 0.0)
        return ModNetOperator(
            self.family, green, None, positive_rule=positive, negative_rule=negative, chunk_rows=chunk_rows
        )

    def source_samples(self, op, parameters):
        return [
            SourceSample(self.inflow(float(p), op.positive_rule.nodes), self.inflow(float(p), op.negative_rule.nodes))
            for p in parameters
        ]

    def coefficients(self):
        c = self.coefficients_
        return {
            "sigma_t": lambda x: np.asarray(c.sigma_t(x), dtype=np.float64),
            "sigma_a": lambda x: np.asarray(c.sigma_a(x), dtype=np.float64),
            "epsilon": lambda x: np.asarray(c.epsilon(x), dtype=np.float64),
        }

    def collocation(self, rng, interior, boundary):
        left = sample_boundary(Rectangle(((self.x_left, self.x_right), (0.0, 1.0))).segments()[0], boundary, rng)
        right = sample_boundary(Rectangle(((self.x_left, self.x_right), (-1.0, 0.0))).segments()[1], boundary, rng)
        return CollocationBatch(
            sample_interior(self.domain, interior, rng), {"left": left, "right": right}, self.coefficients()
        )

    def risk(self, op, parameters, batch, weights, labels=None, params=None, loss="least_square"):
        field_ = operator_field(op, self.source_samples(op, parameters), params)
        p = np.asarray(parameters, dtype=np.float64)[None, :]
        inflow = (
            lambda v: self.inflow(p, np.asarray(v)[:, None]),
            lambda v: self.inflow(p, np.asarray(v)[:, None]),
        )
        return risk_rte(
            field_, inflow, batch, weights, labels, self.velocity_rule(), self.density_rule()
        )

    def density(self, parameter, cache_dir=None):
        """Reference density over the solver grid (cached per a2)."""
        parameter = float(parameter)
        if parameter not in self._densities:
            key = cache_key(
                family=self.family, a2=parameter, a1=self.a1, omega=self.omega,
                x=(self.x_left, self.x_right), nx=self.reference_nx, nv=self.reference_nv,
                coefficients=self._coefficient_signature(),
            )

            def solve():
                solution = rte_solve(
                    self.coefficients_,
                    lambda v: self.inflow(parameter, v),
                    lambda v: self.inflow(parameter, v),
                    self.reference_nx,
                    self.reference_nv,
                    self.x_left,
                    self.x_right,
                )
                return density_grid(solution)

            self._densities[parameter] = cached_grid(cache_dir, self.family, key, ("x",), solve)
        return self._densities[parameter]

    def _coefficient_signature(self):
        x = np.linspace(self.x_left, self.x_right, 17)
        return [np.asarray(v(x)).tolist() for v in self.coefficients().values()]

    def profile(self, parameter, velocities, cache_dir=None):
        return rte_profile(
            self.density(parameter, cache_dir),
            self.coefficients_,
            lambda v: self.inflow(parameter, v),
            lambda v: self.inflow(parameter, v),
            np.unique(velocities),
        )

    def reference_values(self, parameter, points, cache_dir=None):
        points = np.asarray(points, dtype=np.float64)
        profile = self.profile(parameter, points[:, 1], cache_dir)
        return profile.interpolate(points)

    def reference_density(self, parameter, x, rule=None, cache_dir=None):
        """1/2 sum_j w_j u(x, v_j) of the reference solution over ``rule``."""
        rule = self.density_rule() if rule is None else rule
        profile = self.profile(parameter, rule.nodes, cache_dir)
        x = np.asarray(x, dtype=np.float64).ravel()
        values = np.column_stack([np.interp(x, profile.axes["x"], column) for column in profile.values.T])
        return 0.5 * values @ rule.weights

    def predict_density(self, op, parameter, x):
        field_ = operator_field(op, self.source_samples(op, [parameter]))
        return _values(velocity_average(field_, x, self.density_rule()))[:, 0]

    def reference_density_grid(self, parameter, count, cache_dir=None):
        x = np.linspace(self.x_left, self.x_right, int(count))
        return GridSolution({"x": x}, self.reference_density(parameter, x, cache_dir=cache_dir))

    def predict_density_grid(self, op, parameter, count):
        x = np.linspace(self.x_left, self.x_right, int(count))
        return GridSolution({"x": x}, self.predict_density(op, parameter, x))


@dataclass
class Burgers1D(Problem):
    """
    Steady viscous Burgers (u^2/2)_x = nu u_xx on (-1, 1) with
    u(+-1) = phi(+-1), phi(x) = c1 cos(k1 x) + c2 sin(k2 x); the family
    parameter is c2.
    """

    nu: float = 1.0
    c1: float = 4.0
    k1: float = 2.0
    k2: float = 10.0
    green: NetworkSpec = field(default_factory=lambda: NetworkSpec((256, 256, 256, 256), "sigmoid"))
    outer: NetworkSpec = field(default_factory=lambda: NetworkSpec((256,), "sigmoid"))
    reference_nx: int = 2001

    family = "burgers1d"
    parameter = "c2"
    axes_names = ("x",)

    def __post_init__(self):
        if not self.nu > 0:
            raise ContractError("viscosity must be positive")
        self._solutions = {}

    @property
    def domain(self):
        return Rectangle(((-1.0, 1.0),))

    def boundary(self, c2, x):
        return self.c1 * np.cos(self.k1 * x) + c2 * np.sin(self.k2 * x)

    def axes(self, counts):
        return {"x": np.linspace(-1.0, 1.0, int(counts[0]))}

    def build_operator(self, seed, chunk_rows=32768):
        rng = np.random.default_rng(seed)
        green = {
            name: mlp_new((1, *self.green.hidden, 1), self.green.activation, "identity", rng)
            for name in ("GL", "GR")
        }
        outer = mlp_new((1, *self.outer.hidden, 1), self.outer.activation, "identity", rng)
        return ModNetOperator(self.family, green, outer, chunk_rows=chunk_rows)

    def source_samples(self, op, parameters):
        return [SourceSample([self.boundary(float(p), -1.0), self.boundary(float(p), 1.0)]) for p in parameters]

    def collocation(self, rng, interior, boundary):
        return CollocationBatch(sample_interior(self.domain, interior, rng))

    def risk(self, op, parameters, batch, weights, labels=None, params=None, loss="least_square"):
        samples = self.source_samples(op, parameters)
        ends = np.stack([s.values for s in samples])
        return risk_burgers(operator_field(op, samples, params), ends, batch, weights, labels, self.nu)

    def solution(self, parameter, cache_dir=None):
        parameter = float(parameter)
        if parameter not in self._solutions:
            key = cache_key(
                family=self.family, c2=parameter, c1=self.c1, k1=self.k1, k2=self.k2, nu=self.nu, nx=self.reference_nx
            )
            self._solutions[parameter] = cached_grid(
                cache_dir,
                self.family,
                key,
                ("x",),
                lambda: burgers_solve(
                    self.nu, self.boundary(parameter, -1.0), self.boundary(parameter, 1.0), self.reference_nx
                ),
            )
        return self._solutions[parameter]

    def reference_values(self, parameter, points, cache_dir=None):
        return self.solution(parameter, cache_dir).interpolate(np.asarray(points, dtype=np.float64))


PROBLEMS = {
    cls.family: cls for cls in (Poisson2D, Auxiliary2D, NonlinearPoisson2D, Rte1D, Burgers1D)
}


def make_problem(family, **options):
    """Instantiate a problem by family name with keyword overrides."""
    if family not in PROBLEMS:
        raise ContractError(f"unknown problem family {family!r}; expected one of {sorted(PROBLEMS)}")
    return PROBLEMS[family](**options)
