import numpy as np
import pytest
from numpy.testing import assert_allclose

from Modnet.exceptions import ContractError, SolverError
from Modnet.problems import Auxiliary2D, Rte1D
from Modnet.reference import (
    GridSolution,
    LabelSpec,
    auxiliary_coeff,
    auxiliary_exact,
    burgers_solve,
    cache_key,
    cached_grid,
    constant_rte_coefficients,
    density_grid,
    example_rte_coefficients,
    make_labels,
    metrics,
    nonlinear_exact,
    poisson_exact,
    rte_profile,
    rte_solve,
)


def inflow(a2):
    return lambda v: np.cos(v) + a2 * np.sin(v) + 2.0


def test_poisson_exact_value():
    assert poisson_exact(10.0, 0.5, 0.5) == pytest.approx(0.3125)


def test_nonlinear_exact_value():
    assert nonlinear_exact(15.0, 0.5, 0.5) == pytest.approx(0.46875)
    assert nonlinear_exact(15.0, 0.0, 0.3) == 0.0
    assert nonlinear_exact(15.0, 0.7, 1.0) == 0.0


def test_auxiliary_exact_value():
    assert auxiliary_exact(0.5, 1.25) == pytest.approx(-0.046875 * 0.20710678118654757, rel=1e-12)
    # second branch: sin(2 pi y) = -1 at y = 1.75
    assert auxiliary_exact(0.5, 1.75) == pytest.approx(0.5 * -0.5 * 0.75 * -0.25 * (0.5 - 1.0), rel=1e-12)


def test_auxiliary_coefficient_value():
    assert auxiliary_coeff(0.5, 1.5) == pytest.approx(4.0 / 3.0, abs=1e-12)


def test_auxiliary_domain_is_checked():
    with pytest.raises(ContractError):
        auxiliary_exact(1.5, 1.2)
    with pytest.raises(ContractError):
        auxiliary_coeff(0.5, 0.5)


def test_pure_transport_matches_attenuation():
    sigma = 0.5
    solution = rte_solve(
        constant_rte_coefficients(sigma, sigma), lambda v: np.ones_like(v), lambda v: np.zeros_like(v), nx=1000, nv=4
    )
    x, v = solution.axes["x"][:, None], solution.axes["v"][None, :]
    exact = np.where(v > 0, np.exp(-sigma * x / np.abs(v)), 0.0)
    assert np.max(np.abs(solution.values - exact)) <= 2e-3


def test_constant_equilibrium_is_exact():
    solution = rte_solve(constant_rte_coefficients(1.0, 0.0), lambda v: np.full_like(v, 2.0),
                         lambda v: np.full_like(v, 2.0), nx=50, nv=8, tol=1e-13)
    assert_allclose(solution.values, 2.0, atol=1e-10)
    assert_allclose(solution.metadata["density"], 2.0, atol=1e-10)


def test_rte_first_order_self_convergence():
    solutions = [
        rte_solve(example_rte_coefficients(), inflow(0.01), inflow(0.01), nx=nx, nv=4, tol=1e-12)
        for nx in (200, 400, 800)
    ]
    coarse, middle, fine = (s.values for s in solutions)
    reference = 2.0 * fine[::4] - middle[::2]
    ratio = np.max(np.abs(coarse - reference)) / np.max(np.abs(middle[::2] - reference))
    assert 1.6 <= ratio <= 2.6


def test_rte_profile_reproduces_solver_ordinates():
    solution = rte_solve(example_rte_coefficients(), inflow(0.5), inflow(0.5), nx=100, nv=8, tol=1e-12)
    profile = rte_profile(density_grid(solution), example_rte_coefficients(), inflow(0.5), inflow(0.5),
                          solution.axes["v"])
    assert_allclose(profile.values, solution.values, rtol=1e-10)


def test_rte_solver_iteration_cap():
    with pytest.raises(SolverError):
        rte_solve(example_rte_coefficients(), inflow(0.1), inflow(0.1), nx=20, nv=4, max_iterations=1)


def test_rte_solver_checks_its_grid():
    with pytest.raises(ContractError):
        rte_solve(example_rte_coefficients(), inflow(0.1), inflow(0.1), nx=20, nv=5)
    with pytest.raises(ContractError):
        rte_solve(example_rte_coefficients(), inflow(0.1), inflow(0.1), nx=1, nv=4)


def test_burgers_constant_boundary_is_exact():
    solution = burgers_solve(1.0, 3.0, 3.0, 51)
    assert_allclose(solution.values, 3.0, atol=1e-12)


def test_burgers_diffusion_limit_is_linear():
    solution = burgers_solve(100.0, 1.0, -1.0, 201)
    x = solution.axes["x"]
    assert np.max(np.abs(solution.values + x)) <= 1e-2


def test_burgers_residual_reaches_tolerance():
    phi = lambda x: 4.0 * np.cos(2.0 * x) + 3.1 * np.sin(10.0 * x)
    solution = burgers_solve(1.0, phi(-1.0), phi(1.0), 2001)
    assert solution.metadata["residual"] < 1e-10
    assert solution.values[0] == phi(-1.0)
    assert solution.values[-1] == pytest.approx(phi(1.0), abs=1e-14)


def test_burgers_first_order_self_convergence():
    coarse, middle, fine = (burgers_solve(1.0, 2.0, -2.0, nx).values for nx in (101, 201, 401))
    reference = 2.0 * fine[::4] - middle[::2]
    ratio = np.max(np.abs(coarse - reference)) / np.max(np.abs(middle[::2] - reference))
    assert 1.6 <= ratio <= 2.6


def test_grid_interpolation_is_bilinear():
    x, y = np.linspace(0, 1, 5), np.linspace(1, 2, 7)
    grid = GridSolution({"x": x, "y": y}, 2.0 * x[:, None] + 3.0 * y[None, :])
    points = np.array([[0.33, 1.21], [0.9, 1.99]])
    assert_allclose(grid.interpolate(points), 2.0 * points[:, 0] + 3.0 * points[:, 1], rtol=1e-14)
    restored = GridSolution.from_frame(grid.to_frame(), ("x", "y"))
    assert_allclose(restored.values, grid.values)


def test_grid_shape_must_match_axes():
    with pytest.raises(ContractError):
        GridSolution({"x": np.linspace(0, 1, 3)}, np.zeros(4))


def test_metrics():
    result = metrics(np.array([1.0, 2.0, 3.0]), np.array([1.0, 2.0, 5.0]))
    assert result["rmse"] == pytest.approx(np.sqrt(4.0 / 3.0))
    assert result["max_error"] == 2.0
    assert result["relative_error"] == pytest.approx(2.0 / np.sqrt(30.0))
    assert metrics(np.zeros(3), np.zeros(3))["relative_error"] == 0.0
    assert metrics(np.ones(3), np.zeros(3))["relative_error"] is None
    with pytest.raises(ContractError):
        metrics(np.ones(2), np.ones(3))


def test_metrics_of_zero_prediction():
    a = 15.0
    x, y = np.meshgrid(np.linspace(0, 1, 101), np.linspace(0, 1, 101), indexing="ij")
    exact = poisson_exact(a, x, y)
    assert metrics(np.zeros_like(exact), exact)["rmse"] == pytest.approx(np.sqrt(np.mean(exact**2)))


def test_auxiliary_labels_match_closed_form():
    labels = make_labels(Auxiliary2D(), 1.0, LabelSpec("u", (10, 10)))
    assert len(labels) == 100
    assert_allclose(labels.values, auxiliary_exact(labels.points[:, 0], labels.points[:, 1]), rtol=1e-12, atol=1e-15)


def test_transport_labels(tmp_path):
    problem = Rte1D(reference_nx=100, reference_nv=60)
    u_labels = make_labels(problem, 0.01, LabelSpec("u", (5, 4)), cache_dir=tmp_path)
    assert len(u_labels) == 20
    assert_allclose(np.unique(u_labels.points[:, 0]), np.linspace(0.0, 2.0, 5))
    assert_allclose(np.unique(u_labels.points[:, 1]), np.linspace(-1.0, 1.0, 4))
    rho_labels = make_labels(problem, 0.01, LabelSpec("rho", (10,)), cache_dir=tmp_path)
    assert len(rho_labels) == 10
    solver_density = problem.density(0.01, tmp_path).interpolate(rho_labels.points)
    assert_allclose(rho_labels.values, solver_density, atol=1e-3)
    assert len(list(tmp_path.glob("rte1d-*.csv"))) == 1


def test_cached_grid_computes_once(tmp_path):
    calls = []

    def compute():
        calls.append(1)
        return GridSolution({"x": np.linspace(0, 1, 4)}, np.arange(4.0))

    key = cache_key(family="burgers1d", c2=3.1, nx=4)
    first = cached_grid(tmp_path, "burgers1d", key, ("x",), compute)
    path = tmp_path / f"burgers1d-{key}.csv"
    content = path.read_bytes()
    second = cached_grid(tmp_path, "burgers1d", key, ("x",), compute)
    assert len(calls) == 1
    assert path.read_bytes() == content
    assert_allclose(second.values, first.values)


def test_cache_key_depends_on_every_field():
    assert cache_key(a=1, b=2) == cache_key(b=2, a=1)
    assert cache_key(a=1, b=2) != cache_key(a=1, b=3)
    assert len(cache_key(a=1)) == 16
