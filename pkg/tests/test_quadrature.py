import numpy as np
import pytest
from numpy.polynomial import polynomial as P
from numpy.testing import assert_allclose

from Modnet.exceptions import ContractError
from Modnet.quadrature import (
    QuadratureRule,
    composite,
    gauss_legendre,
    half_range_rule,
    map_rule,
    tensor2d,
    tensor_arrays,
)


def exact_integral(coefficients):
    antiderivative = P.polyint(coefficients)
    return P.polyval(1.0, antiderivative) - P.polyval(-1.0, antiderivative)


def test_two_point_rule():
    rule = gauss_legendre(2)
    assert_allclose(rule.nodes, [-0.5773502691896257, 0.5773502691896257], rtol=1e-15)
    assert_allclose(rule.weights, [1.0, 1.0], rtol=1e-15)


def test_one_point_rule_is_midpoint():
    rule = gauss_legendre(1)
    assert_allclose(rule.nodes, [0.0], atol=1e-16)
    assert_allclose(rule.weights, [2.0])


def test_exact_for_polynomials_up_to_degree_2n_minus_1():
    rng = np.random.default_rng(0)
    for n in range(1, 31):
        rule = gauss_legendre(n)
        for _ in range(5):
            coefficients = rng.uniform(-1.0, 1.0, size=2 * n)
            scale = np.sum(np.abs(coefficients) * 2.0 / np.arange(1, 2 * n + 1))
            value = rule.integrate(lambda x: P.polyval(x, coefficients))
            assert abs(value - exact_integral(coefficients)) <= 1e-12 * scale


@pytest.mark.parametrize(
    "function, exact",
    [
        (np.exp, np.e - 1.0 / np.e),
        (lambda x: np.cos(3.0 * x), 2.0 * np.sin(3.0) / 3.0),
        (lambda x: 1.0 / (1.0 + x * x), np.pi / 2.0),
    ],
)
def test_refinement_does_not_increase_error(function, exact):
    errors = [abs(gauss_legendre(n).integrate(function) - exact) for n in (1, 2, 4, 8, 16, 32)]
    for coarse, fine in zip(errors, errors[1:]):
        assert fine <= coarse + 1e-14
    assert errors[-1] <= 1e-13


def test_rules_are_symmetric_with_positive_weights():
    for n in (3, 10, 30):
        rule = gauss_legendre(n)
        assert_allclose(rule.nodes, -rule.nodes[::-1], atol=1e-16)
        assert_allclose(rule.weights.sum(), 2.0, rtol=1e-14)
        assert np.all(rule.weights > 0)
        assert np.all(np.diff(rule.nodes) > 0)


@pytest.mark.parametrize("n", [0, -3, 2.5])
def test_invalid_node_count(n):
    with pytest.raises(ContractError):
        gauss_legendre(n)


def test_mapped_rule():
    rule = map_rule(gauss_legendre(3), 0.0, 2.0)
    assert rule.interval == (0.0, 2.0)
    assert rule.integrate(lambda x: x**2) == pytest.approx(8.0 / 3.0, rel=1e-14)
    with pytest.raises(ContractError):
        map_rule(gauss_legendre(3), 1.0, 1.0)


def test_half_range_rule_integrates_across_the_jump():
    rule = half_range_rule(30)
    assert len(rule) == 30
    assert np.sum(rule.nodes < 0) == 15
    value = rule.integrate(lambda v: np.where(v < 0, v**2, 1.0))
    assert value == pytest.approx(1.0 / 3.0 + 1.0, rel=1e-14)


def test_half_range_rule_needs_even_count():
    with pytest.raises(ContractError):
        half_range_rule(5)


def test_composite_needs_adjacent_intervals():
    with pytest.raises(ContractError):
        composite([map_rule(gauss_legendre(2), 0.0, 1.0), map_rule(gauss_legendre(2), 2.0, 3.0)])


def test_tensor_rules():
    rx = map_rule(gauss_legendre(3), 0.0, 1.0)
    ry = map_rule(gauss_legendre(4), 1.0, 2.0)
    triples = tensor2d(rx, ry)
    assert len(triples) == 12
    assert sum(w for _, _, w in triples) == pytest.approx(1.0, rel=1e-14)
    nodes, weights = tensor_arrays(rx, ry)
    assert_allclose(nodes, [(x, y) for x, y, _ in triples])
    assert_allclose(weights, [w for _, _, w in triples])
    # x y^2 over [0, 1] x [1, 2]
    assert np.dot(weights, nodes[:, 0] * nodes[:, 1] ** 2) == pytest.approx(0.5 * 7.0 / 3.0, rel=1e-14)


def test_rule_validation():
    with pytest.raises(ContractError):
        QuadratureRule(np.array([-1.0, 0.5]), np.array([1.0, 1.0]))
    with pytest.raises(ContractError):
        QuadratureRule(np.array([0.5, -0.5]), np.array([1.0, 1.0]))
    with pytest.raises(ContractError):
        QuadratureRule(np.array([0.0]), np.array([-2.0]))
