import numpy as np
import pytest
from numpy.testing import assert_allclose

from Modnet import autodiff as ad
from Modnet.autodiff import GradientTape
from Modnet.exceptions import ContractError
from Modnet.network import forward, mlp_new
from Modnet.problems import Burgers1D, NetworkSpec, Poisson2D, Rte1D
from Modnet.quadrature import half_range_rule
from Modnet.solutionoperator import (
    ModNetOperator,
    SourceSample,
    density,
    eval_burgers,
    eval_poisson,
    eval_rte,
    green_sum,
    solution_jet,
)

net = mlp_new((4, 8, 8, 1), "tanh", seed=11)
rng = np.random.default_rng(2)
points = rng.uniform(size=(7, 2))
nodes = rng.uniform(size=(5, 2))
coefficient = rng.normal(size=(5, 3))


def direct_sum(points, params=None):
    out = np.zeros((len(points), coefficient.shape[1]))
    for m, p in enumerate(points):
        for j, q in enumerate(nodes):
            out[m] += forward(net, np.concatenate([p, q]), params)[0] * coefficient[j]
    return out


def test_green_sum_matches_direct_summation():
    result = green_sum(net, None, points, nodes, coefficient)
    assert_allclose(result.value, direct_sum(points), rtol=1e-13, atol=1e-14)


def test_chunked_green_sum_matches_single_pass():
    whole = green_sum(net, None, points, nodes, coefficient, (0, 1), ((0, 0), (1, 1)))
    # five rows per chunk: one point at a time
    chunked = green_sum(net, None, points, nodes, coefficient, (0, 1), ((0, 0), (1, 1)), chunk_rows=5)
    for a, b in zip(whole.channels(), chunked.channels()):
        assert_allclose(a, b, rtol=1e-14, atol=1e-15)


def test_green_sum_derivatives_match_finite_differences():
    jet = green_sum(net, None, points, nodes, coefficient, (0, 1), ((0, 0),))
    step = 1e-6
    shift = np.array([step, 0.0])
    central = (direct_sum(points + shift) - direct_sum(points - shift)) / (2 * step)
    assert_allclose(jet.first(0), central, rtol=1e-6, atol=1e-8)
    step = 1e-4
    shift = np.array([step, 0.0])
    second = (direct_sum(points + shift) - 2 * direct_sum(points) + direct_sum(points - shift)) / step**2
    assert_allclose(jet.second(0, 0), second, rtol=1e-4, atol=1e-5)


def test_chunked_gradient_matches_single_pass():
    gradients = []
    for chunk_rows in (32768, 10):
        tape = GradientTape()
        params = net.watch(tape, "G")
        jet = green_sum(net, params, points, nodes, coefficient, (0, 1), ((0, 0), (1, 1)), chunk_rows)
        loss = ad.sum_(jet.value * jet.value) + ad.sum_(jet.second(0, 0) + jet.second(1, 1))
        gradients.append(tape.gradient(loss))
    single, chunked = gradients
    assert list(single) == list(chunked)
    for name in single:
        assert_allclose(chunked[name], single[name], rtol=1e-12, atol=1e-14)


def small_poisson():
    problem = Poisson2D(quadrature=(3, 3), green=NetworkSpec((8, 8), "tanh"))
    return problem, problem.build_operator(seed=1)


def test_eval_poisson_is_the_green_sum():
    problem, op = small_poisson()
    (sample,) = problem.source_samples(op, [20.0])
    nodes_, weights = op.interior_rule
    expected = sum(
        forward(op.green["G"], np.array([0.3, 0.6, x, y]))[0] * w * g
        for (x, y), w, g in zip(nodes_, weights, sample.values)
    )
    assert eval_poisson(op, sample, 0.3, 0.6) == pytest.approx(expected, rel=1e-12)


def test_member_columns_are_independent():
    problem, op = small_poisson()
    samples = problem.source_samples(op, [10.0, 30.0])
    both = solution_jet(op, samples, points).value
    single = solution_jet(op, samples[1:], points).value
    assert both.shape == (len(points), 2)
    assert_allclose(both[:, 1], single[:, 0], rtol=1e-14)
    # the source is linear in a
    assert_allclose(both[:, 1], 3.0 * both[:, 0], rtol=1e-12)


def small_rte():
    problem = Rte1D(inflow_nodes=(5, 5), green=NetworkSpec((8, 8), "tanh"), density_nodes=10)
    return problem, problem.build_operator(seed=4)


def test_transport_output_is_positive():
    problem, op = small_rte()
    draws = np.random.default_rng(9)
    for a2 in draws.uniform(-1.0, 1.0, size=100):
        (sample,) = problem.source_samples(op, [a2])
        x, v = draws.uniform(0.0, 2.0), draws.uniform(-1.0, 1.0)
        assert eval_rte(op, sample, x, v) > 0


def test_density_averages_over_velocities():
    problem, op = small_rte()
    (sample,) = problem.source_samples(op, [0.3])
    rule = half_range_rule(10)
    expected = 0.5 * sum(w * eval_rte(op, sample, 0.7, v) for v, w in zip(rule.nodes, rule.weights))
    assert density(op, sample, 0.7, rule) == pytest.approx(expected, rel=1e-12)


def test_burgers_evaluation_uses_the_outer_network():
    problem = Burgers1D(green=NetworkSpec((6,), "sigmoid"), outer=NetworkSpec((6,), "sigmoid"))
    op = problem.build_operator(seed=2)
    sample = SourceSample([1.5, -0.5])
    inner = forward(op.green["GL"], [0.2])[0] * 1.5 + forward(op.green["GR"], [0.2])[0] * -0.5
    assert eval_burgers(op, sample, 0.2) == pytest.approx(forward(op.outer, [inner])[0], rel=1e-12)


def test_operation_must_match_family():
    problem, op = small_poisson()
    (sample,) = problem.source_samples(op, [20.0])
    with pytest.raises(ContractError):
        eval_burgers(op, sample, 0.1)
    with pytest.raises(ContractError):
        density(op, sample, 0.5, half_range_rule(4))


def test_sample_count_must_match_rule():
    _, op = small_poisson()
    with pytest.raises(ContractError):
        eval_poisson(op, SourceSample(np.ones(4)), 0.5, 0.5)


def test_source_samples_must_be_finite():
    with pytest.raises(ContractError):
        SourceSample([1.0, np.nan])


def test_operator_validation():
    _, op = small_poisson()
    with pytest.raises(ContractError):
        ModNetOperator("heat1d", op.green, interior_rule=op.interior_rule)
    with pytest.raises(ContractError):
        ModNetOperator("poisson2d", {"GL": op.green["G"]}, interior_rule=op.interior_rule)
    with pytest.raises(ContractError):
        ModNetOperator("nonlinearpoisson2d", op.green, interior_rule=op.interior_rule)
    with pytest.raises(ContractError):
        ModNetOperator("poisson2d", op.green, mlp_new((1, 4, 1)), interior_rule=op.interior_rule)


def test_with_slots_replaces_parameters():
    problem, op = small_poisson()
    slots = {name: 2.0 * value for name, value in op.slots().items()}
    changed = op.with_slots(slots)
    assert_allclose(changed.green["G"].weights[0], 2.0 * op.green["G"].weights[0])
    assert op.slots().keys() == changed.slots().keys()
