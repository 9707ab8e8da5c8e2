import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from Modnet.autodiff import Jet
from Modnet.exceptions import ContractError
from Modnet.network import MlpNetwork, forward, mlp_new, network_jet


def manual_forward(net, inputs):
    h = inputs
    for layer, (w, b) in enumerate(net.parameters()):
        h = h @ w.T + b
        if layer < len(net.weights) - 1:
            h = np.tanh(h) if net.activation == "tanh" else 1.0 / (1.0 + np.exp(-h))
    return np.exp(h) if net.output_transform == "exponential" else h


def test_parameter_count():
    assert mlp_new((2, 16, 16, 1), "tanh", seed=3).num_parameters == 337


def test_glorot_initialization():
    net = mlp_new((4, 32, 8, 1), seed=1)
    for (w, b), (fan_in, fan_out) in zip(net.parameters(), [(4, 32), (32, 8), (8, 1)]):
        assert w.shape == (fan_out, fan_in)
        assert np.all(np.abs(w) <= np.sqrt(6.0 / (fan_in + fan_out)))
        assert_array_equal(b, np.zeros(fan_out))


def test_same_seed_same_network():
    first, second = mlp_new((3, 10, 1), seed=7), mlp_new((3, 10, 1), seed=7)
    for (w1, _), (w2, _) in zip(first.parameters(), second.parameters()):
        assert_array_equal(w1, w2)
    other = mlp_new((3, 10, 1), seed=8)
    assert not np.array_equal(first.weights[0], other.weights[0])


def test_network_needs_a_hidden_layer():
    with pytest.raises(ContractError):
        mlp_new((2, 1))


def test_unknown_activation_is_rejected():
    with pytest.raises(ContractError):
        mlp_new((2, 4, 1), "relu")


@pytest.mark.parametrize("activation,transform", [("tanh", "identity"), ("sigmoid", "identity"), ("tanh", "exponential")])
def test_forward_matches_manual_evaluation(activation, transform):
    net = mlp_new((3, 7, 5, 2), activation, transform, seed=5)
    inputs = np.random.default_rng(0).normal(size=(9, 3))
    assert_allclose(forward(net, inputs), manual_forward(net, inputs), rtol=1e-13)


def test_single_point_forward():
    net = mlp_new((2, 4, 1), seed=0)
    assert forward(net, np.array([0.1, 0.2])).shape == (1,)
    assert forward(net, np.array([[0.1, 0.2], [0.3, 0.4]])).shape == (2, 1)


def test_exponential_output_is_positive():
    net = mlp_new((3, 16, 1), "tanh", "exponential", seed=9)
    inputs = np.random.default_rng(1).uniform(-5, 5, size=(50, 3))
    assert np.all(forward(net, inputs) > 0)


def test_wrong_input_width_is_rejected():
    net = mlp_new((2, 4, 1), seed=0)
    with pytest.raises(ContractError):
        forward(net, np.zeros((3, 3)))


def test_jet_input_applies_the_chain_rule():
    net = mlp_new((1, 6, 6, 1), "sigmoid", seed=2)
    z = np.linspace(-1.0, 1.0, 5)[:, None]
    direct = network_jet(net, z, (0,), ((0, 0),))
    x = Jet.variable(z / 2.0, 0, (0,), ((0, 0),))
    chained = network_jet(net, x * 2.0)
    assert_allclose(chained.value, direct.value, rtol=1e-13)
    assert_allclose(chained.first(0), 2.0 * direct.first(0), rtol=1e-12)
    assert_allclose(chained.second(0, 0), 4.0 * direct.second(0, 0), rtol=1e-12, atol=1e-15)


def test_slots_and_record_restore_the_network():
    net = mlp_new((2, 3, 1), "sigmoid", "exponential", seed=4)
    slots = net.slots("F")
    assert list(slots) == ["F.W0", "F.b0", "F.W1", "F.b1"]
    restored = MlpNetwork.from_dict(net.to_dict())
    assert restored.activation == "sigmoid"
    assert restored.output_transform == "exponential"
    for (w1, b1), (w2, b2) in zip(net.parameters(), restored.parameters()):
        assert_array_equal(w1, w2)
        assert_array_equal(b1, b2)


def test_record_missing_weights_is_rejected():
    record = mlp_new((2, 3, 1), seed=0).to_dict()
    del record["weights"]
    with pytest.raises(ContractError):
        MlpNetwork.from_dict(record)
