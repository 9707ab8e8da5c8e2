"""Fully connected networks and their derivative propagation"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import autodiff as ad
from .autodiff import Jet, channel_layout
from .exceptions import ContractError

logger = logging.getLogger(__name__)

ACTIVATIONS = ("tanh", "sigmoid")
OUTPUT_TRANSFORMS = ("identity", "exponential")


@dataclass
class MlpNetwork:
    """
    A fully connected network y = W_L s(... s(W_1 x + b_1) ...) + b_L.

    Parameters:
    - layer_sizes (tuple): Widths from input to output, e.g. (4, 128, 128, 1).
    - weights (list): One (out, in) matrix per layer.
    - biases (list): One (out,) vector per layer.
    - activation (str): 'tanh' or 'sigmoid', applied after every hidden layer.
    - output_transform (str): 'identity' or 'exponential' (y -> exp(y)).
    """

    layer_sizes: tuple
    weights: list
    biases: list
    activation: str = "tanh"
    output_transform: str = "identity"

    def __post_init__(self):
        self.layer_sizes = tuple(int(n) for n in self.layer_sizes)
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ContractError(f"invalid layer sizes {self.layer_sizes}")
        if self.activation not in ACTIVATIONS:
            raise ContractError(f"unknown activation {self.activation!r}")
        if self.output_transform not in OUTPUT_TRANSFORMS:
            raise ContractError(f"unknown output transform {self.output_transform!r}")
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ContractError("one weight matrix and one bias per layer expected")
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_sizes[layer + 1], self.layer_sizes[layer])
            if w.shape != expected or b.shape != (expected[0],):
                raise ContractError(
                    f"layer {layer}: weight {w.shape} / bias {b.shape} do not match {expected}"
                )

    @property
    def input_size(self):
        return self.layer_sizes[0]

    @property
    def output_size(self):
        return self.layer_sizes[-1]

    @property
    def num_parameters(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def parameters(self):
        """Parameter arrays as a list of (weight, bias) pairs."""
        return list(zip(self.weights, self.biases))

    def slots(self, prefix):
        """Parameter arrays keyed by slot name, in network order."""
        named = {}
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            named[f"{prefix}.W{layer}"] = w
            named[f"{prefix}.b{layer}"] = b
        return named

    def with_slots(self, prefix, values):
        """A copy of the network with parameters taken from ``values``."""
        return MlpNetwork(
            self.layer_sizes,
            [np.array(values[f"{prefix}.W{layer}"]) for layer in range(len(self.weights))],
            [np.array(values[f"{prefix}.b{layer}"]) for layer in range(len(self.biases))],
            self.activation,
            self.output_transform,
        )

    def watch(self, tape, prefix):
        """Register every parameter on ``tape``; returns (W, b) node pairs."""
        return [
            (tape.watch(f"{prefix}.W{layer}", w), tape.watch(f"{prefix}.b{layer}", b))
            for layer, (w, b) in enumerate(zip(self.weights, self.biases))
        ]

    def jet(self, inputs, coords=(), pairs=(), params=None):
        return network_jet(self, inputs, coords, pairs, params)

    def to_dict(self):
        return {
            "layer_sizes": list(self.layer_sizes),
            "activation": self.activation,
            "output_transform": self.output_transform,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(
                data["layer_sizes"],
                data["weights"],
                data["biases"],
                data.get("activation", "tanh"),
                data.get("output_transform", "identity"),
            )
        except KeyError as missing:
            raise ContractError(f"network record is missing {missing}") from None


def mlp_new(layer_sizes, activation="tanh", output_transform="identity", seed=0):
    """
    Create a network with Glorot-uniform weights and zero biases.

    Parameters:
    - layer_sizes (sequence of int): Input width, at least one hidden width,
      output width.
    - activation (str): 'tanh' or 'sigmoid'.
    - output_transform (str): 'identity' or 'exponential'.
    - seed (int or np.random.Generator): Source of the initial weights.

    Returns:
    - MlpNetwork

    Example:
    >>> net = mlp_new((2, 16, 16, 1), "tanh", seed=3)
    >>> net.num_parameters
    337
    """
    layer_sizes = tuple(int(n) for n in layer_sizes)
    if len(layer_sizes) < 3:
        raise ContractError("a network needs at least one hidden layer")
    if min(layer_sizes) < 1:
        raise ContractError(f"layer widths must be positive, got {layer_sizes}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpNetwork(layer_sizes, weights, biases, activation, output_transform)


# ---------------------------------------------------------------------------
# Fused primitives over channel-stacked jets of shape (C, N, width)
# ---------------------------------------------------------------------------


def _dense_forward(h, w, b):
    z = h @ w.T
    z[0] = z[0] + b
    return z


def _dense_vjp(g, out, h, w, b):
    grad_h = g @ w
    grad_w = np.tensordot(g, h, axes=([0, 1], [0, 1]))
    grad_b = g[0].sum(axis=0)
    return grad_h, grad_w, grad_b


def dense(stacked, weight, bias):
    """Affine layer on stacked channels; the bias only enters the value channel."""
    return ad.primitive("dense", _dense_forward, _dense_vjp, stacked, weight, bias)


def _derivatives(kind, z0, f):
    """First three derivatives of the activation at z0, given f = s(z0)."""
    if kind == "tanh":
        f1 = 1.0 - f * f
        return f1, -2.0 * f * f1, -2.0 * f1 * (1.0 - 3.0 * f * f)
    if kind == "sigmoid":
        f1 = f * (1.0 - f)
        f2 = f1 * (1.0 - 2.0 * f)
        return f1, f2, f2 * (1.0 - 2.0 * f) - 2.0 * f1 * f1
    if kind == "exp":
        return f, f, f
    raise ContractError(f"unknown activation {kind!r}")


def _activate(kind, z0):
    if kind == "tanh":
        return np.tanh(z0)
    if kind == "sigmoid":
        return expit(z0)
    return np.exp(z0)


def activation_jet(stacked, kind, ncoords, pair_index):
    """
    Push stacked channels through an elementwise activation.

    Channel 0 is the value, channels 1..ncoords are first derivatives and the
    remaining channels are second derivatives for ``pair_index`` (pairs of
    positions into the first-derivative channels).
    """
    offset = 1 + ncoords

    def forward(z):
        f = _activate(kind, z[0])
        out = np.empty_like(z)
        out[0] = f
        if len(z) == 1:
            return out
        f1, f2, _ = _derivatives(kind, z[0], f)
        for c in range(ncoords):
            out[1 + c] = f1 * z[1 + c]
        for k, (i, j) in enumerate(pair_index):
            out[offset + k] = f2 * z[1 + i] * z[1 + j] + f1 * z[offset + k]
        return out

    def vjp(g, out, z):
        f = out[0]
        f1, f2, f3 = _derivatives(kind, z[0], f)
        grad = np.empty_like(z)
        grad[0] = g[0] * f1
        for c in range(ncoords):
            grad[0] += g[1 + c] * f2 * z[1 + c]
            grad[1 + c] = g[1 + c] * f1
        for k, (i, j) in enumerate(pair_index):
            gp = g[offset + k]
            zi, zj = z[1 + i], z[1 + j]
            grad[0] += gp * (f3 * zi * zj + f2 * z[offset + k])
            grad[1 + i] += gp * f2 * zj
            grad[1 + j] += gp * f2 * zi
            grad[offset + k] = gp * f1
        return (grad,)

    return ad.primitive(f"activation:{kind}", forward, vjp, stacked)


def _seed(inputs, coords, pairs):
    n, d = inputs.shape
    stacked = np.zeros((1 + len(coords) + len(pairs), n, d))
    stacked[0] = inputs
    for k, c in enumerate(coords):
        stacked[1 + k, :, c] = 1.0
    return stacked


def jet_stack(net, inputs, coords=(), pairs=(), params=None):
    """
    Batched forward pass carrying derivative channels.

    Parameters:
    - net (MlpNetwork): The network.
    - inputs (np.ndarray or Jet): (N, d) input points, or a jet whose value is
      (N, d); a jet input is propagated by the chain rule and its own
      coordinates and pairs define the channels.
    - coords, pairs: Derivatives requested for array inputs.
    - params (list): (W, b) pairs overriding the network's own arrays; may be
      tape nodes.

    Returns:
    - (stacked, coords, pairs): stacked is (C, N, output_size).
    """
    if isinstance(inputs, Jet):
        coords, pairs = inputs.coords, inputs.pairs
        stacked = inputs.stack()
        width = np.shape(ad.value_of(stacked))[-1]
    else:
        inputs = np.asarray(inputs, dtype=np.float64)
        if inputs.ndim != 2:
            raise ContractError(f"inputs must be (N, d), got shape {inputs.shape}")
        width = inputs.shape[1]
        coords, pairs = channel_layout(coords, pairs)
        for c in coords:
            if not 0 <= c < width:
                raise ContractError(f"coordinate {c} out of range for input width {width}")
        stacked = _seed(inputs, coords, pairs)
    if width != net.input_size:
        raise ContractError(f"network expects inputs of width {net.input_size}, got {width}")
    pair_index = [(coords.index(i), coords.index(j)) for i, j in pairs]
    params = net.parameters() if params is None else params
    last = len(params) - 1
    for layer, (w, b) in enumerate(params):
        stacked = dense(stacked, w, b)
        if layer < last:
            stacked = activation_jet(stacked, net.activation, len(coords), pair_index)
    if net.output_transform == "exponential":
        stacked = activation_jet(stacked, "exp", len(coords), pair_index)
    return stacked, coords, pairs


def network_jet(net, inputs, coords=(), pairs=(), params=None):
    """Like ``jet_stack`` but returns a ``Jet`` with (N, output_size) components."""
    stacked, coords, pairs = jet_stack(net, inputs, coords, pairs, params)
    return Jet.from_stack(stacked, coords, pairs)


def forward(net, inputs, params=None):
    """
    Evaluate the network.

    Parameters:
    - net (MlpNetwork): The network.
    - inputs (np.ndarray): One input vector (d,) or a batch (N, d).

    Returns:
    - np.ndarray: (output_size,) or (N, output_size).
    """
    single = np.ndim(inputs) == 1
    batch = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    stacked, _, _ = jet_stack(net, batch, params=params)
    out = stacked[0]
    return out[0] if single else out
