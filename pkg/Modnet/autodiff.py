"""
Automatic differentiation for Modnet.

Two mechanisms live here:

- ``Jet``: forward-mode propagation of first and second derivatives with
  respect to a few input coordinates. Components may be numpy arrays or
  recorded ``Node`` values, so a jet can itself sit on a gradient tape.
- ``GradientTape`` / ``Node``: reverse-mode differentiation of a scalar loss
  with respect to watched parameter arrays.

The elementwise helpers (``tanh``, ``exp``, ``where``, ...) accept plain
numbers, numpy arrays, nodes and jets, and dispatch accordingly.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .exceptions import ContractError, NumericError

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Reverse mode
# ---------------------------------------------------------------------------


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    grad = np.asarray(grad)
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def value_of(x):
    """Return the numeric value of ``x`` (the array behind a node, else ``x``)."""
    return x.value if isinstance(x, Node) else x


class Node:
    """
    A numpy array recorded on a ``GradientTape``.

    Nodes support the usual arithmetic operators with other nodes, numpy
    arrays and numbers. Each node keeps the forward function that produced it
    and a vector-Jacobian product returning one gradient per input.
    """

    # numpy defers binary operators to the node's reflected methods
    __array_ufunc__ = None

    def __init__(self, tape, value, op, inputs=(), forward=None, vjp=None):
        self.tape = tape
        self.value = np.asarray(value, dtype=np.float64)
        self.op = op
        self.inputs = tuple(inputs)
        self.forward = forward
        self.vjp = vjp
        self.index = len(tape.nodes)
        tape.nodes.append(self)

    def __repr__(self):
        return f"Node(op={self.op!r}, shape={self.shape})"

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def size(self):
        return self.value.size

    @property
    def T(self):
        return transpose(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None):
        return sum_(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def __getitem__(self, index):
        return getitem(self, index)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return subtract(self, other)

    def __rsub__(self, other):
        return subtract(other, self)

    def __mul__(self, other):
        return multiply(self, other)

    def __rmul__(self, other):
        return multiply(other, self)

    def __truediv__(self, other):
        return divide(self, other)

    def __rtruediv__(self, other):
        return divide(other, self)

    def __neg__(self):
        return negative(self)

    def __pow__(self, power):
        return power_(self, power)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)


class GradientTape:
    """
    Records array operations on watched parameters so that the gradient of a
    scalar loss can be computed by one reverse sweep.

    Nodes are appended in creation order, which is already a topological
    order of the computation.

    Example:
    >>> tape = GradientTape()
    >>> w = tape.watch("w", np.array([1.0, 2.0]))
    >>> loss = (w * w).sum()
    >>> tape.gradient(loss)["w"]
    array([2., 4.])
    """

    def __init__(self):
        self.nodes = []
        self.slots = {}

    def watch(self, name, array):
        """
        Register a parameter array as a differentiable leaf.

        Parameters:
        - name (str): Unique slot identifier.
        - array (np.ndarray): Parameter values; copied.

        Returns:
        - Node: The leaf node to use in place of the array.
        """
        if name in self.slots:
            raise ContractError(f"parameter slot {name!r} is already watched")
        node = Node(self, np.array(array, dtype=np.float64), f"parameter:{name}")
        self.slots[name] = node
        return node

    def constant(self, value):
        """Record a constant leaf (useful for losses that ignore every parameter)."""
        return Node(self, np.array(value, dtype=np.float64), "constant")

    def _check_loss(self, loss):
        if not isinstance(loss, Node) or loss.tape is not self:
            raise ContractError("loss was not recorded on this tape")
        if loss.size != 1:
            raise ContractError(f"loss must be a scalar, got shape {loss.shape}")

    def gradient(self, loss):
        """
        Differentiate a recorded scalar with respect to every watched slot.

        Parameters:
        - loss (Node): Scalar node recorded on this tape.

        Returns:
        - dict: Slot name -> gradient array with the slot's shape. Slots the
          loss does not depend on get zeros.

        Raises NumericError naming the first operation that produced a
        non-finite value or gradient.
        """
        self._check_loss(loss)
        for node in self.nodes[: loss.index + 1]:
            if not np.all(np.isfinite(node.value)):
                raise NumericError("non-finite value on the tape", op=node.op)

        grads = [None] * (loss.index + 1)
        grads[loss.index] = np.ones_like(loss.value)
        for node in reversed(self.nodes[: loss.index + 1]):
            grad = grads[node.index]
            if grad is None or node.vjp is None:
                continue
            values = [value_of(x) for x in node.inputs]
            contributions = node.vjp(grad, node.value, *values)
            for parent, contribution in zip(node.inputs, contributions):
                if not isinstance(parent, Node) or contribution is None:
                    continue
                contribution = _unbroadcast(contribution, parent.shape)
                if not np.all(np.isfinite(contribution)):
                    raise NumericError("non-finite gradient on the tape", op=node.op)
                previous = grads[parent.index]
                grads[parent.index] = (
                    contribution if previous is None else previous + contribution
                )

        result = {}
        for name, leaf in self.slots.items():
            grad = grads[leaf.index] if leaf.index <= loss.index else None
            result[name] = np.zeros_like(leaf.value) if grad is None else grad
        return result

    def replay(self, loss):
        """
        Recompute every recorded value up to ``loss`` from the leaves.

        Returns:
        - float: The recomputed loss value. Identical to the recorded one
          unless a leaf's value was changed in between.
        """
        self._check_loss(loss)
        for node in self.nodes[: loss.index + 1]:
            if node.forward is None:
                continue
            node.value = np.asarray(
                node.forward(*[value_of(x) for x in node.inputs]), dtype=np.float64
            )
        return float(loss.value.reshape(()))


def loss_gradient(loss, tape=None):
    """
    Gradient of a recorded scalar as one flat vector.

    Parameters:
    - loss (Node or float): Scalar recorded on ``tape``. A plain number is a
      constant loss.
    - tape (GradientTape): Needed only when ``loss`` is a plain number.

    Returns:
    - np.ndarray: Concatenation of the slot gradients in watch order.
    """
    if isinstance(loss, Node):
        tape = loss.tape
        grads = tape.gradient(loss)
    elif tape is not None:
        grads = {name: np.zeros_like(node.value) for name, node in tape.slots.items()}
    else:
        raise ContractError("loss_gradient needs a recorded loss or a tape")
    if not grads:
        return np.zeros(0)
    return np.concatenate([grad.ravel() for grad in grads.values()])


def primitive(op, forward, vjp, *args):
    """
    Apply a primitive operation, recording it when any argument is a node.

    Parameters:
    - op (str): Name shown in diagnostics.
    - forward (callable): ``forward(*values) -> ndarray``.
    - vjp (callable): ``vjp(grad, out, *values) -> tuple`` with one gradient
      (or None) per argument.
    - *args: Nodes, arrays or numbers.

    Returns:
    - Node if any argument is a node, otherwise the plain result.
    """
    tapes = {id(a.tape): a.tape for a in args if isinstance(a, Node)}
    values = [value_of(a) for a in args]
    if not tapes:
        return forward(*values)
    if len(tapes) > 1:
        raise ContractError(f"operands of {op!r} live on different tapes")
    tape = next(iter(tapes.values()))
    return Node(tape, forward(*values), op, args, forward, vjp)


def add(a, b):
    return primitive("add", np.add, lambda g, out, x, y: (g, g), a, b)


def subtract(a, b):
    return primitive("subtract", np.subtract, lambda g, out, x, y: (g, -g), a, b)


def multiply(a, b):
    return primitive("multiply", np.multiply, lambda g, out, x, y: (g * y, g * x), a, b)


def divide(a, b):
    return primitive(
        "divide",
        np.divide,
        lambda g, out, x, y: (g / y, -g * x / (y * y)),
        a,
        b,
    )


def negative(a):
    return primitive("negative", np.negative, lambda g, out, x: (-g,), a)


def power_(a, exponent):
    exponent = float(exponent)
    return primitive(
        "power",
        lambda x: np.power(x, exponent),
        lambda g, out, x: (g * exponent * np.power(x, exponent - 1.0),),
        a,
    )


def _matmul_vjp(g, out, a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim == 1 and b.ndim == 2:
        return b @ g, np.outer(a, g)
    if b.ndim == 1:
        grad_a = g[..., None] * b
        grad_b = a.reshape(-1, a.shape[-1]).T @ np.ravel(g)
        return grad_a, grad_b
    grad_a = g @ np.swapaxes(b, -1, -2)
    if b.ndim == 2:
        grad_b = a.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
    else:
        grad_b = np.swapaxes(a, -1, -2) @ g
    return grad_a, grad_b


def matmul(a, b):
    return primitive("matmul", np.matmul, _matmul_vjp, a, b)


def transpose(a):
    return primitive("transpose", np.transpose, lambda g, out, x: (np.transpose(g),), a)


def reshape(a, shape):
    shape = tuple(shape)
    return primitive(
        "reshape",
        lambda x: np.reshape(x, shape),
        lambda g, out, x: (np.reshape(g, np.shape(x)),),
        a,
    )


def broadcast_to(a, shape):
    shape = tuple(shape)
    return primitive(
        "broadcast_to",
        lambda x: np.array(np.broadcast_to(x, shape)),
        lambda g, out, x: (g,),
        a,
    )


def getitem(a, index):
    def vjp(g, out, x):
        grad = np.zeros(np.shape(x))
        np.add.at(grad, index, g)
        return (grad,)

    return primitive("getitem", lambda x: np.asarray(x)[index], vjp, a)


def stack(arrays, axis=0):
    """Stack nodes or arrays along a new axis."""
    count = len(arrays)

    def vjp(g, out, *xs):
        return tuple(np.take(g, i, axis=axis) for i in range(count))

    return primitive("stack", lambda *xs: np.stack(xs, axis=axis), vjp, *arrays)


def sum_(a, axis=None):
    def vjp(g, out, x):
        shape = np.shape(x)
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return primitive("sum", lambda x: np.sum(x, axis=axis), vjp, a)


def mean(a, axis=None):
    shape = np.shape(value_of(a))
    count = int(np.prod(shape)) if axis is None else shape[axis]
    if count == 0:
        raise ContractError("mean over an empty axis")
    return sum_(a, axis) * (1.0 / count)


# ---------------------------------------------------------------------------
# Forward mode
# ---------------------------------------------------------------------------


def _pair(i, j):
    return (i, j) if i <= j else (j, i)


def _terms(*terms):
    """Sum the non-None terms; None when every term is None."""
    total = None
    for term in terms:
        if term is None:
            continue
        total = term if total is None else total + term
    return total


def _times(a, b):
    if a is None or b is None:
        return None
    return a * b


class Jet:
    """
    A value with its first derivatives along ``coords`` and second
    derivatives for ``pairs`` of coordinates.

    Missing entries in ``d1`` / ``d2`` are zero. Pairs are stored with
    ``i <= j``; ``second(i, j)`` is symmetric.

    Parameters:
    - value: Array, node or number.
    - d1 (dict): coordinate -> first derivative.
    - d2 (dict): (i, j) -> second derivative.
    - coords (iterable): Coordinates to track (defaults to the keys of d1).
    - pairs (iterable): Pairs to track (defaults to the keys of d2).
    """

    __array_ufunc__ = None

    def __init__(self, value, d1=None, d2=None, coords=None, pairs=None):
        self.value = value
        self.d1 = dict(d1 or {})
        self.d2 = {_pair(*p): c for p, c in (d2 or {}).items()}
        pairs = set(_pair(*p) for p in (pairs if pairs is not None else ())) | set(self.d2)
        coords = set(coords if coords is not None else ()) | set(self.d1)
        coords |= {i for p in pairs for i in p}
        self.coords = tuple(sorted(coords))
        self.pairs = tuple(sorted(pairs))

    def __repr__(self):
        return f"Jet(shape={np.shape(value_of(self.value))}, coords={self.coords}, pairs={self.pairs})"

    @classmethod
    def variable(cls, value, coord, coords, pairs=()):
        """Seed input coordinate ``coord`` (derivative one along itself)."""
        d1 = {coord: 1.0} if coord in set(coords) | {i for p in pairs for i in p} else {}
        return cls(value, d1, coords=coords, pairs=pairs)

    @property
    def shape(self):
        return np.shape(value_of(self.value))

    def first(self, coord):
        comp = self.d1.get(coord)
        return np.zeros(self.shape) if comp is None else comp

    def second(self, i, j):
        comp = self.d2.get(_pair(i, j))
        return np.zeros(self.shape) if comp is None else comp

    def _merge(self, other, coords=None, pairs=None):
        return (
            tuple(sorted(set(self.coords) | set(other.coords))),
            tuple(sorted(set(self.pairs) | set(other.pairs))),
        )

    @staticmethod
    def lift(other):
        return other if isinstance(other, Jet) else Jet(other)

    def __add__(self, other):
        other = Jet.lift(other)
        coords, pairs = self._merge(other)
        return Jet(
            self.value + other.value,
            {c: _terms(self.d1.get(c), other.d1.get(c)) for c in coords if c in self.d1 or c in other.d1},
            {p: _terms(self.d2.get(p), other.d2.get(p)) for p in pairs if p in self.d2 or p in other.d2},
            coords,
            pairs,
        )

    __radd__ = __add__

    def __neg__(self):
        return Jet(
            -self.value,
            {c: -v for c, v in self.d1.items()},
            {p: -v for p, v in self.d2.items()},
            self.coords,
            self.pairs,
        )

    def __sub__(self, other):
        return self + (-Jet.lift(other))

    def __rsub__(self, other):
        return Jet.lift(other) + (-self)

    def __mul__(self, other):
        other = Jet.lift(other)
        coords, pairs = self._merge(other)
        a, b = self, other
        d1 = {}
        for c in coords:
            term = _terms(_times(a.d1.get(c), b.value), _times(a.value, b.d1.get(c)))
            if term is not None:
                d1[c] = term
        d2 = {}
        for i, j in pairs:
            term = _terms(
                _times(a.d2.get((i, j)), b.value),
                _times(a.d1.get(i), b.d1.get(j)),
                _times(a.d1.get(j), b.d1.get(i)),
                _times(a.value, b.d2.get((i, j))),
            )
            if term is not None:
                d2[(i, j)] = term
        return Jet(a.value * b.value, d1, d2, coords, pairs)

    __rmul__ = __mul__

    def chain(self, f, f1, f2):
        """
        Apply a scalar function elementwise.

        Parameters:
        - f (callable): ``f(value)``.
        - f1 (callable): ``f1(value, fv)``, the first derivative.
        - f2 (callable): ``f2(value, fv, f1v)``, the second derivative.
        """
        v = self.value
        fv = f(v)
        f1v = f1(v, fv)
        d1 = {c: f1v * comp for c, comp in self.d1.items()}
        d2 = {}
        if self.pairs:
            f2v = f2(v, fv, f1v)
            for i, j in self.pairs:
                term = _terms(
                    _times(f2v, _times(self.d1.get(i), self.d1.get(j))),
                    _times(f1v, self.d2.get((i, j))),
                )
                if term is not None:
                    d2[(i, j)] = term
        return Jet(fv, d1, d2, self.coords, self.pairs)

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.chain(
                lambda v: 1.0 / v,
                lambda v, f: -(f * f),
                lambda v, f, f1: 2.0 * f * f * f,
            )
        return self * (1.0 / other)

    def __rtruediv__(self, other):
        return Jet.lift(other) / self

    def __pow__(self, exponent):
        n = float(exponent)
        if n == 1.0:
            return self
        return self.chain(
            lambda v: v**n,
            lambda v, f: n * v ** (n - 1.0),
            lambda v, f, f1: n * (n - 1.0) * v ** (n - 2.0),
        )

    def _map(self, fn):
        return Jet(
            fn(self.value),
            {c: fn(v) for c, v in self.d1.items()},
            {p: fn(v) for p, v in self.d2.items()},
            self.coords,
            self.pairs,
        )

    def full(self):
        """Broadcast every stored component to the value's shape."""
        shape = self.shape

        def expand(comp):
            if np.shape(value_of(comp)) == shape:
                return comp
            return broadcast_to(comp, shape) if isinstance(comp, Node) else np.broadcast_to(comp, shape).copy()

        return self._map(expand)

    def matmul(self, matrix):
        """Right-multiply every component by a constant matrix."""
        return self._map(lambda comp: comp @ matrix)

    def reshape(self, shape):
        full = self.full()
        return full._map(lambda comp: comp.reshape(shape) if isinstance(comp, Node) else np.reshape(comp, shape))

    def __getitem__(self, index):
        return self.full()._map(lambda comp: comp[index])

    def sum(self, axis=None):
        return self.full()._map(lambda comp: sum_(comp, axis))

    def channels(self):
        """Components in stacking order: value, d1 by coordinate, d2 by pair."""
        return (
            [self.value]
            + [self.first(c) for c in self.coords]
            + [self.second(i, j) for i, j in self.pairs]
        )

    def stack(self):
        """All channels stacked on a new leading axis (full shape)."""
        return stack(self.full().channels())

    @classmethod
    def from_stack(cls, stacked, coords, pairs):
        """Inverse of ``stack`` for the given channel layout."""
        coords = tuple(coords)
        pairs = tuple(pairs)
        d1 = {c: stacked[1 + k] for k, c in enumerate(coords)}
        offset = 1 + len(coords)
        d2 = {p: stacked[offset + k] for k, p in enumerate(pairs)}
        return cls(stacked[0], d1, d2, coords, pairs)


def channel_layout(coords=(), pairs=()):
    """
    Normalise a derivative request.

    Returns:
    - (coords, pairs): sorted coordinates (including those named by pairs)
      and sorted, de-duplicated pairs with ``i <= j``.
    """
    pairs = tuple(sorted({_pair(*p) for p in pairs}))
    coords = tuple(sorted(set(coords) | {i for p in pairs for i in p}))
    return coords, pairs


@dataclass
class Jet2:
    """
    Derivatives of a scalar network output at one input point.

    ``d2`` holds both orders of every requested pair.
    """

    value: float
    d1: dict = field(default_factory=dict)
    d2: dict = field(default_factory=dict)


def eval_jet(net, point, wanted):
    """
    Value and requested derivatives of a scalar-output network at one point.

    Parameters:
    - net: Any object with a ``jet(inputs, coords, pairs)`` method (MlpNetwork).
    - point (sequence of float): The input vector.
    - wanted (iterable): Coordinates (int) and/or coordinate pairs (tuple).

    Returns:
    - Jet2: value, first derivatives for requested coordinates, second
      derivatives for requested pairs (stored in both orders).

    Example:
    >>> jet = eval_jet(net, [0.3, 0.7], [0, (0, 0), (0, 1)])
    >>> jet.d2[(1, 0)] == jet.d2[(0, 1)]
    True
    """
    point = np.asarray(point, dtype=np.float64).reshape(1, -1)
    wanted = list(wanted)
    coords = [w for w in wanted if not isinstance(w, tuple)]
    pairs = [w for w in wanted if isinstance(w, tuple)]
    for c in coords + [i for p in pairs for i in p]:
        if not 0 <= c < point.shape[1]:
            raise ContractError(f"coordinate {c} out of range for input of size {point.shape[1]}")
    jet = net.jet(point, coords, pairs)
    if np.shape(jet.value)[-1] != 1:
        raise ContractError("eval_jet needs a network with a scalar output")
    result = Jet2(float(np.asarray(jet.value).reshape(-1)[0]))
    for c in coords:
        result.d1[c] = float(np.asarray(jet.first(c)).reshape(-1)[0])
    for i, j in pairs:
        second = float(np.asarray(jet.second(i, j)).reshape(-1)[0])
        result.d2[(i, j)] = second
        result.d2[(j, i)] = second
    return result


# ---------------------------------------------------------------------------
# Elementwise functions for numbers, arrays, nodes and jets
# ---------------------------------------------------------------------------


def tanh(x):
    if isinstance(x, Jet):
        return x.chain(tanh, lambda v, f: 1.0 - f * f, lambda v, f, f1: -2.0 * f * f1)
    return primitive("tanh", np.tanh, lambda g, out, v: (g * (1.0 - out * out),), x)


def sigmoid(x):
    if isinstance(x, Jet):
        return x.chain(
            sigmoid, lambda v, f: f * (1.0 - f), lambda v, f, f1: f1 * (1.0 - 2.0 * f)
        )
    return primitive("sigmoid", expit, lambda g, out, v: (g * out * (1.0 - out),), x)


def exp(x):
    if isinstance(x, Jet):
        return x.chain(exp, lambda v, f: f, lambda v, f, f1: f)
    return primitive("exp", np.exp, lambda g, out, v: (g * out,), x)


def sin(x):
    if isinstance(x, Jet):
        return x.chain(sin, lambda v, f: cos(v), lambda v, f, f1: -f)
    return primitive("sin", np.sin, lambda g, out, v: (g * np.cos(v),), x)


def cos(x):
    if isinstance(x, Jet):
        return x.chain(cos, lambda v, f: -sin(v), lambda v, f, f1: -f)
    return primitive("cos", np.cos, lambda g, out, v: (-g * np.sin(v),), x)


def square(x):
    return x * x


def where(condition, a, b):
    """
    Elementwise selection with a constant boolean condition.

    Derivative components are selected the same way as values, so a jet of a
    piecewise function carries the derivatives of the active branch.
    """
    condition = np.asarray(condition, dtype=bool)
    if isinstance(a, Jet) or isinstance(b, Jet):
        a = Jet.lift(a)
        b = Jet.lift(b)
        coords, pairs = a._merge(b)
        d1 = {c: where(condition, a.first(c), b.first(c)) for c in coords if c in a.d1 or c in b.d1}
        d2 = {p: where(condition, a.second(*p), b.second(*p)) for p in pairs if p in a.d2 or p in b.d2}
        return Jet(where(condition, a.value, b.value), d1, d2, coords, pairs)
    return primitive(
        "where",
        lambda x, y: np.where(condition, x, y),
        lambda g, out, x, y: (np.where(condition, g, 0.0), np.where(condition, 0.0, g)),
        a,
        b,
    )
