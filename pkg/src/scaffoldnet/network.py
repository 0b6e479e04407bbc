"""The cell-line classifier: three 3x3 convolutions, global average pooling,
two dropout-regularised dense layers and a sigmoid output."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import layers as L
from .tensor import TRAIN_DTYPE, RngStream

# Layer kinds, also the on-disk codes.
CONV, RELU, GAP, DROPOUT, DENSE, SIGMOID = 1, 2, 3, 4, 5, 6
KIND_NAMES = {CONV: "conv", RELU: "relu", GAP: "gap", DROPOUT: "dropout", DENSE: "dense", SIGMOID: "sigmoid"}

TOPOLOGY = (CONV, RELU, CONV, RELU, CONV, RELU, GAP, DROPOUT, DENSE, RELU, DROPOUT, DENSE, SIGMOID)

DEFAULT_WIDTHS = (32, 32, 64, 32)
INPUT_SIZE = 128
DROPOUT_RATE = 0.5


@dataclass
class ConvParams:
    weights: np.ndarray  # [3, 3, c_in, c_out]
    bias: np.ndarray  # [c_out]


@dataclass
class DenseParams:
    weights: np.ndarray  # [f_in, units]
    bias: np.ndarray  # [units]


class Network:
    """Parameter container for the fixed layer stack.

    ``widths`` are the filter counts of the three convolutions followed by
    the hidden dense width; the defaults give the published model.  Reduced
    widths and input sizes exist for gradient checks and tests.
    """

    def __init__(self, convs, denses, input_size=INPUT_SIZE, dropout_rate=DROPOUT_RATE):
        self.convs = list(convs)
        self.denses = list(denses)
        self.input_size = int(input_size)
        self.dropout_rate = float(dropout_rate)
        self._validate()

    def _validate(self):
        if len(self.convs) != 3 or len(self.denses) != 2:
            raise ValueError("network needs exactly 3 conv and 2 dense layers")
        c_in = 1
        for i, p in enumerate(self.convs):
            if p.weights.ndim != 4 or p.weights.shape[:3] != (3, 3, c_in):
                raise ValueError(f"conv{i + 1} weights {p.weights.shape} do not continue a {c_in}-channel input")
            if p.bias.shape != (p.weights.shape[3],):
                raise ValueError(f"conv{i + 1} bias {p.bias.shape} does not match weights {p.weights.shape}")
            c_in = p.weights.shape[3]
        f_in = c_in
        for i, p in enumerate(self.denses):
            if p.weights.ndim != 2 or p.weights.shape[0] != f_in:
                raise ValueError(f"dense{i + 1} weights {p.weights.shape} do not take {f_in} features")
            if p.bias.shape != (p.weights.shape[1],):
                raise ValueError(f"dense{i + 1} bias {p.bias.shape} does not match weights {p.weights.shape}")
            f_in = p.weights.shape[1]
        if f_in != 1:
            raise ValueError(f"output layer must have a single unit, has {f_in}")
        if self.input_size - 6 < 1:
            raise ValueError(f"input size {self.input_size} too small for three valid 3x3 convolutions")

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(p.weights.shape[3] for p in self.convs) + (self.denses[0].weights.shape[1],)

    @property
    def dtype(self):
        return self.convs[0].weights.dtype

    def params(self) -> list[np.ndarray]:
        """Parameter arrays in a fixed order (weights before bias, input to output)."""
        out = []
        for p in self.convs + self.denses:
            out.extend((p.weights, p.bias))
        return out

    def param_names(self) -> list[str]:
        names = []
        for i in range(3):
            names += [f"conv{i + 1}.weights", f"conv{i + 1}.bias"]
        for i in range(2):
            names += [f"dense{i + 1}.weights", f"dense{i + 1}.bias"]
        return names

    def set_params(self, values) -> None:
        for dst, src in zip(self.params(), values, strict=True):
            if dst.shape != src.shape:
                raise ValueError(f"parameter shape {src.shape} != {dst.shape}")
            dst[...] = src

    def copy(self) -> "Network":
        return self.astype(self.dtype)

    def astype(self, dtype) -> "Network":
        convs = [ConvParams(p.weights.astype(dtype), p.bias.astype(dtype)) for p in self.convs]
        denses = [DenseParams(p.weights.astype(dtype), p.bias.astype(dtype)) for p in self.denses]
        return Network(convs, denses, self.input_size, self.dropout_rate)

    def shape_chain(self, n: int = 1) -> list[tuple[int, ...]]:
        """Activation shapes after each conv, the pooling and each dense layer."""
        s = self.input_size
        chain = []
        for p in self.convs:
            s -= 2
            chain.append((n, s, s, p.weights.shape[3]))
        chain.append((n, self.convs[-1].weights.shape[3]))
        for p in self.denses:
            chain.append((n, p.weights.shape[1]))
        return chain

    def n_params(self) -> int:
        return sum(p.size for p in self.params())


def init_network(
    rng: RngStream,
    widths=DEFAULT_WIDTHS,
    input_size: int = INPUT_SIZE,
    dropout_rate: float = DROPOUT_RATE,
    dtype=TRAIN_DTYPE,
) -> Network:
    """He-normal weights for the ReLU layers, variance 1/fan_in for the
    sigmoid output, zero biases.  Each tensor draws from its own child stream."""
    c1, c2, c3, hidden = widths
    convs = []
    c_in = 1
    for i, c_out in enumerate((c1, c2, c3)):
        fan_in = 9 * c_in
        w, _ = rng.derive(i).normal(9 * c_in * c_out, 0.0, np.sqrt(2.0 / fan_in))
        convs.append(ConvParams(w.reshape(3, 3, c_in, c_out).astype(dtype), np.zeros(c_out, dtype)))
        c_in = c_out
    w, _ = rng.derive(3).normal(c3 * hidden, 0.0, np.sqrt(2.0 / c3))
    d1 = DenseParams(w.reshape(c3, hidden).astype(dtype), np.zeros(hidden, dtype))
    w, _ = rng.derive(4).normal(hidden, 0.0, np.sqrt(1.0 / hidden))
    d2 = DenseParams(w.reshape(hidden, 1).astype(dtype), np.zeros(1, dtype))
    return Network(convs, [d1, d2], input_size, dropout_rate)


class ForwardResult(NamedTuple):
    probs: np.ndarray  # [N, 1], float64, strictly inside (0, 1)
    logits: np.ndarray  # [N, 1]
    caches: list | None


_P_LO = np.nextafter(0.0, 1.0)
_P_HI = np.nextafter(1.0, 0.0)


def network_forward(net: Network, batch: np.ndarray, train: bool = False, rng: RngStream | None = None) -> ForwardResult:
    """Run the stack.  Eval mode keeps no caches and draws no randomness."""
    s = net.input_size
    if batch.ndim != 4 or batch.shape[1:] != (s, s, 1):
        raise ValueError(f"expected input [N,{s},{s},1], got {batch.shape}")
    x = np.ascontiguousarray(batch, dtype=net.dtype)
    caches = [] if train else None
    chain = net.shape_chain(x.shape[0])

    for i, p in enumerate(net.convs):
        x, c = L.conv2d_forward(x, p.weights, p.bias)
        x, r = L.relu_forward(x)
        assert x.shape == chain[i]
        if train:
            caches.append((c, r))

    x, g = L.gap_forward(x)
    x, m1 = L.dropout_forward(x, net.dropout_rate, train, rng.derive(1) if train and rng is not None else None)
    x, d1 = L.dense_forward(x, net.denses[0].weights, net.denses[0].bias)
    x, r1 = L.relu_forward(x)
    x, m2 = L.dropout_forward(x, net.dropout_rate, train, rng.derive(2) if train and rng is not None else None)
    logits, d2 = L.dense_forward(x, net.denses[1].weights, net.denses[1].bias)
    assert logits.shape == chain[-1]
    if train:
        caches.append((g, m1, d1, r1, m2, d2))

    probs = np.clip(L.sigmoid(logits.astype(np.float64)), _P_LO, _P_HI)
    return ForwardResult(probs, logits, caches)


def network_backward(net: Network, caches, dlogit: np.ndarray) -> list[np.ndarray]:
    """Gradients for :meth:`Network.params`, in the same order."""
    if not caches:
        raise ValueError("backward needs the caches of a train-mode forward pass")
    g, m1, d1, r1, m2, d2 = caches[-1]
    rate = net.dropout_rate
    dy = np.asarray(dlogit, dtype=net.dtype)
    grads_dense = []
    dy, dw, db = L.dense_backward(d2, dy)
    grads_dense.append((dw, db))
    dy = L.dropout_backward(m2, dy, rate)
    dy = L.relu_backward(r1, dy)
    dy, dw, db = L.dense_backward(d1, dy)
    grads_dense.append((dw, db))
    dy = L.dropout_backward(m1, dy, rate)
    dy = L.gap_backward(g, dy)

    grads_conv = []
    for i in (2, 1, 0):
        c, r = caches[i]
        dy = L.relu_backward(r, dy)
        dy, dw, db = L.conv2d_backward(c, dy, need_dx=i > 0)
        grads_conv.append((dw, db))

    out = []
    for dw, db in reversed(grads_conv):
        out += [dw, db]
    for dw, db in reversed(grads_dense):
        out += [dw, db]
    return out
