"""Dense-array substrate.

Tensors are plain C-contiguous :class:`numpy.ndarray` objects of rank 1-4.
Training runs in float32; gradient checking switches to float64 ("check
mode").  Randomness comes from :class:`RngStream`, a counter-based
generator: the i-th draw of a stream is a pure function of
``(seed, stream_id, i)``, so any sample's randomness can be recomputed
without replaying the draws that came before it.

Generator algorithm (stable across versions)
--------------------------------------------
``key = mix64(seed ^ mix64(stream_id + GAMMA))``; draw ``i`` (0-based,
counted from the stream's counter) is ``mix64(key + (i + 1) * GAMMA)``
with wrapping 64-bit arithmetic, where ``GAMMA = 0x9E3779B97F4A7C15`` and
``mix64`` is the SplitMix64 finalizer.  Uniforms take the top 53 bits:
``(x >> 11) * 2**-53``.  Normals use the Box-Muller transform on pairs of
uniforms ``(u1, u2)``: ``sqrt(-2 ln(1 - u1)) * (cos, sin)(2 pi u2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

TRAIN_DTYPE = np.float32
CHECK_DTYPE = np.float64

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def _mix64_int(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _M1) & _MASK64
    z = ((z ^ (z >> 27)) * _M2) & _MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


@dataclass(frozen=True)
class RngStream:
    """Deterministic, splittable random stream.

    Draw methods return ``(values, advanced_stream)``; the stream itself is
    immutable so it can be shared freely.
    """

    seed: int
    stream_id: int = 0
    counter: int = 0

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & _MASK64)
        object.__setattr__(self, "stream_id", int(self.stream_id) & _MASK64)
        if self.counter < 0:
            raise ValueError("counter must be non-negative")

    @property
    def _key(self) -> int:
        return _mix64_int(self.seed ^ _mix64_int(self.stream_id + _GAMMA))

    def derive(self, *keys: int) -> "RngStream":
        """Child stream addressed by ``keys``; distinct keys give unrelated streams."""
        sid = self.stream_id
        for k in keys:
            sid = _mix64_int(_mix64_int(sid ^ 0x632BE59BD9B4E019) + (int(k) & _MASK64) * _GAMMA)
        return RngStream(self.seed, sid, 0)

    def bits(self, n: int) -> tuple[np.ndarray, "RngStream"]:
        if n < 0:
            raise ValueError(f"draw count must be >= 0, got {n}")
        idx = np.arange(self.counter + 1, self.counter + 1 + n, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self._key) + idx * np.uint64(_GAMMA)
            out = _mix64_array(z)
        return out, replace(self, counter=self.counter + n)

    def uniform(self, n: int) -> tuple[np.ndarray, "RngStream"]:
        b, nxt = self.bits(n)
        return (b >> np.uint64(11)).astype(np.float64) * 2.0**-53, nxt

    def normal(self, n: int, mu: float = 0.0, sigma: float = 1.0) -> tuple[np.ndarray, "RngStream"]:
        if sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {sigma}")
        pairs = (n + 1) // 2
        u, nxt = self.uniform(2 * pairs)
        r = np.sqrt(-2.0 * np.log1p(-u[0::2]))
        theta = 2.0 * np.pi * u[1::2]
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        return mu + sigma * z[:n], nxt

    def permutation(self, n: int) -> tuple[np.ndarray, "RngStream"]:
        """Uniform random permutation of ``range(n)`` (argsort of random keys)."""
        b, nxt = self.bits(n)
        return np.argsort(b, kind="stable"), nxt


def rng_uniform(s: RngStream, n: int) -> tuple[np.ndarray, RngStream]:
    return s.uniform(n)


def rng_normal(s: RngStream, n: int, mu: float = 0.0, sigma: float = 1.0) -> tuple[np.ndarray, RngStream]:
    return s.normal(n, mu, sigma)


def _check_shape(shape: Sequence[int]) -> tuple[int, ...]:
    shape = tuple(int(e) for e in shape)
    if not 1 <= len(shape) <= 4:
        raise ValueError(f"rank must be 1-4, got {len(shape)}")
    if any(e < 1 for e in shape):
        raise ValueError(f"all extents must be >= 1, got {shape}")
    return shape


def tensor_filled(shape: Sequence[int], value: float, dtype=TRAIN_DTYPE) -> np.ndarray:
    return np.full(_check_shape(shape), value, dtype=dtype)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a @ b`` for 2-D operands, with the inner extents checked."""
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner extents differ: {a.shape} x {b.shape}")
    return a @ b


def reduce_mean(x: np.ndarray, axes: Iterable[int] = ()) -> np.ndarray:
    axes = tuple(axes)
    for ax in axes:
        if not -x.ndim <= ax < x.ndim:
            raise ValueError(f"axis {ax} out of range for rank {x.ndim}")
    norm = tuple(ax % x.ndim for ax in axes)
    if len(set(norm)) != len(norm):
        raise ValueError(f"duplicate axis in {axes}")
    if not norm:
        return x.copy()
    return x.mean(axis=norm, dtype=x.dtype)


def flat_index(shape: Sequence[int], coord: Sequence[int]) -> int:
    idx = 0
    for extent, c in zip(shape, coord):
        idx = idx * extent + c
    return idx
