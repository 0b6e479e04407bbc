"""Forward and backward passes for the individual layer types.

All activations are NHWC.  Each ``*_forward`` returns ``(output, cache)``;
the matching ``*_backward`` consumes that cache.  Functions keep the dtype
of their inputs, so the same code serves float32 training and float64
gradient checks.
"""

from __future__ import annotations

import numpy as np

from .tensor import RngStream

KERNEL = 3


def _block_rows(channels: int) -> int:
    # ~64 KiB of im2col rows per block keeps the gather in cache.
    return int(min(16384, max(256, 16384 // channels)))


def _check_conv(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> None:
    if x.ndim != 4:
        raise ValueError(f"conv input must be NHWC, got shape {x.shape}")
    if w.shape[:2] != (KERNEL, KERNEL) or w.ndim != 4:
        raise ValueError(f"conv weights must be [3,3,c_in,c_out], got {w.shape}")
    if x.shape[1] < KERNEL or x.shape[2] < KERNEL:
        raise ValueError(f"spatial extent {x.shape[1:3]} smaller than the 3x3 kernel")
    if x.shape[3] != w.shape[2]:
        raise ValueError(f"input has {x.shape[3]} channels, weights expect {w.shape[2]}")
    if b.shape != (w.shape[3],):
        raise ValueError(f"bias shape {b.shape} does not match {w.shape[3]} filters")


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """3x3 convolution, stride 1, valid padding.

    The image batch is viewed as one flat ``(N*H*W, C)`` matrix.  Tap
    ``(di, dj)`` of output row ``r`` is input row ``r + di*W + dj``, so the
    im2col matrix is assembled from nine row-shifted slices, one block of
    rows at a time.  Rows whose window would leave the image are computed
    too and cropped afterwards.
    """
    _check_conv(x, w, b)
    x = np.ascontiguousarray(x)
    n, h, wd, c = x.shape
    o = w.shape[3]
    m = n * h * wd
    valid_rows = m - (KERNEL - 1) * (wd + 1)
    shifts = [di * wd + dj for di in range(KERNEL) for dj in range(KERNEL)]
    xf = x.reshape(m, c)
    w2 = w.reshape(KERNEL * KERNEL * c, o)

    yf = np.zeros((m, o), dtype=x.dtype)
    step = _block_rows(c)
    buf = np.empty((step, KERNEL * KERNEL * c), dtype=x.dtype)
    for a in range(0, valid_rows, step):
        rows = min(step, valid_rows - a)
        for k, s in enumerate(shifts):
            buf[:rows, k * c:(k + 1) * c] = xf[a + s:a + s + rows]
        np.matmul(buf[:rows], w2, out=yf[a:a + rows])

    y = yf.reshape(n, h, wd, o)[:, :h - 2, :wd - 2, :] + b
    return y, (x, w)


def conv2d_backward(cache, dy: np.ndarray, need_dx: bool = True):
    """Gradients ``(dx, dw, db)`` of a :func:`conv2d_forward` call.

    ``dx`` is ``None`` when ``need_dx`` is false (first layer).
    """
    x, w = cache
    n, h, wd, c = x.shape
    o = w.shape[3]
    if dy.shape != (n, h - 2, wd - 2, o):
        raise ValueError(f"dy shape {dy.shape} does not match conv output {(n, h - 2, wd - 2, o)}")
    m = n * h * wd
    valid_rows = m - (KERNEL - 1) * (wd + 1)
    shifts = [di * wd + dj for di in range(KERNEL) for dj in range(KERNEL)]
    xf = x.reshape(m, c)
    w2t = np.ascontiguousarray(w.reshape(KERNEL * KERNEL * c, o).T)

    dyf = np.zeros((n, h, wd, o), dtype=dy.dtype)
    dyf[:, :h - 2, :wd - 2, :] = dy
    dyf = dyf.reshape(m, o)

    dw2 = np.zeros((KERNEL * KERNEL * c, o), dtype=x.dtype)
    dxf = np.zeros((m, c), dtype=x.dtype) if need_dx else None
    step = _block_rows(c)
    buf = np.empty((step, KERNEL * KERNEL * c), dtype=x.dtype)
    dbuf = np.empty((step, KERNEL * KERNEL * c), dtype=x.dtype)
    for a in range(0, valid_rows, step):
        rows = min(step, valid_rows - a)
        for k, s in enumerate(shifts):
            buf[:rows, k * c:(k + 1) * c] = xf[a + s:a + s + rows]
        dw2 += buf[:rows].T @ dyf[a:a + rows]
        if need_dx:
            np.matmul(dyf[a:a + rows], w2t, out=dbuf[:rows])
            for k, s in enumerate(shifts):
                dxf[a + s:a + s + rows] += dbuf[:rows, k * c:(k + 1) * c]

    db = dy.sum(axis=(0, 1, 2))
    dx = dxf.reshape(n, h, wd, c) if need_dx else None
    return dx, dw2.reshape(w.shape), db


def relu_forward(x: np.ndarray):
    y = np.maximum(x, 0)
    return y, y


def relu_backward(cache: np.ndarray, dy: np.ndarray) -> np.ndarray:
    # cache is the output; y > 0 exactly where x > 0, so the slope at 0 is 0.
    return dy * (cache > 0)


def gap_forward(x: np.ndarray):
    if x.ndim != 4 or x.shape[1] < 1 or x.shape[2] < 1:
        raise ValueError(f"global average pooling needs NHWC input, got {x.shape}")
    return x.mean(axis=(1, 2), dtype=x.dtype), x.shape


def gap_backward(cache, dy: np.ndarray) -> np.ndarray:
    n, h, w, c = cache
    if dy.shape != (n, c):
        raise ValueError(f"dy shape {dy.shape} does not match pooled output {(n, c)}")
    scale = dy.dtype.type(1.0 / (h * w))
    return np.broadcast_to((dy * scale)[:, None, None, :], cache).copy()


def dropout_forward(x: np.ndarray, rate: float, train: bool, rng: RngStream | None = None):
    """Inverted dropout.  Returns ``(y, mask)``; ``mask`` is None in eval mode."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x, None
    if rng is None:
        raise ValueError("train-mode dropout needs an RngStream")
    u, _ = rng.uniform(x.size)
    mask = (u >= rate).reshape(x.shape)
    scale = x.dtype.type(1.0 / (1.0 - rate))
    return x * mask * scale, mask


def dropout_backward(mask, dy: np.ndarray, rate: float) -> np.ndarray:
    if mask is None:
        return dy
    return dy * mask * dy.dtype.type(1.0 / (1.0 - rate))


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ValueError(f"dense shapes incompatible: x {x.shape}, W {w.shape}, b {b.shape}")
    return x @ w + b, (x, w)


def dense_backward(cache, dy: np.ndarray):
    x, w = cache
    if dy.shape != (x.shape[0], w.shape[1]):
        raise ValueError(f"dy shape {dy.shape} does not match dense output {(x.shape[0], w.shape[1])}")
    return dy @ w.T, x.T @ dy, dy.sum(axis=0)


def sigmoid(x):
    """Logistic function, evaluated as ``e/(1+e)`` with ``e = exp(-|x|)``
    on the negative side so large magnitudes never overflow."""
    x = np.asarray(x)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


sigmoid_forward = sigmoid
