"""Binary cross-entropy on logits and the Adam update."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

T_MAX = 2**63 - 1


class LossReport(NamedTuple):
    mean: float
    per_sample: np.ndarray


def _check_labels(logits, labels):
    z = np.asarray(logits, dtype=np.float64).reshape(-1)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if z.shape != y.shape:
        raise ValueError(f"{z.size} logits but {y.size} labels")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    return z, y


def bce_loss(logits, labels) -> LossReport:
    """Mean binary cross-entropy of ``sigmoid(logits)`` against ``labels``.

    Uses ``max(z, 0) - z*y + log1p(exp(-|z|))``, which equals
    ``-(y log p + (1-y) log(1-p))`` but stays finite for confident mistakes.
    """
    z, y = _check_labels(logits, labels)
    per = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    return LossReport(float(per.mean()) if per.size else 0.0, per)


def bce_grad(logits, labels) -> np.ndarray:
    """d(mean loss)/d(logits) = (sigmoid(z) - y) / N, shaped like ``logits``."""
    z, y = _check_labels(logits, labels)
    e = np.exp(-np.abs(z))
    p = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    g = (p - y) / z.size
    return g.reshape(np.shape(logits)).astype(np.asarray(logits).dtype)


@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0
    alpha: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params, **hyper) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **hyper)


def adam_step(state: AdamState, params, grads) -> None:
    """One Adam update, applied in place to ``params`` and ``state``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError(f"{len(params)} params, {len(grads)} grads, {len(state.m)} moment slots")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}, moment {m.shape}")
    if state.t >= T_MAX:
        raise OverflowError("Adam step counter overflow")

    state.t += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**state.t
    corr2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / corr1
        v_hat = v / corr2
        p -= (state.alpha * m_hat / (np.sqrt(v_hat) + state.epsilon)).astype(p.dtype, copy=False)
