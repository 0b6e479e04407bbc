import math

import numpy as np
import pytest

from scaffoldnet.synthetic import generate_synthetic

ACCEPTANCE_LINES: list[str] = []


def central_diff(f, x, rel_step=1e-3):
    """Central-difference gradient of scalar ``f()`` w.r.t. array ``x`` (mutated in place)."""
    g = np.zeros(x.shape)
    flat, gf = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        h = rel_step * max(abs(orig), 1.0)
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gf[i] = (fp - fm) / (2 * h)
    return g


def max_rel_err(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-12)))


def naive_conv(x, w, b):
    """Direct-summation valid 3x3 convolution, the loop-by-loop definition."""
    n, h, wd, c = x.shape
    o = w.shape[3]
    y = np.zeros((n, h - 2, wd - 2, o))
    for i in range(h - 2):
        for j in range(wd - 2):
            patch = x[:, i:i + 3, j:j + 3, :]
            for oc in range(o):
                y[:, i, j, oc] = (patch * w[:, :, :, oc]).sum(axis=(1, 2, 3)) + b[oc]
    return y


def adam_reference(theta0, grad_fn, steps, alpha=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
    """Scalar Adam written out line by line from the update rule."""
    theta, m, v = float(theta0), 0.0, 0.0
    out = []
    for t in range(1, steps + 1):
        g = grad_fn(theta)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        theta = theta - alpha * m_hat / (math.sqrt(v_hat) + eps)
        out.append(theta)
    return out


def naive_bce(z, y):
    p = 1.0 / (1.0 + np.exp(-z))
    return -(y * np.log(p) + (1 - y) * np.log(1 - p))


def brute_auc(scores, labels):
    """Enumerate every (positive, negative) pair; ties earn half."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    twice = 0
    for a in pos:
        for b in neg:
            twice += 2 if a > b else (1 if a == b else 0)
    return twice / (2.0 * len(pos) * len(neg))


def brute_roc(scores, labels):
    """(fpr, tpr) at +inf and at every distinct score, highest first."""
    scores, labels = list(scores), list(labels)
    n_pos = sum(labels)
    n_neg = len(labels) - n_pos
    pts = [(0.0, 0.0)]
    for t in sorted(set(scores), reverse=True):
        tp = sum(1 for s, y in zip(scores, labels) if s >= t and y == 1)
        fp = sum(1 for s, y in zip(scores, labels) if s >= t and y == 0)
        pts.append((fp / n_neg, tp / n_pos))
    return pts


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """12 synthetic images per category."""
    root = tmp_path_factory.mktemp("synth_small")
    generate_synthetic(12, seed=11, out_dir=root)
    return root


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
