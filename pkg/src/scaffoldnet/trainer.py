"""Training loop, evaluation, prediction and the gradient check."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import metrics
from .data import (
    DEFAULT_CATEGORIES,
    TAG_DROPOUT,
    TAG_INIT,
    AugmentConfig,
    DatasetSplit,
    Sample,
    batch_iter,
    default_counts,
    load_image,
    load_samples,
    scan_dataset,
    split_dataset,
    standardize,
)
from .network import Network, init_network, network_backward, network_forward
from .optim import AdamState, adam_step, bce_grad, bce_loss
from .tensor import CHECK_DTYPE, RngStream

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 8
    batch_size: int = 32
    alpha: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    dataset_root: str | None = None
    categories: tuple[str, ...] = DEFAULT_CATEGORIES
    n_train: int | None = None
    n_val: int | None = None
    n_test: int | None = None
    augment: AugmentConfig | None = field(default_factory=AugmentConfig)
    # Every code path here is deterministic; the flag is kept for config compatibility.
    deterministic: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        self.categories = tuple(self.categories)
        if len(self.categories) != 2:
            raise ValueError(f"exactly two categories required, got {list(self.categories)}")

    def counts(self, n: int) -> tuple[int, int, int]:
        given = (self.n_train, self.n_val, self.n_test)
        if all(c is None for c in given):
            return default_counts(n)
        if any(c is None for c in given):
            raise ValueError("n_train, n_val and n_test must be given together")
        return given


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float


@dataclass
class History:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,val_loss,val_accuracy"]
        for r in self.records:
            lines.append(f"{r.epoch},{r.train_loss:.6g},{r.val_loss:.6g},{r.val_accuracy:.6g}")
        lines.append(f"# best_epoch={self.best_epoch}")
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_csv())


def resolve_split(cfg: TrainConfig) -> DatasetSplit:
    if cfg.dataset_root is None:
        raise TrainingError("no dataset_root configured")
    samples = scan_dataset(cfg.dataset_root, cfg.categories)
    split = split_dataset(samples, cfg.counts(len(samples)), cfg.seed)
    for part in (split.train, split.validation, split.test):
        load_samples(part)
    return split


def evaluate(net: Network, samples: Sequence[Sample], batch_size: int = 32) -> metrics.EvalResult:
    """Eval-mode pass (standardize only, no dropout) over ``samples``."""
    if len(samples) == 0:
        raise ValueError("cannot evaluate an empty sample set")
    logits, labels = [], []
    for batch in batch_iter(samples, batch_size, train=False):
        logits.append(network_forward(net, batch.images).logits.astype(np.float64))
        labels.append(batch.labels)
    z = np.concatenate(logits).reshape(-1)
    y = np.concatenate(labels)
    scores = np.clip(1.0 / (1.0 + np.exp(-z)), 0.0, 1.0)
    has_both = 0 < y.sum() < y.size
    return metrics.EvalResult(
        accuracy=metrics.accuracy(scores, y),
        loss=bce_loss(z, y).mean,
        auc=metrics.auc(scores, y) if has_both else None,
        confusion=metrics.confusion(scores, y),
        scores=scores,
        labels=y.astype(np.int64),
    )


Evaluator = Callable[[Network, Sequence[Sample]], metrics.EvalResult]


def train(
    cfg: TrainConfig,
    split: DatasetSplit | None = None,
    net: Network | None = None,
    evaluator: Evaluator = evaluate,
    on_epoch_end: Callable[[int, Network], None] | None = None,
) -> tuple[Network, History]:
    """Mini-batch Adam for ``cfg.epochs`` epochs; returns the parameters of
    the epoch with the lowest validation loss (earliest on ties)."""
    if split is None:
        split = resolve_split(cfg)
    if not split.train or not split.validation:
        raise TrainingError("training and validation splits must be non-empty")
    root = RngStream(cfg.seed)
    if net is None:
        net = init_network(root.derive(TAG_INIT))
    state = AdamState.for_params(net.params(), alpha=cfg.alpha, beta1=cfg.beta1, beta2=cfg.beta2, epsilon=cfg.epsilon)

    history = History()
    best_net, best_loss = None, math.inf
    for epoch in range(1, cfg.epochs + 1):
        total, seen = 0.0, 0
        batches = batch_iter(split.train, cfg.batch_size, epoch, cfg.seed, train=True, augment_cfg=cfg.augment)
        for b, batch in enumerate(batches):
            fwd = network_forward(net, batch.images, train=True, rng=root.derive(TAG_DROPOUT, epoch, b))
            loss = bce_loss(fwd.logits, batch.labels)
            if not math.isfinite(loss.mean):
                raise TrainingError(f"non-finite training loss at epoch {epoch}, batch {b}")
            grads = network_backward(net, fwd.caches, bce_grad(fwd.logits, batch.labels))
            adam_step(state, net.params(), grads)
            total += loss.mean * len(batch.labels)
            seen += len(batch.labels)

        val = evaluator(net, split.validation)
        if not math.isfinite(val.loss):
            raise TrainingError(f"non-finite validation loss after epoch {epoch}")
        history.records.append(EpochRecord(epoch, total / seen, val.loss, val.accuracy))
        if val.loss < best_loss:
            best_loss, best_net, history.best_epoch = val.loss, net.copy(), epoch
        log.info("epoch %d/%d train_loss=%.4f val_loss=%.4f val_acc=%.4f",
                 epoch, cfg.epochs, total / seen, val.loss, val.accuracy)
        if on_epoch_end is not None:
            on_epoch_end(epoch, net)
    return best_net, history


def predict(net: Network, image_path, categories: Sequence[str] = DEFAULT_CATEGORIES) -> tuple[float, str]:
    img = standardize(load_image(image_path, net.input_size))
    p = float(network_forward(net, img[None]).probs[0, 0])
    return p, category_for(p, categories)


def category_for(p: float, categories: Sequence[str] = DEFAULT_CATEGORIES) -> str:
    return categories[int(metrics.predict_labels(p))]


def relative_error(a, b) -> np.ndarray:
    a, b = np.asarray(a), np.asarray(b)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-12)


def numeric_gradient(
    f: Callable[[], float],
    x: np.ndarray,
    step: float = 1e-3,
    pattern: Callable[[], np.ndarray] | None = None,
    max_halvings: int = 40,
) -> np.ndarray:
    """Central differences of ``f`` with respect to ``x`` (perturbed in place).

    The step for element ``x_i`` is ``step * max(|x_i|, 1)``.  If ``pattern``
    is given (e.g. the sign pattern of every ReLU input), the step is halved
    until neither probe changes it, so the difference never straddles a kink.
    """
    grad = np.zeros(x.size, dtype=np.float64)
    flat = x.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        h = step * max(abs(float(orig)), 1.0)
        centre = pattern() if pattern is not None else None
        for _ in range(max_halvings + 1):
            flat[i] = orig + h
            fp = f()
            same = centre is None or np.array_equal(pattern(), centre)
            flat[i] = orig - h
            fm = f()
            same = same and (centre is None or np.array_equal(pattern(), centre))
            flat[i] = orig
            if same:
                break
            h /= 2.0
        grad[i] = (fp - fm) / (2.0 * h)
    return grad.reshape(x.shape)


def relu_pattern(net: Network, x: np.ndarray) -> np.ndarray:
    """Which ReLU inputs are positive, for every ReLU in the network."""
    caches = network_forward(net, x, train=True).caches
    parts = [r.reshape(-1) > 0 for _, r in caches[:-1]]
    parts.append(caches[-1][3].reshape(-1) > 0)
    return np.concatenate(parts)


TOY_SHAPE = (2, 16, 16, 1)
TOY_WIDTHS = (4, 4, 8, 4)


def gradient_check(
    seed: int = 0,
    shape=TOY_SHAPE,
    widths=TOY_WIDTHS,
    step: float = 1e-3,
    net: Network | None = None,
    inputs: np.ndarray | None = None,
) -> float:
    """Max relative error between backprop and central differences of the
    mean BCE, over every parameter of a float64 network with dropout off."""
    rng = RngStream(seed).derive(TAG_INIT)
    n, size = shape[0], shape[1]
    if net is None:
        net = init_network(rng.derive(0), widths, input_size=size, dropout_rate=0.0, dtype=CHECK_DTYPE)
    else:
        net = net.astype(CHECK_DTYPE)
        net.input_size, net.dropout_rate = size, 0.0
    if inputs is None:
        inputs = rng.derive(1).normal(int(np.prod(shape)))[0].reshape(shape)
    x = np.asarray(inputs, dtype=CHECK_DTYPE)
    labels = np.arange(n) % 2

    fwd = network_forward(net, x, train=True)
    analytic = network_backward(net, fwd.caches, bce_grad(fwd.logits, labels))

    def loss() -> float:
        return bce_loss(network_forward(net, x).logits, labels).mean

    worst = 0.0
    for p, g in zip(net.params(), analytic):
        numeric = numeric_gradient(loss, p, step, pattern=lambda: relu_pattern(net, x))
        err = relative_error(g, numeric)
        worst = max(worst, float(err.max()))
    return worst
