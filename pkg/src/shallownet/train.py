"""Loss, Adam, the epoch loop and the single-image latency benchmark."""
from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .data import AugmentParams, augment_batch, load_images
from .errors import DataError, ShapeError

log = logging.getLogger(__name__)

CLAMP = 1e-7


@dataclass
class TrainConfig:
    epochs: int = 60
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    augment: bool = False
    augment_params: AugmentParams = field(default_factory=AugmentParams)
    seed: int = 0
    shuffle_each_epoch: bool = True
    threads: int = 1  # >1 prefetches the next batch in a worker thread

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")


@dataclass
class EpochStats:
    epoch: int
    loss: float
    accuracy: float
    seconds: float


def bce_loss(score, label):
    """Binary cross-entropy with the probability clamped to [1e-7, 1 - 1e-7]."""
    p = np.clip(np.asarray(score, dtype=np.float64), CLAMP, 1 - CLAMP)
    y = np.asarray(label, dtype=np.float64)
    out = -(y * np.log(p) + (1 - y) * np.log1p(-p))
    return float(out) if out.ndim == 0 else out


class Adam:
    """Adam with bias correction; moments are kept per parameter array."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-7):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        adam_step(params, grads, self, self.t)


def adam_step(params, grads, state: Adam, t: int):
    """In-place Adam update of ``params`` (nested ``{layer: {name: array}}``)."""
    if t < 1:
        raise ValueError("Adam step index starts at 1")
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for i, group in params.items():
        for k, p in group.items():
            g = grads[i][k]
            if g.shape != p.shape:
                raise ShapeError(f"adam: gradient {g.shape} does not match parameter {p.shape} (layer {i}, {k})")
            key = (i, k)
            if key not in state.m:
                state.m[key] = np.zeros_like(p)
                state.v[key] = np.zeros_like(p)
            m, v = state.m[key], state.v[key]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            p -= (state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)).astype(p.dtype)
    return params, state


def train(samples, model: nn.Model, config: TrainConfig, on_epoch=None):
    """Train on a list of :class:`~shallownet.data.Sample` (decoded once, up front)."""
    samples = list(samples)
    if not samples:
        raise DataError("training set is empty")
    images = load_images([s.path for s in samples])
    labels = np.array([s.label for s in samples], dtype=np.int64)
    return fit(images, labels, model, config, on_epoch=on_epoch)


def fit(images, labels, model: nn.Model, config: TrainConfig, on_epoch=None):
    """Mini-batch Adam on in-memory images ``(n, 3, h, w)`` in [0, 1].

    Returns ``(model, history)``; ``model`` is updated in place.  ``on_epoch``
    receives each :class:`EpochStats`; returning ``True`` ends the run.
    """
    images = np.asarray(images)
    labels = np.asarray(labels)
    n = images.shape[0]
    if n == 0:
        raise DataError("training set is empty")
    if labels.shape[0] != n:
        raise ShapeError(f"{n} images but {labels.shape[0]} labels")
    opt = Adam(config.learning_rate, config.beta1, config.beta2, config.eps)
    history = []
    pool = ThreadPoolExecutor(1) if config.threads > 1 else None
    try:
        for epoch in range(1, config.epochs + 1):
            t0 = time.perf_counter()
            if config.shuffle_each_epoch:
                order = np.random.default_rng(config.seed ^ epoch).permutation(n)
            else:
                order = np.arange(n)
            batches = [order[i:i + config.batch_size] for i in range(0, n, config.batch_size)]

            def prepare(idx, epoch=epoch):
                x = images[idx]
                if config.augment:
                    x = augment_batch(x, config.augment_params, config.seed, epoch, idx)
                return x

            total_loss = 0.0
            correct = 0
            pending = pool.submit(prepare, batches[0]) if pool else None
            for b, idx in enumerate(batches):
                if pool:
                    x = pending.result()
                    if b + 1 < len(batches):
                        pending = pool.submit(prepare, batches[b + 1])
                else:
                    x = prepare(idx)
                y = labels[idx]
                scores, cache = nn.forward(model, x)
                grads = nn.backward(model, cache, y)
                opt.step(model.params, grads)
                total_loss += float(np.sum(bce_loss(scores, y)))
                correct += int(np.sum((scores >= 0.5) == (y == 1)))
            stats = EpochStats(epoch, total_loss / n, correct / n, time.perf_counter() - t0)
            history.append(stats)
            log.info("epoch %d loss %.4f acc %.4f (%.1fs)", epoch, stats.loss, stats.accuracy, stats.seconds)
            if on_epoch is not None and on_epoch(stats) is True:
                break
    finally:
        if pool:
            pool.shutdown()
    return model, history


def write_history_csv(history, path, include_time=True):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss", "train_acc", "seconds"])
        for s in history:
            w.writerow([s.epoch, repr(s.loss), repr(s.accuracy), f"{s.seconds:.3f}" if include_time else ""])


@dataclass
class LatencyStats:
    mean: float
    p50: float
    p95: float
    iters: int
    warmup: int

    def to_dict(self):
        return {"mean_s": self.mean, "p50_s": self.p50, "p95_s": self.p95,
                "iters": self.iters, "warmup": self.warmup, "threads": 1}


def benchmark_single_image(model: nn.Model, image, warmup=10, iters=100) -> LatencyStats:
    """Forward-only wall-clock per image; decode and resize are excluded."""
    if iters < 30:
        raise ValueError("iters must be >= 30")
    x = np.ascontiguousarray(np.asarray(image, dtype=model.dtype).reshape((1,) + tuple(model.spec.input_shape)))
    for _ in range(warmup):
        nn.forward(model, x)
    times = np.empty(iters)
    for k in range(iters):
        t0 = time.perf_counter()
        nn.forward(model, x)
        times[k] = time.perf_counter() - t0
    return LatencyStats(float(times.mean()), float(np.percentile(times, 50)),
                        float(np.percentile(times, 95)), iters, warmup)
