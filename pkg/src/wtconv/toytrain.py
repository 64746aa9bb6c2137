"""Desk-scale training harness: a tiny classifier with a swappable spatial mixer.

The model broadcasts a single-channel image to ``c`` channels, applies the
mixer (a WTConv layer; ``levels=0`` is a plain depth-wise convolution with a
channel scale), pools each channel to its mean energy and feeds the ``c``
pooled features to a linear two-class head.  Swapping mixers only changes the
``WTConvParams`` handed to :class:`ToyModel`.

The datasets are synthetic proxies for "low versus high frequency" and
"long versus longer wavelength" discrimination; they are not natural images.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .grad import sgd_step, wtconv_backward
from .layer import WTConvParams, forward_trace, head_to_bytes, init_params, params_to_bytes
from .tensor_core import ParameterError, ShapeError


class TrainingError(RuntimeError):
    """Training diverged; ``state`` holds the last model with a finite loss."""

    def __init__(self, msg, state=None, log=None):
        super().__init__(msg)
        self.state = state
        self.log = log


# --- data ------------------------------------------------------------------

TASKS = ("separable", "wavelength")


@dataclass(frozen=True)
class DataSpec:
    n: int = 512
    h: int = 64
    w: int = 64
    noise: float = 0.05
    seed: int = 0
    task: str = "separable"
    short_wavelength: float = 16.0
    long_wavelength: float = 32.0


@dataclass
class FreqDataset:
    images: np.ndarray
    labels: np.ndarray
    spec: DataSpec

    def __len__(self):
        return len(self.labels)


def _blobs(rng, h, w, amp):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    img = np.zeros((h, w))
    for _ in range(rng.integers(1, 4)):
        sigma = rng.uniform(h / 8, h / 4)
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        img += rng.choice([-1.0, 1.0]) * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma**2))
    return amp * img / max(np.abs(img).max(), 1e-12)


def _texture(rng, h, w, amp):
    yy, xx = np.mgrid[0:h, 0:w]
    kind = rng.integers(0, 3)
    if kind == 0:
        period = int(rng.choice([2, 4]))
        img = np.where(((yy // (period // 2)) + (xx // (period // 2))) % 2 == 0, 1.0, -1.0)
    else:
        period = int(rng.integers(2, 5))
        phase = int(rng.integers(0, period))
        coord = yy if kind == 1 else xx
        img = np.where(((coord + phase) % period) < period / 2, 1.0, -1.0)
    return amp * img


def _grating(rng, h, w, amp, wavelength):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    theta = rng.uniform(0, np.pi)
    phi = rng.uniform(0, 2 * np.pi)
    return amp * np.cos(2 * np.pi * (xx * np.cos(theta) + yy * np.sin(theta)) / wavelength + phi)


def generate_dataset(spec: DataSpec) -> FreqDataset:
    """Balanced dataset with alternating labels; image ``i`` uses its own seed."""
    if spec.n < 2 or spec.n % 2:
        raise ParameterError(f"need a positive even number of images, got {spec.n}")
    if spec.task not in TASKS:
        raise ParameterError(f"unknown task {spec.task!r}; choose from {TASKS}")
    if not 0 <= spec.noise < 0.7:
        raise ParameterError(f"noise amplitude must lie in [0, 0.7), got {spec.noise}")
    h, w, a = spec.h, spec.w, spec.noise
    images = np.empty((spec.n, 1, h, w), dtype=np.float64)
    labels = np.arange(spec.n) % 2
    for i in range(spec.n):
        rng = np.random.default_rng([spec.seed, i])
        amp = rng.uniform(0.3, 1.0 - a)
        if spec.task == "separable":
            img = _blobs(rng, h, w, amp) if labels[i] == 0 else _texture(rng, h, w, amp)
        else:
            lam = spec.long_wavelength if labels[i] == 0 else spec.short_wavelength
            img = _grating(rng, h, w, amp, lam)
        img = img + rng.uniform(-a, a, size=(h, w)) if a > 0 else img
        images[i, 0] = np.clip(img, -1.0, 1.0)
    return FreqDataset(images, labels, spec)


def mean_abs_laplacian(images) -> np.ndarray:
    """Per-image mean |5-point Laplacian| over interior pixels."""
    x = images[:, 0]
    lap = (x[:, 1:-1, :-2] + x[:, 1:-1, 2:] + x[:, :-2, 1:-1] + x[:, 2:, 1:-1]
           - 4 * x[:, 1:-1, 1:-1])
    return np.abs(lap).mean(axis=(1, 2))


# --- model -----------------------------------------------------------------


@dataclass
class ToyModel:
    mixer: WTConvParams
    head_w: np.ndarray
    head_b: np.ndarray

    @classmethod
    def create(cls, c=4, k=3, levels=2, seed=0, dtype=np.float32):
        mixer = init_params(c, k, levels, seed=seed, dtype=dtype)
        return cls(mixer, np.zeros((c, 2), dtype=dtype), np.zeros(2, dtype=dtype))

    @property
    def c(self):
        return self.mixer.c

    def copy(self):
        return ToyModel(self.mixer.copy(), self.head_w.copy(), self.head_b.copy())

    def checkpoint_bytes(self) -> bytes:
        return params_to_bytes(self.mixer) + head_to_bytes(self.head_w, self.head_b)

    def _lift(self, images):
        if images.ndim != 4 or images.shape[1] != 1:
            raise ShapeError(f"expected (n, 1, h, w) images, got {images.shape}")
        lifted = np.broadcast_to(images.astype(self.mixer.dtype, copy=False), (images.shape[0], self.c, *images.shape[2:]))
        return np.ascontiguousarray(lifted)

    def features(self, images):
        """Mixer output and per-channel mean energy."""
        y = forward_trace(self._lift(images), self.mixer, fast=True)[0]
        return y, np.mean(y * y, axis=(2, 3))

    def logits(self, images):
        return self.features(images)[1] @ self.head_w + self.head_b

    def predict(self, images, batch=256):
        return np.concatenate([self.logits(images[i:i + batch]).argmax(axis=1)
                               for i in range(0, len(images), batch)])


def _log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def loss_and_grads(model: ToyModel, images, labels):
    """Mean cross-entropy and its gradients ``(loss, mixer_grads, d_head_w, d_head_b)``."""
    x = model._lift(images)
    trace = forward_trace(x, model.mixer, fast=True)
    y = trace[0]
    feats = np.mean(y * y, axis=(2, 3))
    logp = _log_softmax(feats @ model.head_w + model.head_b)
    n = len(labels)
    loss = float(-logp[np.arange(n), labels].mean())

    d_logits = np.exp(logp)
    d_logits[np.arange(n), labels] -= 1
    d_logits /= n
    d_head_w = feats.T @ d_logits
    d_head_b = d_logits.sum(axis=0)
    d_feats = d_logits @ model.head_w.T
    hw = y.shape[2] * y.shape[3]
    dy = (2.0 / hw) * d_feats[:, :, None, None] * y
    grads = wtconv_backward(x, model.mixer, dy, fast=True, trace=trace)
    return loss, grads, d_head_w, d_head_b


def evaluate(model, data: FreqDataset, batch=256):
    losses, correct = 0.0, 0
    for i in range(0, len(data), batch):
        imgs, labs = data.images[i:i + batch], data.labels[i:i + batch]
        logp = _log_softmax(model.logits(imgs))
        losses += -logp[np.arange(len(labs)), labs].sum()
        correct += int((logp.argmax(axis=1) == labs).sum())
    return float(losses) / len(data), correct / len(data)


@dataclass
class TrainLog:
    epochs: list[int] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    test_acc: list[float] = field(default_factory=list)

    def append(self, epoch, loss, train_acc, test_acc):
        self.epochs.append(epoch)
        self.loss.append(loss)
        self.train_acc.append(train_acc)
        self.test_acc.append(test_acc)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["epoch", "loss", "train_acc", "test_acc"])
        for row in zip(self.epochs, self.loss, self.train_acc, self.test_acc):
            writer.writerow([row[0], *(f"{v:.17g}" for v in row[1:])])
        return buf.getvalue()


def train(model: ToyModel, data: FreqDataset, test: FreqDataset | None = None,
          epochs=30, lr=0.05, batch=32, seed=0):
    """Mini-batch SGD on softmax cross-entropy; returns ``(model, log)``.

    Epoch 0 in the log is the untrained model.  Shuffling uses a PCG64
    generator seeded with ``seed``.
    """
    if batch < 1 or epochs < 0:
        raise ParameterError(f"invalid batch={batch} / epochs={epochs}")
    test = data if test is None else test
    rng = np.random.default_rng(seed)
    model = model.copy()
    dt = model.mixer.dtype.type
    log = TrainLog()

    def record(epoch):
        loss, acc = evaluate(model, data)
        log.append(epoch, loss, acc, evaluate(model, test)[1])
        return loss

    # overflow is expected when training diverges; it surfaces as TrainingError
    with np.errstate(over="ignore", invalid="ignore"):
        record(0)
        last_good = model.copy()
        for epoch in range(1, epochs + 1):
            order = rng.permutation(len(data))
            for start in range(0, len(order), batch):
                idx = np.sort(order[start:start + batch])
                loss, grads, dw, db = loss_and_grads(model, data.images[idx], data.labels[idx])
                if not math.isfinite(loss):
                    raise TrainingError(f"non-finite loss in epoch {epoch}", last_good, log)
                try:
                    model.mixer = sgd_step(model.mixer, grads, lr)
                except ParameterError as exc:
                    raise TrainingError(f"parameters became non-finite in epoch {epoch}", last_good, log) from exc
                model.head_w = model.head_w - dt(lr) * dw
                model.head_b = model.head_b - dt(lr) * db
            if not math.isfinite(record(epoch)):
                raise TrainingError(f"non-finite loss after epoch {epoch}", last_good, log)
            last_good = model.copy()
    return model, log
