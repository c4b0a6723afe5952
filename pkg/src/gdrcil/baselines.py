"""Cost-sensitive baseline losses and their batch objectives.

Each ``*_loss`` returns per-sample values; the matching objective class also
supplies the analytic gradient w.r.t. the logits for the training loop.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import kernels, nn
from .nn import PROB_FLOOR
from .training import ERMObjective, Objective

KINDS = ("erm", "focal", "cb", "ldam_drw", "ldr_kl")


@dataclass
class BaselineSpec:
    kind: str = "erm"
    focal_gamma: float = 2.0
    focal_alpha: list[float] | None = None  # None: inverse frequency, mean 1
    cb_beta: float = 0.9999
    ldam_max_margin: float = 0.5
    ldam_exponent: float = 0.25
    drw_start_fraction: float = 0.8
    ldr_lambda: float = 1.0
    ldr_smoothing: float = 0.1

    def __post_init__(self):
        self.kind = self.kind.replace("-", "_")
        if self.kind not in KINDS:
            raise ValueError(f"unknown baseline {self.kind!r}")
        if self.focal_gamma < 0:
            raise ValueError("focal_gamma must be >= 0")
        if not 0.0 <= self.cb_beta < 1.0:
            raise ValueError("cb_beta must lie in [0, 1)")
        if self.ldr_lambda < 0:
            raise ValueError("ldr_lambda must be >= 0")
        if not 0.0 <= self.drw_start_fraction <= 1.0:
            raise ValueError("drw_start_fraction must lie in [0, 1]")


def _true_prob(probs, y):
    return probs[np.arange(probs.shape[0]), np.asarray(y, dtype=np.int64)]


def inverse_frequency(counts) -> np.ndarray:
    inv = 1.0 / np.maximum(np.asarray(counts, dtype=np.float64), 1.0)
    return inv / inv.mean()


def erm_loss(probs, y):
    return nn.per_sample_nll(probs, y)


def focal_loss(probs, y, alpha=None, gamma=2.0):
    p = _true_prob(probs, y)
    a = 1.0 if alpha is None else np.asarray(alpha, dtype=np.float64)[np.asarray(y)]
    return -a * (1.0 - p) ** gamma * np.log(np.maximum(p, PROB_FLOOR))


def focal_grad_coef(probs, y, alpha=None, gamma=2.0):
    """``c_i`` such that d focal_i / d logits = c_i * (probs_i - onehot_i)."""
    p = np.maximum(_true_prob(probs, y), PROB_FLOOR)
    a = 1.0 if alpha is None else np.asarray(alpha, dtype=np.float64)[np.asarray(y)]
    q = 1.0 - p
    if gamma == 0:
        return a * np.ones_like(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        tail = np.where(q > 0, gamma * q ** (gamma - 1.0) * p * np.log(p), 0.0)
    return a * (q ** gamma - tail)


def cb_weights(class_counts, beta, normalize=True):
    """``(1 - beta) / (1 - beta**n)`` per class, optionally rescaled to mean 1."""
    if not 0.0 <= beta < 1.0:
        raise ValueError("cb_beta must lie in [0, 1)")
    n = np.maximum(np.asarray(class_counts, dtype=np.float64), 1.0)
    w = (1.0 - beta) / (1.0 - beta ** n)
    return w / w.mean() if normalize else w


def cb_loss(probs, y, weights):
    return np.asarray(weights)[np.asarray(y)] * nn.per_sample_nll(probs, y)


def ldam_margins(class_counts, max_margin=0.5, exponent=0.25):
    """``C / n**exponent`` with ``C`` chosen so the largest margin equals ``max_margin``."""
    n = np.maximum(np.asarray(class_counts, dtype=np.float64), 1.0)
    m = 1.0 / n ** exponent
    return m * (max_margin / m.max())


def ldam_loss(logits, y, margins):
    y = np.asarray(y, dtype=np.int64)
    z = np.array(logits, dtype=np.float64)
    z[np.arange(z.shape[0]), y] -= np.asarray(margins)[y]
    return nn.per_sample_nll(kernels.softmax(z), y)


def drw_weights(class_counts, epoch, max_epochs, start_fraction=0.8):
    """Uniform before the switch epoch, mean-normalised inverse frequency from it on."""
    switch = int(np.ceil(start_fraction * max_epochs))
    c = len(class_counts)
    return inverse_frequency(class_counts) if epoch >= switch else np.ones(c)


def smoothed_reference(y, num_classes, smoothing=0.1):
    ref = np.full((len(y), num_classes), smoothing / num_classes)
    ref[np.arange(len(y)), np.asarray(y, dtype=np.int64)] += 1.0 - smoothing
    return ref


def ldr_kl_loss(probs, y, reference, lam=1.0):
    ref = np.asarray(reference, dtype=np.float64)
    q = np.maximum(probs, PROB_FLOOR)
    with np.errstate(divide="ignore", invalid="ignore"):
        kl = np.where(ref > 0, ref * np.log(ref / q), 0.0).sum(axis=1)
    return nn.per_sample_nll(probs, y) + lam * kl


class _Weighted(Objective):
    """Batch mean of ``w[y_i] * cross-entropy_i``."""

    def __init__(self, weights):
        self.weights = np.asarray(weights, dtype=np.float64)

    def batch(self, cache, y):
        n = y.shape[0]
        w = self.weights[y] / n
        loss = float(w @ nn.per_sample_nll(cache.probs, y))
        return loss, kernels.softmax_xent_grad(cache.probs, y, w)


class CBObjective(_Weighted):
    name = "cb"


class FocalObjective(Objective):
    name = "focal"

    def __init__(self, alpha, gamma):
        self.alpha = np.asarray(alpha, dtype=np.float64)
        self.gamma = gamma

    def batch(self, cache, y):
        n = y.shape[0]
        loss = focal_loss(cache.probs, y, self.alpha, self.gamma)
        coef = focal_grad_coef(cache.probs, y, self.alpha, self.gamma) / n
        return float(loss.mean()), kernels.softmax_xent_grad(cache.probs, y, coef)


class LDAMDRWObjective(Objective):
    name = "ldam-drw"

    def __init__(self, class_counts, spec: BaselineSpec):
        self.counts = np.asarray(class_counts)
        self.margins = ldam_margins(class_counts, spec.ldam_max_margin, spec.ldam_exponent)
        self.start = spec.drw_start_fraction
        self.weights = np.ones(len(class_counts))

    def begin_epoch(self, epoch, max_epochs):
        self.weights = drw_weights(self.counts, epoch, max_epochs, self.start)

    def batch(self, cache, y):
        n = y.shape[0]
        z = cache.logits.copy()
        z[np.arange(n), y] -= self.margins[y]
        probs = kernels.softmax(z)
        w = self.weights[y] / n
        loss = float(w @ nn.per_sample_nll(probs, y))
        return loss, kernels.softmax_xent_grad(probs, y, w)

    def epoch_summary(self):
        return {"class_weights": self.weights.tolist()}


class LDRKLObjective(Objective):
    name = "ldr-kl"

    def __init__(self, num_classes, lam, smoothing):
        self.c = num_classes
        self.lam = lam
        self.smoothing = smoothing

    def batch(self, cache, y):
        n = y.shape[0]
        ref = smoothed_reference(y, self.c, self.smoothing)
        loss = ldr_kl_loss(cache.probs, y, ref, self.lam)
        # d/dz [CE + lam * KL(ref || q)] = (q - e_y) + lam * (q - ref)
        onehot = np.zeros_like(ref)
        onehot[np.arange(n), y] = 1.0
        target = (onehot + self.lam * ref) / (1.0 + self.lam)
        coef = np.full(n, (1.0 + self.lam) / n)
        return float(loss.mean()), kernels.scaled_xent_grad(cache.probs, target, coef)


def make_objective(spec: BaselineSpec, class_counts) -> Objective:
    counts = np.asarray(class_counts)
    if spec.kind == "erm":
        return ERMObjective()
    if spec.kind == "focal":
        alpha = inverse_frequency(counts) if spec.focal_alpha is None else spec.focal_alpha
        return FocalObjective(alpha, spec.focal_gamma)
    if spec.kind == "cb":
        return CBObjective(cb_weights(counts, spec.cb_beta))
    if spec.kind == "ldam_drw":
        return LDAMDRWObjective(counts, spec)
    if spec.kind == "ldr_kl":
        return LDRKLObjective(len(counts), spec.ldr_lambda, spec.ldr_smoothing)
    raise ValueError(spec.kind)


def describe(spec: BaselineSpec) -> dict:
    return asdict(spec)
