"""Leader/follower training with exponentiated group weights.

Per batch the leader multiplies each group weight by ``exp(beta * (loss + v))``
and renormalises; the follower then takes one SGD step on the weighted group
loss with the new weights held fixed.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import kernels, nn
from .data import TrainingView
from .grouping import GroupAssignment, calibration_vector
from .training import Objective, Schedule, fit

REDUCTIONS = ("sample_mean", "class_sum")


@dataclass
class GdroConfig:
    beta: float = 0.005
    calib_b: float = 0.25
    max_epochs: int = 200
    plateau_patience: int = 6
    lr_floor: float = 1e-6
    early_stop_patience: int = 30
    group_reduction: str = "sample_mean"
    normalize_group_loss: bool = False

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.calib_b < 0:
            raise ValueError("B must be nonnegative")
        if self.group_reduction not in REDUCTIONS:
            raise ValueError(f"group_reduction must be one of {REDUCTIONS}")
        self.schedule()  # validates patience/floor

    def schedule(self) -> Schedule:
        return Schedule(
            max_epochs=self.max_epochs,
            plateau_patience=self.plateau_patience,
            lr_floor=self.lr_floor,
            early_stop_patience=self.early_stop_patience,
        )


@dataclass
class GroupBatchLoss:
    losses: np.ndarray  # (K,)
    counts: np.ndarray  # samples per group in the batch
    denominators: np.ndarray  # per-sample divisor used for the group mean


def group_losses(per_sample, y, gamma, mode: str = "sample_mean") -> GroupBatchLoss:
    """Group losses for one batch from per-sample losses.

    ``sample_mean``: mean loss over the batch samples of each group.
    ``class_sum``: per-class batch means, then ``gamma @ class_means``.
    Groups (and classes) absent from the batch get loss 0.
    """
    gamma = np.asarray(gamma)
    k, c = gamma.shape
    y = np.asarray(y, dtype=np.int64)
    group_of_class = gamma.argmax(axis=0)
    g = group_of_class[y]
    if g.size and g.max() >= k:
        raise ValueError("group label out of range")
    if mode == "sample_mean":
        losses, counts = kernels.group_mean(per_sample, g, k)
        denom = np.maximum(counts, 1.0)[g]
    elif mode == "class_sum":
        class_means, class_counts = kernels.group_mean(per_sample, y, c)
        losses = gamma @ class_means
        counts = np.bincount(g, minlength=k).astype(np.float64)
        denom = np.maximum(class_counts, 1.0)[y]
    else:
        raise ValueError(f"unknown reduction {mode!r}")
    return GroupBatchLoss(losses, counts, denom)


def group_batch_loss(params, x, y, gamma, mode="sample_mean") -> GroupBatchLoss:
    probs, _ = nn.forward(params, x)
    return group_losses(nn.per_sample_nll(probs, y), y, gamma, mode)


def update_weights(omega_prev, group_losses_, v, beta, normalize=False) -> np.ndarray:
    """Exponentiated-gradient step on the simplex.

    ``omega_i <- omega_i * exp(beta * (loss_i + v_i))`` renormalised; the max
    exponent is subtracted first, which leaves the result unchanged.
    """
    adjusted = np.asarray(group_losses_, dtype=np.float64) + np.asarray(v, dtype=np.float64)
    if normalize:
        adjusted = adjusted / adjusted.sum()
    z = beta * adjusted
    z = z - z.max()
    w = np.asarray(omega_prev, dtype=np.float64) * np.exp(z)
    return w / w.sum()


def weighted_batch_objective(omega, gbl: GroupBatchLoss, y, gamma):
    """Return ``(omega @ L_G, per-sample weights)``.

    Backward on the per-sample weights gives the gradient of ``omega @ L_G``
    with ``omega`` treated as a constant.
    """
    gamma = np.asarray(gamma)
    g = gamma.argmax(axis=0)[np.asarray(y, dtype=np.int64)]
    omega = np.asarray(omega, dtype=np.float64)
    return float(omega @ gbl.losses), omega[g] / gbl.denominators


class GroupDROObjective(Objective):
    name = "gdr-cil"

    def __init__(self, groups: GroupAssignment, config: GdroConfig):
        self.gamma = groups.gamma
        self.config = config
        self.v = calibration_vector(groups.group_sizes, config.calib_b).v
        self.omega = np.full(groups.num_groups, 1.0 / groups.num_groups)
        self._loss_sum = np.zeros(groups.num_groups)
        self._loss_n = np.zeros(groups.num_groups)

    def begin_epoch(self, epoch, max_epochs):
        self._loss_sum[:] = 0.0
        self._loss_n[:] = 0.0

    def batch(self, cache, y):
        per_sample = nn.per_sample_nll(cache.probs, y)
        gbl = group_losses(per_sample, y, self.gamma, self.config.group_reduction)
        self.omega = update_weights(self.omega, gbl.losses, self.v, self.config.beta,
                                    self.config.normalize_group_loss)
        value, w = weighted_batch_objective(self.omega, gbl, y, self.gamma)
        present = gbl.counts > 0
        self._loss_sum[present] += gbl.losses[present]
        self._loss_n[present] += 1
        return value, kernels.softmax_xent_grad(cache.probs, y, w)

    def epoch_summary(self):
        means = np.where(self._loss_n > 0, self._loss_sum / np.maximum(self._loss_n, 1), 0.0)
        return {"omega": self.omega.tolist(), "group_loss_mean": means.tolist()}

    def describe(self):
        return {"name": self.name, **asdict(self.config), "calibration": self.v.tolist()}


def train(view: TrainingView, groups: GroupAssignment, hyper: nn.TrainHyper, config: GdroConfig, seed: int = 0):
    """Returns ``(best_params, trace)``; each trace epoch carries the omega snapshot."""
    if groups.gamma.shape[1] != view.num_classes:
        raise ValueError("group assignment does not cover the dataset's classes")
    objective = GroupDROObjective(groups, config)
    return fit(view, hyper, objective, config.schedule(), seed)


@dataclass
class ProbeResult:
    ratios: np.ndarray
    late_fraction: float  # share of late-phase steps with ratio <= 1 + tol
    contracting: bool


def contraction_probe(snapshots, theta_star, tol: float = 1e-3, late: float = 0.25, required: float = 0.9):
    """Step ratios ``|theta_{t+1} - theta*| / |theta_t - theta*|`` and a late-phase verdict.

    A zero denominator counts as converged (ratio 1).
    """
    snaps = [np.asarray(s, dtype=np.float64).ravel() for s in snapshots]
    if len(snaps) < 3:
        raise ValueError("need at least 3 snapshots")
    star = np.asarray(theta_star, dtype=np.float64).ravel()
    dist = np.array([np.linalg.norm(s - star) for s in snaps])
    ratios = np.ones(len(snaps) - 1)
    nz = dist[:-1] > 0
    ratios[nz] = dist[1:][nz] / dist[:-1][nz]
    n_late = max(1, int(np.ceil(late * ratios.size)))
    tail = ratios[-n_late:]
    frac = float(np.mean(tail <= 1.0 + tol))
    return ProbeResult(ratios, frac, frac >= required)
