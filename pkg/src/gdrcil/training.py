"""Epoch loop shared by the proxy run, the baselines and the group-reweighted trainer."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .data import TrainingView, batch_iterator

log = logging.getLogger(__name__)


class NumericError(RuntimeError):
    """A loss or gradient became non-finite."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass
class Schedule:
    max_epochs: int = 200
    plateau_patience: int = 6
    lr_factor: float = 0.5
    lr_floor: float = 1e-6
    early_stop_patience: int = 30

    def __post_init__(self):
        if self.plateau_patience < 1 or self.early_stop_patience < 1:
            raise ValueError("patience values must be >= 1")
        if self.lr_floor <= 0:
            raise ValueError("lr_floor must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")


class PlateauScheduler:
    """Multiply the learning rate by ``factor`` after ``patience`` epochs without a new best."""

    def __init__(self, lr, patience=6, factor=0.5, floor=1e-6):
        self.lr = lr
        self.patience = patience
        self.factor = factor
        self.floor = floor
        self.best = math.inf
        self.bad_epochs = 0

    def step(self, val_loss) -> bool:
        if val_loss < self.best:
            self.best = val_loss
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        if self.bad_epochs >= self.patience:
            self.bad_epochs = 0
            new_lr = max(self.lr * self.factor, self.floor)
            reduced = new_lr < self.lr
            self.lr = new_lr
            return reduced
        return False


class EarlyStopper:
    def __init__(self, patience=30):
        self.patience = patience
        self.best = math.inf
        self.bad_epochs = 0

    def step(self, val_loss) -> bool:
        if val_loss < self.best:
            self.best = val_loss
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        return self.bad_epochs >= self.patience


class Objective:
    """Batch objective: returns the scalar loss and its gradient w.r.t. the logits."""

    name = "objective"

    def begin_epoch(self, epoch: int, max_epochs: int):
        pass

    def batch(self, cache: nn.ForwardCache, y: np.ndarray) -> tuple[float, np.ndarray]:
        raise NotImplementedError

    def epoch_summary(self) -> dict:
        return {}

    def describe(self) -> dict:
        return {"name": self.name}


class ERMObjective(Objective):
    """Mean cross-entropy over the batch."""

    name = "erm"

    def batch(self, cache, y):
        n = y.shape[0]
        loss = nn.per_sample_nll(cache.probs, y)
        return float(loss.mean()), nn.kernels.softmax_xent_grad(cache.probs, y, np.full(n, 1.0 / n))


@dataclass
class TrainTrace:
    epochs: list[dict] = field(default_factory=list)
    final_epoch: int = 0
    best_epoch: int = 0
    stop_reason: str = ""

    def to_dict(self):
        return {
            "epochs": self.epochs,
            "final_epoch": self.final_epoch,
            "best_epoch": self.best_epoch,
            "stop_reason": self.stop_reason,
        }


def validation_loss(params, subset) -> float:
    if len(subset) == 0:
        raise ValueError("empty validation split")
    probs = nn.predict_proba(params, subset.x)
    return float(nn.per_sample_nll(probs, subset.y).mean())


def fit(
    view: TrainingView,
    hyper: nn.TrainHyper,
    objective: Objective,
    schedule: Schedule | None = None,
    seed: int = 0,
    params: nn.ModelParams | None = None,
):
    """Train and return ``(best_params, trace)``, keeping the best-validation-loss weights."""
    schedule = schedule or Schedule()
    if params is None:
        sizes = [view.num_features, *hyper.hidden, view.num_classes]
        params = nn.init_params(sizes, hyper.init_std, seed)
    x, y = view.train.x, view.train.y
    scheduler = PlateauScheduler(hyper.learning_rate, schedule.plateau_patience, schedule.lr_factor, schedule.lr_floor)
    stopper = EarlyStopper(schedule.early_stop_patience)
    trace = TrainTrace(stop_reason="max_epochs")
    best, best_loss = params.copy(), math.inf
    for epoch in range(1, schedule.max_epochs + 1):
        objective.begin_epoch(epoch, schedule.max_epochs)
        lr = scheduler.lr
        drop_rng = np.random.default_rng([seed, epoch, 0xD809])
        total, count = 0.0, 0
        for idx in batch_iterator(len(view.train), hyper.batch_size, seed, epoch):
            _, cache = nn.forward(params, x[idx], hyper.dropout_rate, drop_rng)
            loss, dlogits = objective.batch(cache, y[idx])
            if not np.isfinite(loss):
                trace.final_epoch = epoch
                trace.stop_reason = "numeric_failure"
                raise NumericError(f"non-finite training loss at epoch {epoch}, step {params.step}", trace)
            grads = nn.backward_logits(params, cache, dlogits)
            nn.sgd_step(params, grads, lr, hyper.weight_decay)
            total += loss * idx.size
            count += idx.size
        val_loss = validation_loss(params, view.val)
        if not np.isfinite(val_loss):
            trace.final_epoch = epoch
            trace.stop_reason = "numeric_failure"
            raise NumericError(f"non-finite validation loss at epoch {epoch}", trace)
        record = {"epoch": epoch, "train_loss": total / count, "val_loss": val_loss, "lr": lr}
        record.update(objective.epoch_summary())
        trace.epochs.append(record)
        if val_loss < best_loss:
            best_loss, best = val_loss, params.copy()
            trace.best_epoch = epoch
        scheduler.step(val_loss)
        trace.final_epoch = epoch
        if stopper.step(val_loss):
            trace.stop_reason = "early_stop"
            break
    log.info("%s stopped at epoch %d (%s), best epoch %d", objective.name, trace.final_epoch,
             trace.stop_reason, trace.best_epoch)
    return best, trace
