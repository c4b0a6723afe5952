"""Synthetic imbalanced problems used by the benchmark and the convergence checks."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import gdro, grouping, metrics, nn
from .data import PrepConfig, build_split
from .training import ERMObjective, Schedule, fit

DEFAULT_COUNTS = (10000, 1000, 100)
# minority sits between the two majority blobs and overlaps both
DEFAULT_MEANS = ((0.0, 0.0), (2.5, 0.0), (1.25, 1.25))


def gaussian_blobs(counts=DEFAULT_COUNTS, means=DEFAULT_MEANS, std=1.0, seed=0):
    """Return ``(x, labels)`` with string labels ``c0, c1, ...``."""
    rng = np.random.default_rng([seed, 0x5E7])
    xs, ys = [], []
    for i, (n, mu) in enumerate(zip(counts, means)):
        xs.append(rng.normal(mu, std, size=(n, len(mu))))
        ys.append(np.full(n, f"c{i}"))
    return np.vstack(xs), np.concatenate(ys)


@dataclass
class BenchConfig:
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    counts: tuple[int, ...] = DEFAULT_COUNTS
    num_groups: int = 3
    calib_b: float = 0.25
    beta: float = 0.005
    hidden: tuple[int, ...] = (32, 32, 16)
    learning_rate: float = 1e-2
    # 3e-2 leaves a 2-input net stuck at its zero saddle for dozens of epochs
    init_std: float = 0.3
    max_epochs: int = 200
    early_stop_patience: int = 30


@dataclass
class BenchResult:
    class_names: list[str]
    erm: list[list[metrics.ClassMetrics]] = field(default_factory=list)
    gdr: list[list[metrics.ClassMetrics]] = field(default_factory=list)
    omega: list[list[float]] = field(default_factory=list)
    # (seed, method, per_class, curves) for every run, in execution order
    runs: list[tuple] = field(default_factory=list)
    seconds: float = 0.0

    def minority_index(self):
        return len(self.class_names) - 1

    def summary(self) -> dict:
        m = self.minority_index()
        out = {}
        for name, runs in (("erm", self.erm), ("gdr-cil", self.gdr)):
            out[name] = {
                "minority_recall": float(np.mean([r[m].recall for r in runs])),
                "macro_g_mean": float(np.mean([np.mean([c.g_mean for c in r]) for r in runs])),
                "macro_f1": float(np.mean([np.mean([c.f1 for c in r]) for r in runs])),
            }
        return out


def run_benchmark(config: BenchConfig | None = None, progress=None) -> BenchResult:
    config = config or BenchConfig()
    hyper = nn.TrainHyper(hidden=config.hidden, learning_rate=config.learning_rate, init_std=config.init_std)
    schedule = Schedule(max_epochs=config.max_epochs, early_stop_patience=config.early_stop_patience)
    gcfg = gdro.GdroConfig(beta=config.beta, calib_b=config.calib_b, max_epochs=config.max_epochs,
                           early_stop_patience=config.early_stop_patience)
    t0 = time.perf_counter()
    result = None
    for seed in config.seeds:
        x, labels = gaussian_blobs(config.counts, seed=seed)
        split = build_split(x, labels, ["x0", "x1"], PrepConfig(majority_cap=None, seed=seed))
        view = split.training_view()
        if result is None:
            result = BenchResult(split.class_names)
        erm_params, erm_trace = fit(view, hyper, ERMObjective(), schedule, seed)
        # the ERM run doubles as the proxy classifier for grouping
        report = grouping.proxy_report(erm_params, view, erm_trace.final_epoch)
        groups = grouping.build_groups(report, config.num_groups, seed=seed)
        gdr_params, gdr_trace = gdro.train(view, groups, hyper, gcfg, seed)
        for name, params, bucket in (("erm", erm_params, result.erm), ("gdr-cil", gdr_params, result.gdr)):
            per_class, curves, _ = metrics.evaluate(nn.predict_proba(params, split.test.x), split.test.y,
                                                    split.num_classes)
            bucket.append(per_class)
            result.runs.append((seed, name, per_class, curves))
        result.omega.append(gdr_trace.epochs[-1]["omega"])
        if progress:
            progress(seed, result)
    result.seconds = time.perf_counter() - t0
    return result


def softmax_regression_path(steps=400, lr=0.5, weight_decay=1e-2, omega=(0.5, 0.5), n=200, seed=0):
    """Full-batch gradient descent on a two-group softmax regression with fixed group weights.

    Weight decay makes the objective strongly convex, so the path has a unique
    limit.  Returns the list of flattened parameter snapshots.
    """
    rng = np.random.default_rng(seed)
    x = np.vstack([rng.normal((0, 0), 1.0, size=(n, 2)), rng.normal((1.5, 1.0), 1.0, size=(n // 4, 2))])
    y = np.r_[np.zeros(n, dtype=np.int64), np.ones(n // 4, dtype=np.int64)]
    gamma = np.eye(2, dtype=np.int64)
    params = nn.init_params([2, 2], 3e-2, seed)
    omega = np.asarray(omega, dtype=np.float64)
    snaps = [params.flat()]
    for _ in range(steps):
        probs, cache = nn.forward(params, x)
        gbl = gdro.group_losses(nn.per_sample_nll(probs, y), y, gamma)
        _, w = gdro.weighted_batch_objective(omega, gbl, y, gamma)
        nn.sgd_step(params, nn.backward(params, cache, y, w), lr, weight_decay)
        snaps.append(params.flat())
    return snaps
