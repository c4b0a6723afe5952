"""Time each kernel under both backends and one full training epoch.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Prints one row per kernel with the median time of each backend and the
speed-up of the compiled one.  Results from both backends are also checked
for agreement, so a mismatch shows up here before it reaches the test suite.
"""
import argparse
import statistics
import time

import numpy as np

from gdrcil import data, kernels, nn
from gdrcil.training import ERMObjective, Schedule, fit


def _cases(rng):
    n, c, h = 4096, 10, 256
    logits = rng.normal(size=(n, c))
    probs = kernels.softmax(logits)
    y = rng.integers(0, c, size=n)
    w = rng.random(n)
    target = rng.dirichlet(np.ones(c), size=n)
    a = rng.normal(size=(n, h))
    scale = (rng.random((n, h)) > 0.2) / 0.8
    hid = np.maximum(a, 0) * scale
    g = rng.integers(0, 8, size=n)
    scores = np.sort(rng.random(200_000))[::-1].copy()
    labels = rng.integers(0, 2, size=scores.size)
    yp = rng.integers(0, c, size=200_000)
    yt = rng.integers(0, c, size=200_000)
    return {
        "softmax": lambda: kernels.softmax(logits),
        "nll": lambda: kernels.nll(probs, y, 1e-12),
        "softmax_xent_grad": lambda: kernels.softmax_xent_grad(probs, y, w),
        "scaled_xent_grad": lambda: kernels.scaled_xent_grad(probs, target, w),
        "relu_dropout_forward": lambda: kernels.relu_dropout_forward(a, scale),
        "relu_dropout_backward": lambda: kernels.relu_dropout_backward(a, hid, scale),
        "group_mean": lambda: kernels.group_mean(w, g, 8),
        "confusion_matrix": lambda: kernels.confusion_matrix(yt, yp, c),
        "roc_sweep": lambda: kernels.roc_sweep(scores, labels),
    }


def _epoch():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(20_000, 40))
    y = rng.integers(0, 5, size=x.shape[0])
    view = data.TrainingView(data.Subset(x, y), data.Subset(x[:2000], y[:2000]), [f"c{i}" for i in range(5)])
    return lambda: fit(view, nn.TrainHyper(), ERMObjective(), Schedule(max_epochs=1), seed=0)


def _median_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=1e-12, atol=1e-15)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    backends = kernels.available()
    if "cython" not in backends:
        print("compiled kernels not built; only the numpy backend is available")
    cases = _cases(np.random.default_rng(0))
    cases["training epoch"] = _epoch()
    print(f"{'kernel':24s}" + "".join(f"{b:>12s}" for b in backends) + ("   speed-up" if len(backends) > 1 else ""))
    for name, fn in cases.items():
        row, outs, times = f"{name:24s}", [], []
        reps = max(1, args.repeat // 10) if name == "training epoch" else args.repeat
        for b in backends:
            kernels.use(b)
            outs.append(fn())
            t = _median_time(fn, reps)
            times.append(t)
            row += f"{1e3 * t:10.3f}ms"
        if len(backends) > 1:
            row += f"{times[0] / times[1]:10.2f}x"
            if name != "training epoch" and not _same(outs[0], outs[1]):
                row += "  MISMATCH"
        print(row)


if __name__ == "__main__":
    main()
