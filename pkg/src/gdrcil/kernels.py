"""Kernel backend selection.

The compiled module is used when it was built and importable; set
``GDRCIL_PURE_PYTHON=1`` to force the numpy fallback.  Callers go through the
wrappers below, which normalise dtypes so both backends see the same inputs.
"""
import os

import numpy as np

from . import _pykernels

_impl = _pykernels
if not os.environ.get("GDRCIL_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _pykernels


def backend():
    return _impl.BACKEND


def use(name):
    """Switch backend at runtime (``"cython"`` or ``"numpy"``). Used by tests and benchmarks."""
    global _impl
    if name == "numpy":
        _impl = _pykernels
    elif name == "cython":
        from . import _ckernels

        _impl = _ckernels
    else:
        raise ValueError(f"unknown backend {name!r}")


def available():
    names = ["numpy"]
    try:
        from . import _ckernels  # noqa: F401

        names.append("cython")
    except ImportError:
        pass
    return names


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _i64(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def softmax(logits):
    return _impl.softmax(_f64(logits))


def nll(probs, y, floor):
    return _impl.nll(_f64(probs), _i64(y), float(floor))


def softmax_xent_grad(probs, y, w):
    return _impl.softmax_xent_grad(_f64(probs), _i64(y), _f64(w))


def scaled_xent_grad(probs, target, coef):
    return _impl.scaled_xent_grad(_f64(probs), _f64(target), _f64(coef))


def relu_dropout_forward(a, scale=None):
    return _impl.relu_dropout_forward(_f64(a), None if scale is None else _f64(scale))


def relu_dropout_backward(dh, h, scale=None):
    return _impl.relu_dropout_backward(_f64(dh), _f64(h), None if scale is None else _f64(scale))


def group_mean(values, g, k):
    return _impl.group_mean(_f64(values), _i64(g), int(k))


def confusion_matrix(y_true, y_pred, c):
    return _impl.confusion_matrix(_i64(y_true), _i64(y_pred), int(c))


def roc_sweep(sorted_scores, sorted_labels):
    return _impl.roc_sweep(_f64(sorted_scores), _i64(sorted_labels))
