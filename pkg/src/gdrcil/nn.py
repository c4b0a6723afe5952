"""Fully connected ReLU classifier with softmax output, written against numpy.

Parameters are plain arrays so that the training loop, the finite-difference
tests and the checkpoint format all see the same objects.  Hidden layers use
inverted dropout, so evaluation never rescales.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from ._io import write_npz

PROB_FLOOR = 1e-12
CHECKPOINT_VERSION = 1


@dataclass
class TrainHyper:
    learning_rate: float = 1e-2
    weight_decay: float = 1e-4
    dropout_rate: float = 0.2
    init_std: float = 3e-2
    batch_size: int = 128
    hidden: tuple[int, ...] = (256, 128, 64)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.init_std <= 0:
            raise ValueError("init_std must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.hidden = tuple(int(h) for h in self.hidden)


@dataclass
class ModelParams:
    """Weights ``W[i]`` of shape (fan_in, fan_out) and biases ``b[i]``.

    The last layer is the output module: column ``c`` of ``W[-1]`` together
    with ``b[-1][c]`` is the head for class ``c``.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    step: int = 0

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def num_classes(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def hidden_layers(self):
        return list(zip(self.weights[:-1], self.biases[:-1]))

    @property
    def output_heads(self):
        w, b = self.weights[-1], self.biases[-1]
        return [(w[:, c], b[c]) for c in range(w.shape[1])]

    def copy(self) -> ModelParams:
        return ModelParams([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.step)

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]  # input to each layer
    scales: list[np.ndarray | None]  # dropout scale masks, one per hidden layer
    logits: np.ndarray
    probs: np.ndarray = field(repr=False)


def truncated_normal(rng: np.random.Generator, std: float, shape, bound: float = 2.0) -> np.ndarray:
    """Normal(0, std^2) samples, resampling anything beyond ``bound`` standard deviations."""
    out = rng.normal(0.0, std, size=shape)
    limit = bound * std
    bad = np.abs(out) > limit
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > limit
    return out


def init_params(layer_sizes, init_std: float = 3e-2, seed: int = 0) -> ModelParams:
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or any(s <= 0 for s in sizes):
        raise ValueError(f"invalid layer sizes {layer_sizes!r}")
    if init_std <= 0:
        raise ValueError("init_std must be positive")
    rng = np.random.default_rng(seed)
    weights = [truncated_normal(rng, init_std, (a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
    biases = [np.zeros(b) for b in sizes[1:]]
    return ModelParams(weights, biases)


def _dropout_scale(rng, shape, rate):
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def forward(params: ModelParams, x, dropout_rate: float = 0.0, rng: np.random.Generator | None = None):
    """Return ``(probs, cache)``.

    Dropout is active only when ``dropout_rate > 0`` and an ``rng`` is given
    (train mode); otherwise this is the evaluation pass.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.weights[0].shape[0]:
        raise ValueError(f"expected inputs of width {params.weights[0].shape[0]}, got shape {x.shape}")
    train = dropout_rate > 0.0 and rng is not None
    inputs, scales = [], []
    h = x
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        inputs.append(h)
        scale = _dropout_scale(rng, (h.shape[0], w.shape[1]), dropout_rate) if train else None
        scales.append(scale)
        h = kernels.relu_dropout_forward(h @ w + b, scale)
    inputs.append(h)
    logits = h @ params.weights[-1] + params.biases[-1]
    probs = kernels.softmax(logits)
    return probs, ForwardCache(inputs, scales, logits, probs)


def predict_proba(params: ModelParams, x, batch_size: int = 4096) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] == 0:
        return np.empty((0, params.num_classes))
    return np.vstack([forward(params, x[i : i + batch_size])[0] for i in range(0, x.shape[0], batch_size)])


def per_sample_nll(probs, y) -> np.ndarray:
    y = np.asarray(y)
    if y.size and (y.min() < 0 or y.max() >= probs.shape[1]):
        raise ValueError("label out of range")
    return kernels.nll(probs, y, PROB_FLOOR)


def backward_logits(params: ModelParams, cache: ForwardCache, dlogits) -> Gradients:
    """Backpropagate a gradient w.r.t. the logits through the cached forward pass."""
    n_layers = len(params.weights)
    gw: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    delta = np.asarray(dlogits, dtype=np.float64)
    for i in range(n_layers - 1, -1, -1):
        a_in = cache.inputs[i]
        gw[i] = a_in.T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            dh = delta @ params.weights[i].T
            delta = kernels.relu_dropout_backward(dh, a_in, cache.scales[i - 1])
    return Gradients(gw, gb)


def backward(params: ModelParams, cache: ForwardCache, y, per_sample_weights) -> Gradients:
    """Exact gradient of ``sum_i w_i * nll_i``, reusing the forward pass's dropout masks."""
    w = np.asarray(per_sample_weights, dtype=np.float64)
    if w.shape != (cache.probs.shape[0],):
        raise ValueError("need one weight per sample")
    return backward_logits(params, cache, kernels.softmax_xent_grad(cache.probs, y, w))


def sgd_step(params: ModelParams, grads: Gradients, learning_rate: float, weight_decay: float = 0.0) -> ModelParams:
    """In-place ``theta -= lr * (grad + wd * theta)``; biases are not decayed."""
    if learning_rate <= 0:
        raise ValueError("learning_rate must be positive")
    for w, g in zip(params.weights, grads.weights):
        if weight_decay:
            w -= learning_rate * (g + weight_decay * w)
        else:
            w -= learning_rate * g
    for b, g in zip(params.biases, grads.biases):
        b -= learning_rate * g
    params.step += 1
    return params


def class_map_hash(class_names) -> str:
    return hashlib.sha256(json.dumps(list(class_names)).encode()).hexdigest()[:16]


def save_checkpoint(path, params: ModelParams, class_names, extra: dict | None = None):
    """Write an ``.npz`` checkpoint: little-endian float64 tensors plus a JSON header."""
    meta = {
        "format": "gdrcil-checkpoint",
        "version": CHECKPOINT_VERSION,
        "layer_sizes": params.layer_sizes,
        "byteorder": "little",
        "class_names": list(class_names),
        "class_map_hash": class_map_hash(class_names),
        "step": params.step,
        **(extra or {}),
    }
    arrays = {"meta": np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)}
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        arrays[f"W{i}"] = np.ascontiguousarray(w, dtype="<f8")
        arrays[f"b{i}"] = np.ascontiguousarray(b, dtype="<f8")
    write_npz(path, **arrays)


def load_checkpoint(path):
    """Return ``(params, meta)``."""
    with np.load(path) as z:
        meta = json.loads(z["meta"].tobytes().decode())
        if meta.get("format") != "gdrcil-checkpoint":
            raise ValueError(f"{path} is not a checkpoint")
        if meta["version"] > CHECKPOINT_VERSION:
            raise ValueError(f"checkpoint version {meta['version']} is newer than supported")
        n = len(meta["layer_sizes"]) - 1
        weights = [z[f"W{i}"].astype(np.float64) for i in range(n)]
        biases = [z[f"b{i}"].astype(np.float64) for i in range(n)]
    return ModelParams(weights, biases, meta["step"]), meta
