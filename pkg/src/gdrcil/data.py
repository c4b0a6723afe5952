"""CSV ingestion, cleaning, majority capping, stratified splitting and batching."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from ._io import file_sha256, write_npz

log = logging.getLogger(__name__)

NORMALIZATIONS = ("zscore", "minmax", "none")
NAN_POLICIES = ("drop", "zero")


class DataError(Exception):
    """Raised for unreadable or unusable input data."""


@dataclass
class PrepConfig:
    majority_cap: int | None = 10000
    split_fractions: tuple[float, float, float] = (0.56, 0.14, 0.30)
    seed: int = 0
    normalization: str = "zscore"
    nan_policy: str = "drop"
    stratified: bool = True

    def __post_init__(self):
        self.split_fractions = tuple(float(f) for f in self.split_fractions)
        if len(self.split_fractions) != 3 or any(f <= 0 for f in self.split_fractions):
            raise ValueError("split_fractions must be three positive numbers")
        if abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise ValueError("split_fractions must sum to 1")
        if self.majority_cap is not None and self.majority_cap < 1:
            raise ValueError("majority_cap must be >= 1")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
        if self.nan_policy not in NAN_POLICIES:
            raise ValueError(f"nan_policy must be one of {NAN_POLICIES}")


@dataclass
class RawDataset:
    """Numeric feature columns plus raw categorical columns and text labels.

    Non-numeric cells in numeric columns become NaN and their rows are marked
    in ``flagged``; cleaning decides what to do with them.
    """

    features: np.ndarray
    feature_names: list[str]
    labels: np.ndarray
    label_column: str
    categorical: dict[str, np.ndarray] = field(default_factory=dict)
    flagged: np.ndarray | None = None

    def __post_init__(self):
        n = self.features.shape[0]
        if self.labels.shape[0] != n or any(v.shape[0] != n for v in self.categorical.values()):
            raise DataError("feature, categorical and label columns disagree on row count")
        if self.features.shape[1] != len(self.feature_names):
            raise DataError("feature_names does not match feature arity")
        if n == 0:
            raise DataError("dataset has no rows, so no labels")
        if self.flagged is None:
            self.flagged = np.zeros(n, dtype=bool)

    @property
    def n_rows(self):
        return self.features.shape[0]

    @property
    def arity(self):
        return self.features.shape[1] + len(self.categorical)


def clean_label(text) -> str:
    s = str(text).replace("�", " ")
    s = "".join(ch if ord(ch) < 128 else " " for ch in s)
    return re.sub(r"\s+", " ", s).strip()


def _check_arity(path, expected=None) -> int:
    """Verify every non-blank line has the same field count; return it (0 for an empty file).

    Counting commas is enough for the unquoted exports we read; lines whose
    count looks off are re-parsed with ``csv`` before being reported.
    """
    width = expected
    with open(path, "rb") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            if width is None:
                width = len(next(csv.reader([line.decode("utf-8", "replace")])))
                continue
            if line.count(b",") + 1 != width:
                fields = next(csv.reader([line.decode("utf-8", "replace")]))
                if len(fields) != width:
                    raise DataError(f"{path}: ragged row at line {lineno} ({len(fields)} fields, expected {width})")
    return width or 0


def load_csv(
    path,
    label_column: str,
    names: list[str] | None = None,
    categorical=(),
    drop=(),
    chunksize: int = 200_000,
) -> RawDataset:
    """Read one CSV file.

    ``names`` supplies column names for header-less files (NSL-KDD).  Columns in
    ``categorical`` are kept as text; everything else must be numeric.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    width = _check_arity(path, None if names is None else len(names))
    kw = dict(dtype=str, keep_default_na=False, skipinitialspace=True, chunksize=chunksize,
              encoding="utf-8", encoding_errors="replace")
    if names is not None:
        kw.update(header=None, names=list(names))
    if width == 0:
        raise DataError(f"{path}: empty file")
    try:
        reader = pd.read_csv(path, **kw)
        feats, labels, cats, flags = [], [], {c: [] for c in categorical}, []
        numeric_cols = None
        for chunk in reader:
            chunk.columns = [c.strip() for c in chunk.columns]
            if numeric_cols is None:
                if label_column not in chunk.columns:
                    raise DataError(f"{path}: label column {label_column!r} not in header")
                missing = [c for c in categorical if c not in chunk.columns]
                if missing:
                    raise DataError(f"{path}: categorical columns {missing} not in header")
                skip = {label_column, *categorical, *drop}
                numeric_cols = [c for c in chunk.columns if c not in skip]
            num = chunk[numeric_cols].apply(pd.to_numeric, errors="coerce").to_numpy(dtype=np.float64)
            feats.append(num)
            flags.append(np.isnan(num).any(axis=1))
            labels.append(chunk[label_column].map(clean_label).to_numpy(dtype=object))
            for c in categorical:
                cats[c].append(chunk[c].str.strip().to_numpy(dtype=object))
    except pd.errors.ParserError as exc:
        raise DataError(f"{path}: ragged rows ({exc})") from exc
    if numeric_cols is None:
        raise DataError(f"{path}: no data rows")
    return RawDataset(
        features=np.vstack(feats),
        feature_names=list(numeric_cols),
        labels=np.concatenate(labels),
        label_column=label_column,
        categorical={c: np.concatenate(v) for c, v in cats.items()},
        flagged=np.concatenate(flags),
    )


def merge(raws: list[RawDataset]) -> RawDataset:
    """Concatenate datasets that share a column layout (e.g. train + test files)."""
    if not raws:
        raise DataError("nothing to merge")
    first = raws[0]
    for r in raws[1:]:
        if r.feature_names != first.feature_names or set(r.categorical) != set(first.categorical):
            raise DataError("cannot merge datasets with different columns")
    return RawDataset(
        features=np.vstack([r.features for r in raws]),
        feature_names=list(first.feature_names),
        labels=np.concatenate([r.labels for r in raws]),
        label_column=first.label_column,
        categorical={c: np.concatenate([r.categorical[c] for r in raws]) for c in first.categorical},
        flagged=np.concatenate([r.flagged for r in raws]),
    )


def preprocess(raw: RawDataset, config: PrepConfig, label_map: dict | None = None):
    """Clean rows, one-hot encode categorical columns and canonicalise labels.

    Returns ``(X, labels, feature_names, n_dropped)``.  Normalisation happens
    later, after splitting, so that its statistics come from train only.
    """
    x = raw.features
    bad = ~np.isfinite(x).all(axis=1)
    if config.nan_policy == "drop":
        keep = ~bad
        x = x[keep]
    else:
        keep = np.ones(raw.n_rows, dtype=bool)
        x = np.where(np.isfinite(x), x, 0.0)
    n_dropped = int((~keep).sum())
    if x.shape[0] == 0:
        raise DataError("every row was dropped during cleaning")
    names = list(raw.feature_names)
    blocks = [x]
    for col in sorted(raw.categorical):
        values = raw.categorical[col][keep].astype(str)
        levels = np.unique(values)
        blocks.append((values[:, None] == levels[None, :]).astype(np.float64))
        names.extend(f"{col}={lv}" for lv in levels)
    labels = raw.labels[keep].astype(str)
    if label_map:
        labels = np.array([label_map.get(s, label_map.get(s.lower(), s)) for s in labels], dtype=str)
    return np.hstack(blocks), labels, names, n_dropped


def cap_majority(labels, cap: int, rng: np.random.Generator) -> np.ndarray:
    """Indices kept after down-sampling every class above ``cap`` to exactly ``cap``."""
    if cap < 1:
        raise ValueError("cap must be >= 1")
    labels = np.asarray(labels)
    keep = []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if idx.size > cap:
            idx = np.sort(rng.choice(idx, size=cap, replace=False))
        keep.append(idx)
    return np.sort(np.concatenate(keep)) if keep else np.empty(0, dtype=np.int64)


def _class_split_sizes(n: int, fractions) -> tuple[int, int, int]:
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    n_test = n - n_train - n_val
    sizes = [n_train, n_val, max(n_test, 0)]
    sizes[0] = n - sizes[1] - sizes[2]
    # a class with at least 3 samples must show up in every split
    for j in (1, 2, 0):
        while sizes[j] == 0:
            donor = int(np.argmax(sizes))
            sizes[donor] -= 1
            sizes[j] += 1
    return sizes[0], sizes[1], sizes[2]


def split(labels, fractions=(0.56, 0.14, 0.30), seed: int = 0, stratified: bool = True):
    """Return ``(train_idx, val_idx, test_idx, warnings)``.

    Stratified mode permutes each class with its own generator keyed by
    ``(seed, class position)`` and cuts at rounded fractions.  Classes with
    fewer than 3 samples go entirely to train.
    """
    labels = np.asarray(labels)
    warnings = []
    parts = ([], [], [])
    if stratified:
        for pos, cls in enumerate(sorted(np.unique(labels).tolist())):
            idx = np.flatnonzero(labels == cls)
            rng = np.random.default_rng([seed, pos])
            idx = idx[rng.permutation(idx.size)]
            if idx.size < 3:
                warnings.append(f"class {cls!r} has {idx.size} samples; placed entirely in train")
                parts[0].append(idx)
                continue
            a, b, _ = _class_split_sizes(idx.size, fractions)
            parts[0].append(idx[:a])
            parts[1].append(idx[a : a + b])
            parts[2].append(idx[a + b :])
    else:
        rng = np.random.default_rng([seed, 0xA11])
        idx = rng.permutation(labels.size)
        a, b, _ = _class_split_sizes(labels.size, fractions)
        parts[0].append(idx[:a])
        parts[1].append(idx[a : a + b])
        parts[2].append(idx[a + b :])
    out = [np.sort(np.concatenate(p)) if p else np.empty(0, dtype=np.int64) for p in parts]
    return out[0], out[1], out[2], warnings


@dataclass
class Normalizer:
    mode: str
    shift: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, x, mode: str = "zscore") -> Normalizer:
        d = x.shape[1]
        if mode == "none":
            return cls(mode, np.zeros(d), np.ones(d))
        if mode == "zscore":
            shift = x.mean(axis=0)
            scale = x.std(axis=0)
        elif mode == "minmax":
            shift = x.min(axis=0)
            scale = x.max(axis=0) - shift
        else:
            raise ValueError(f"unknown normalization {mode!r}")
        # constant features keep scale 1 instead of dividing by zero
        scale = np.where(scale <= 1e-12 * np.maximum(1.0, np.abs(shift)), 1.0, scale)
        return cls(mode, shift, scale)

    def apply(self, x):
        return (x - self.shift) / self.scale

    def to_dict(self):
        return {"mode": self.mode, "shift": self.shift.tolist(), "scale": self.scale.tolist()}


def encode_labels(train_labels, all_names):
    """Class order: descending training count, ties broken by name."""
    counts = {name: 0 for name in all_names}
    for name, n in zip(*np.unique(train_labels, return_counts=True)):
        counts[str(name)] = int(n)
    return sorted(counts, key=lambda s: (-counts[s], s))


@dataclass
class Subset:
    x: np.ndarray
    y: np.ndarray

    def __len__(self):
        return self.y.shape[0]


@dataclass(frozen=True)
class TrainingView:
    """Train and validation data only; training stages never see the test split."""

    train: Subset
    val: Subset
    class_names: list[str]

    @property
    def num_classes(self):
        return len(self.class_names)

    @property
    def num_features(self):
        return self.train.x.shape[1]

    def train_counts(self) -> np.ndarray:
        return np.bincount(self.train.y, minlength=self.num_classes)


@dataclass
class DatasetSplit:
    train: Subset
    val: Subset
    test: Subset
    class_names: list[str]
    feature_names: list[str]
    normalizer: Normalizer
    warnings: list[str] = field(default_factory=list)

    @property
    def num_classes(self):
        return len(self.class_names)

    def class_counts(self) -> dict[str, list[int]]:
        return {
            name: [int(np.sum(s.y == i)) for s in (self.train, self.val, self.test)]
            for i, name in enumerate(self.class_names)
        }

    def training_view(self) -> TrainingView:
        return TrainingView(self.train, self.val, list(self.class_names))

    def manifest(self, config: PrepConfig, extra: dict | None = None) -> dict:
        return {
            "config": asdict(config),
            "class_names": list(self.class_names),
            "class_index": {n: i for i, n in enumerate(self.class_names)},
            "class_counts": self.class_counts(),
            "split_sizes": [len(self.train), len(self.val), len(self.test)],
            "feature_names": list(self.feature_names),
            "normalization": self.normalizer.to_dict(),
            "warnings": list(self.warnings),
            **(extra or {}),
        }


def build_split(x, labels, feature_names, config: PrepConfig) -> DatasetSplit:
    """Cap, split, encode labels and normalise with train-only statistics."""
    labels = np.asarray(labels).astype(str)
    keep = np.arange(labels.size)
    if config.majority_cap is not None:
        keep = cap_majority(labels, config.majority_cap, np.random.default_rng([config.seed, 0xCA9]))
    x, labels = x[keep], labels[keep]
    tr, va, te, warnings = split(labels, config.split_fractions, config.seed, config.stratified)
    for w in warnings:
        log.warning(w)
    names = encode_labels(labels[tr], np.unique(labels).tolist())
    index = {n: i for i, n in enumerate(names)}
    y = np.array([index[s] for s in labels], dtype=np.int64)
    norm = Normalizer.fit(x[tr], config.normalization)
    xn = norm.apply(x)
    return DatasetSplit(
        train=Subset(xn[tr], y[tr]),
        val=Subset(xn[va], y[va]),
        test=Subset(xn[te], y[te]),
        class_names=names,
        feature_names=list(feature_names),
        normalizer=norm,
        warnings=warnings,
    )


def batch_iterator(n: int, batch_size: int, seed: int, epoch: int):
    """Yield index arrays: a ``(seed, epoch)``-keyed shuffle cut into consecutive batches."""
    if n <= 0:
        raise DataError("empty training set")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = np.random.default_rng([seed, epoch, 0xBA7C]).permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def config_hash(payload) -> str:
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def file_fingerprint(paths) -> list:
    """``[name, size, sha256]`` per file; content-based so copies and touches don't matter."""
    return [[Path(p).name, os.stat(p).st_size, file_sha256(p)] for p in paths]


def save_split(path, split_: DatasetSplit):
    write_npz(
        path,
        x_train=split_.train.x, y_train=split_.train.y,
        x_val=split_.val.x, y_val=split_.val.y,
        x_test=split_.test.x, y_test=split_.test.y,
    )


def load_training_view(path, class_names) -> TrainingView:
    with np.load(path) as z:
        return TrainingView(Subset(z["x_train"], z["y_train"]), Subset(z["x_val"], z["y_val"]), list(class_names))


def load_test_subset(path) -> Subset:
    with np.load(path) as z:
        return Subset(z["x_test"], z["y_test"])
