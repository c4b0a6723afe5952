"""Experiment configuration: one TOML document, validated against the module dataclasses."""
from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import profiles
from .baselines import BaselineSpec
from .data import PrepConfig
from .gdro import GdroConfig
from .nn import TrainHyper

METHODS = ("gdr-cil", "erm", "focal", "cb", "ldam-drw", "ldr-kl")
DEFAULT_SEEDS = (1, 2, 3, 4, 5)


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


@dataclass
class GroupingConfig:
    num_groups: int | None = None  # None: profile default
    zero_f1_threshold: float = 0.01
    count_scale: str = "log"

    def __post_init__(self):
        if self.count_scale not in ("log", "raw"):
            raise ValueError("count_scale must be 'log' or 'raw'")
        if not 0.0 <= self.zero_f1_threshold <= 1.0:
            raise ValueError("zero_f1_threshold must lie in [0, 1]")


@dataclass
class ProfileOverrides:
    """Only meaningful for the ``custom`` profile, or to point a named profile at renamed files."""

    files: tuple[str, ...] | None = None
    label_column: str | None = None
    categorical: tuple[str, ...] | None = None
    drop: tuple[str, ...] | None = None
    column_names: tuple[str, ...] | None = None
    label_map: dict | None = None
    expected_features: int | None = None

    def as_kwargs(self):
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if v is not None:
                out[f.name] = tuple(v) if isinstance(v, list) else v
        return out


@dataclass
class ExperimentConfig:
    dataset_profile: str = "custom"
    data_dir: str = "data"
    method: str = "gdr-cil"
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    output_dir: str = "runs"
    prep: PrepConfig = field(default_factory=PrepConfig)
    train: TrainHyper = field(default_factory=TrainHyper)
    gdro: GdroConfig = field(default_factory=GdroConfig)
    grouping: GroupingConfig = field(default_factory=GroupingConfig)
    baseline: BaselineSpec = field(default_factory=BaselineSpec)
    profile: ProfileOverrides = field(default_factory=ProfileOverrides)

    def dataset(self) -> profiles.DatasetProfile:
        return profiles.get(self.dataset_profile, **self.profile.as_kwargs())

    @property
    def num_groups(self) -> int:
        return self.grouping.num_groups or self.dataset().num_groups

    def baseline_spec(self) -> BaselineSpec:
        return dataclasses.replace(self.baseline, kind=self.method)

    def snapshot(self) -> dict:
        """Everything that influences results; the output directory is left out on purpose."""
        d = dataclasses.asdict(self)
        d.pop("output_dir")
        d["grouping"]["num_groups"] = self.num_groups
        return _jsonable(d)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


_SECTIONS = {
    "prep": PrepConfig,
    "train": TrainHyper,
    "gdro": GdroConfig,
    "grouping": GroupingConfig,
    "baseline": BaselineSpec,
    "profile": ProfileOverrides,
}
_TOP = ("dataset_profile", "data_dir", "method", "seeds", "output_dir")


def _build(cls, values: dict, section: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"[{section}] unknown key(s): {', '.join(unknown)}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


def from_dict(doc: dict) -> ExperimentConfig:
    doc = dict(doc)
    top = doc.pop("experiment", {})
    unknown = sorted(set(top) - set(_TOP))
    if unknown:
        raise ConfigError(f"[experiment] unknown key(s): {', '.join(unknown)}")
    stray = sorted(set(doc) - set(_SECTIONS))
    if stray:
        raise ConfigError(f"unknown section(s): {', '.join(stray)}")
    name = top.get("dataset_profile", "custom")
    if name not in profiles.PROFILES and name != "custom":
        raise ConfigError(f"unknown dataset_profile {name!r}")
    sections = {k: dict(doc.get(k, {})) for k in _SECTIONS}
    # profile defaults fill whatever the document leaves out
    base = profiles.get(name, **_build(ProfileOverrides, sections["profile"], "profile").as_kwargs())
    sections["prep"].setdefault("majority_cap", base.majority_cap)
    if sections["prep"].get("majority_cap") == 0:
        sections["prep"]["majority_cap"] = None  # TOML has no null
    sections["gdro"].setdefault("beta", base.beta)
    sections["gdro"].setdefault("calib_b", base.calib_b)
    sections["grouping"].setdefault("num_groups", base.num_groups)
    built = {k: _build(cls, sections[k], k) for k, cls in _SECTIONS.items()}
    method = top.get("method", "gdr-cil")
    if method not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}, got {method!r}")
    seeds = tuple(int(s) for s in top.get("seeds", DEFAULT_SEEDS))
    if not seeds or len(set(seeds)) != len(seeds):
        raise ConfigError("seeds must be a non-empty list of distinct integers")
    return ExperimentConfig(
        dataset_profile=name,
        data_dir=str(top.get("data_dir", "data")),
        method=method,
        seeds=seeds,
        output_dir=str(top.get("output_dir", "runs")),
        **built,
    )


def load(path=None) -> ExperimentConfig:
    if path is None:
        return from_dict({})
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    cfg = from_dict(doc)
    # relative paths in the file are taken relative to the file itself
    base = Path(path).parent
    if not Path(cfg.data_dir).is_absolute():
        cfg.data_dir = str((base / cfg.data_dir).resolve())
    if not Path(cfg.output_dir).is_absolute():
        cfg.output_dir = str(base / cfg.output_dir)
    return cfg


def with_overrides(cfg: ExperimentConfig, **flags) -> ExperimentConfig:
    """Apply command-line overrides; ``None`` values are ignored."""
    flags = {k: v for k, v in flags.items() if v is not None}
    try:
        if "method" in flags:
            if flags["method"] not in METHODS:
                raise ConfigError(f"method must be one of {METHODS}")
            cfg = dataclasses.replace(cfg, method=flags["method"])
        if "output_dir" in flags:
            cfg = dataclasses.replace(cfg, output_dir=str(flags["output_dir"]))
        if "seeds" in flags:
            cfg = dataclasses.replace(cfg, seeds=tuple(flags["seeds"]))
        gd = {k: flags[k] for k in ("beta", "calib_b", "max_epochs", "group_reduction") if k in flags}
        if gd:
            cfg = dataclasses.replace(cfg, gdro=dataclasses.replace(cfg.gdro, **gd))
        if "num_groups" in flags:
            cfg = dataclasses.replace(cfg, grouping=dataclasses.replace(cfg.grouping, num_groups=flags["num_groups"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg
