"""``gdrcil`` command line: prepare, group, train, evaluate, compare, synth-bench.

Artifacts live under ``--out``::

    prepare/manifest.json, prepare/split-<key>.npz
    groups/groups.json
    runs/<method>/seed<k>/{checkpoint.npz, manifest.json, timings.json, report/}
    compare/{<metric>.txt, aggregate.json}

Manifests hold only paths relative to ``--out`` and no wall-clock data, so two
runs of the same configuration produce byte-identical files.  Timings go to
the ``timings.json`` sidecar.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import resource
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, baselines, config, data, gdro, grouping, kernels, metrics, nn, synth
from ._io import file_sha256
from .training import NumericError, fit

log = logging.getLogger("gdrcil")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def _dump(path: Path, payload):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _read_json(path: Path, what: str):
    if not path.exists():
        raise data.DataError(f"missing {what}: {path}")
    return json.loads(path.read_text())


def _peak_rss_mb():
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0


def run_dir(out: Path, method: str, seed: int) -> Path:
    return out / "runs" / method / f"seed{seed}"


# ---------------------------------------------------------------- prepare

def _prepare_key(cfg: config.ExperimentConfig, profile, paths):
    return data.config_hash({
        "profile": dataclasses.asdict(profile),
        "files": data.file_fingerprint(paths),
        "prep": dataclasses.asdict(cfg.prep),
    })


def cmd_prepare(cfg: config.ExperimentConfig, out: Path, args) -> int:
    profile = cfg.dataset()
    paths = profile.resolve_files(cfg.data_dir)
    key = _prepare_key(cfg, profile, paths)
    manifest_path = out / "prepare" / "manifest.json"
    if manifest_path.exists():
        old = json.loads(manifest_path.read_text())
        if old.get("cache_key") == key and (out / "prepare" / old["cache_file"]).exists():
            print(f"prepare: cache hit ({key})")
            return EXIT_OK
    t0 = time.perf_counter()
    raw = profile.load(paths)
    x, labels, names, n_dropped = data.preprocess(raw, cfg.prep, profile.label_map)
    split = data.build_split(x, labels, names, cfg.prep)
    for w in split.warnings:
        log.warning(w)
    cache_file = f"split-{key}.npz"
    (out / "prepare").mkdir(parents=True, exist_ok=True)
    data.save_split(out / "prepare" / cache_file, split)
    manifest = split.manifest(cfg.prep, {
        "cache_key": key,
        "cache_file": cache_file,
        "split_sha256": file_sha256(out / "prepare" / cache_file),
        "dataset_profile": profile.name,
        "files": data.file_fingerprint(paths),
        "rows_loaded": raw.n_rows,
        "rows_dropped": int(n_dropped),
        "class_map_hash": nn.class_map_hash(split.class_names),
    })
    _dump(manifest_path, manifest)
    _dump(out / "prepare" / "timings.json", {"seconds": time.perf_counter() - t0, "peak_rss_mb": _peak_rss_mb()})
    tr, va, te = manifest["split_sizes"]
    print(f"prepare: {len(split.class_names)} classes, train {tr} / val {va} / test {te}")
    return EXIT_OK


def _prepared(out: Path):
    """Split manifest plus the path of the cached matrices."""
    man = _read_json(out / "prepare" / "manifest.json", "split manifest (run `gdrcil prepare` first)")
    cache = out / "prepare" / man["cache_file"]
    if not cache.exists():
        raise data.DataError(f"missing split cache {cache}")
    return man, cache


# ------------------------------------------------------------------ group

def cmd_group(cfg: config.ExperimentConfig, out: Path, args) -> int:
    man, cache = _prepared(out)
    view = data.load_training_view(cache, man["class_names"])
    seed = cfg.seeds[0] if args.seed is None else args.seed
    t0 = time.perf_counter()
    report, _ = grouping.proxy_train(view, cfg.train, seed, cfg.gdro.schedule())
    groups = grouping.build_groups(report, cfg.num_groups, cfg.grouping.zero_f1_threshold, seed,
                                   cfg.grouping.count_scale)
    path = out / "groups" / "groups.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    grouping.groups_to_json(
        path, groups, report, man["class_names"], cfg.gdro.calib_b, cfg.grouping.zero_f1_threshold, seed,
        split_sha256=man["split_sha256"],
        class_map_hash=man["class_map_hash"],
        proxy_epochs=report.epochs_run,
        count_scale=cfg.grouping.count_scale,
        train=dataclasses.asdict(cfg.train),
    )
    _dump(out / "groups" / "timings.json", {"seconds": time.perf_counter() - t0, "peak_rss_mb": _peak_rss_mb()})
    print(f"group: {groups.num_groups} groups, singletons "
          f"{[man['class_names'][i] for i in groups.singleton_classes]}")
    for j in range(groups.num_groups):
        members = [man["class_names"][i] for i in np.flatnonzero(groups.gamma[j])]
        print(f"  group {j}: n={int(groups.group_sizes[j])} {members}")
    return EXIT_OK


# ------------------------------------------------------------------ train

def _train_one(cfg: config.ExperimentConfig, out: Path, seed: int, groups_file: str | None):
    man, cache = _prepared(out)
    view = data.load_training_view(cache, man["class_names"])
    artifacts = {"split": man["split_sha256"], "groups": None}
    t0 = time.perf_counter()
    if cfg.method == "gdr-cil":
        gpath = Path(groups_file) if groups_file else out / "groups" / "groups.json"
        if not gpath.exists():
            raise data.DataError(f"missing groups file {gpath} (run `gdrcil group` first)")
        groups, payload = grouping.groups_from_json(gpath)
        if payload["class_names"] != man["class_names"]:
            raise data.DataError("class-map mismatch between groups file and split")
        artifacts["groups"] = file_sha256(gpath)
        objective_desc = gdro.GroupDROObjective(groups, cfg.gdro).describe()
        params, trace = gdro.train(view, groups, cfg.train, cfg.gdro, seed)
    else:
        objective = baselines.make_objective(cfg.baseline_spec(), view.train_counts())
        objective_desc = {**objective.describe(), **baselines.describe(cfg.baseline_spec())}
        params, trace = fit(view, cfg.train, objective, cfg.gdro.schedule(), seed)
    seconds = time.perf_counter() - t0
    rdir = run_dir(out, cfg.method, seed)
    rdir.mkdir(parents=True, exist_ok=True)
    nn.save_checkpoint(rdir / "checkpoint.npz", params, man["class_names"], {"method": cfg.method, "seed": seed})
    artifacts["checkpoint"] = file_sha256(rdir / "checkpoint.npz")
    manifest = {
        "version": __version__,
        "method": cfg.method,
        "seed": seed,
        "config": cfg.snapshot(),
        "objective": objective_desc,
        "kernel_backend": kernels.backend(),
        "artifacts": artifacts,
        "class_names": man["class_names"],
        "stop_reason": trace.stop_reason,
        "best_epoch": trace.best_epoch,
        "final_epoch": trace.final_epoch,
        "trace": trace.epochs,
        "metrics_report": str((rdir / "report" / "metrics.csv").relative_to(out)),
    }
    _dump(rdir / "manifest.json", manifest)
    _dump(rdir / "timings.json", {"train_seconds": seconds, "peak_rss_mb": _peak_rss_mb()})
    return seed, trace.stop_reason, trace.best_epoch, seconds


def _train_job(job):
    return _train_one(*job)


def cmd_train(cfg: config.ExperimentConfig, out: Path, args) -> int:
    seeds = list(cfg.seeds) if args.seed is None else [args.seed]
    jobs = [(cfg, out, s, args.groups_file) for s in seeds]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_train_job, jobs))
    else:
        results = [_train_job(j) for j in jobs]
    for seed, reason, best, seconds in results:
        print(f"train: {cfg.method} seed {seed}: {reason}, best epoch {best} ({seconds:.1f}s)")
    return EXIT_OK


# --------------------------------------------------------------- evaluate

def evaluate_checkpoint(ckpt: Path, out: Path, report_dir: Path | None = None):
    man, cache = _prepared(out)
    params, meta = nn.load_checkpoint(ckpt)
    if meta["class_map_hash"] != man["class_map_hash"]:
        raise data.DataError(f"class-map hash mismatch: checkpoint {meta['class_map_hash']} "
                             f"vs split {man['class_map_hash']}")
    test = data.load_test_subset(cache)
    probs = nn.predict_proba(params, test.x)
    per_class, curves, _ = metrics.evaluate(probs, test.y, len(man["class_names"]))
    label = f"{meta.get('method', 'run')}/seed{meta.get('seed', '?')}"
    metrics.write_report(report_dir or ckpt.parent / "report", man["class_names"], per_class, curves, label)
    return per_class


def cmd_evaluate(cfg: config.ExperimentConfig, out: Path, args) -> int:
    if args.checkpoint:
        ckpts = [Path(args.checkpoint)]
    else:
        seeds = list(cfg.seeds) if args.seed is None else [args.seed]
        ckpts = [run_dir(out, cfg.method, s) / "checkpoint.npz" for s in seeds]
    for ckpt in ckpts:
        if not ckpt.exists():
            raise data.DataError(f"missing checkpoint {ckpt}")
        per_class = evaluate_checkpoint(ckpt, out)
        m = metrics.macro(per_class)
        print(f"evaluate: {ckpt.parent.relative_to(out) if ckpt.is_relative_to(out) else ckpt}: "
              f"macro F1 {100 * m['f1']:.2f}, G-mean {100 * m['g_mean']:.2f}")
    return EXIT_OK


# ---------------------------------------------------------------- compare

def _load_run_metrics(manifest_path: Path, out: Path):
    man = json.loads(manifest_path.read_text())
    report = out / man["metrics_report"]
    payload = _read_json(report.with_name("metrics.json"), "metrics report (run `gdrcil evaluate` first)")
    per_class = [metrics.ClassMetrics(**payload["classes"][n]) for n in man["class_names"]]
    return man["method"], man["class_names"], per_class


def cmd_compare(cfg: config.ExperimentConfig, out: Path, args) -> int:
    paths = [Path(p) for p in args.manifests] or sorted((out / "runs").glob("*/seed*/manifest.json"))
    if not paths:
        raise data.DataError(f"no run manifests under {out / 'runs'}")
    runs: dict[str, list] = {}
    names = None
    for p in paths:
        method, cls, per_class = _load_run_metrics(p, out)
        if names is not None and cls != names:
            raise data.DataError(f"{p}: class set differs from the other runs")
        names = cls
        runs.setdefault(method, []).append(per_class)
    order = [m for m in config.METHODS if m in runs]
    aggregates = {m: metrics.aggregate_runs(runs[m], names) for m in order}
    cdir = out / "compare"
    cdir.mkdir(parents=True, exist_ok=True)
    for metric in args.metrics:
        table = metrics.format_table(aggregates, metric)
        (cdir / f"{metric}.txt").write_text(table + "\n")
        print(table + "\n")
    _dump(cdir / "aggregate.json", {
        m: {
            "n_runs": a.n_runs,
            "class_names": a.class_names,
            "mean": {k: v.tolist() for k, v in a.mean.items()},
            "std": {k: v.tolist() for k, v in a.std.items()},
            "macro_mean": a.macro_mean,
            "macro_std": a.macro_std,
        }
        for m, a in aggregates.items()
    })
    return EXIT_OK


# ------------------------------------------------------------ synth-bench

def bench_verdict(summary: dict) -> dict:
    erm, gdr = summary["erm"], summary["gdr-cil"]
    return {
        "minority_recall_gain": gdr["minority_recall"] - erm["minority_recall"],
        "recall_ok": gdr["minority_recall"] >= erm["minority_recall"] + 0.10,
        "g_mean_ok": gdr["macro_g_mean"] > erm["macro_g_mean"],
    }


def cmd_synth_bench(cfg: config.ExperimentConfig, out: Path, args) -> int:
    bc = synth.BenchConfig()
    if args.seed is not None:
        bc.seeds = (args.seed,)
    if args.max_epochs is not None:
        bc.max_epochs = args.max_epochs
    if args.beta is not None:
        bc.beta = args.beta
    if args.calib_b is not None:
        bc.calib_b = args.calib_b

    def progress(seed, _):
        print(f"synth-bench: seed {seed} done", flush=True)

    result = synth.run_benchmark(bc, progress)
    summary = result.summary()
    verdict = bench_verdict(summary)
    bdir = out / "synth-bench"
    for seed, method, per_class, curves in result.runs:
        metrics.write_report(bdir / method / f"seed{seed}", result.class_names, per_class, curves,
                             f"{method}/seed{seed}")
    _dump(bdir / "summary.json", {"config": dataclasses.asdict(bc), "kernel_backend": kernels.backend(),
                                  "summary": summary, "omega": result.omega, "verdict": verdict})
    _dump(bdir / "timings.json", {"seconds": result.seconds, "peak_rss_mb": _peak_rss_mb()})
    for name in ("erm", "gdr-cil"):
        s = summary[name]
        print(f"{name:8s} minority recall {100 * s['minority_recall']:6.2f}  "
              f"macro G-mean {100 * s['macro_g_mean']:6.2f}  macro F1 {100 * s['macro_f1']:6.2f}")
    ok = verdict["recall_ok"] and verdict["g_mean_ok"]
    print(f"synth-bench: {'PASS' if ok else 'FAIL'} (recall gain "
          f"{100 * verdict['minority_recall_gain']:.2f} points, {result.seconds:.1f}s)")
    return EXIT_OK


# ------------------------------------------------------------------- main

COMMANDS = {
    "prepare": cmd_prepare,
    "group": cmd_group,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "synth-bench": cmd_synth_bench,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML experiment file")
    common.add_argument("--seed", type=int, help="single seed instead of the configured list")
    common.add_argument("--out", help="artifact directory (default: output_dir from the config)")
    common.add_argument("-v", "--verbose", action="store_true")

    method = argparse.ArgumentParser(add_help=False)
    method.add_argument("--method", choices=config.METHODS)
    method.add_argument("--beta", type=float, help="weight step size")
    method.add_argument("--calib-b", type=float, help="calibration constant B")
    method.add_argument("--max-epochs", type=int)
    method.add_argument("--group-reduction", choices=gdro.REDUCTIONS)

    p = argparse.ArgumentParser(prog="gdrcil", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("prepare", parents=[common], help="load, clean and split the dataset")
    g = sub.add_parser("group", parents=[common, method], help="proxy training and class grouping")
    g.add_argument("--num-groups", type=int)
    t = sub.add_parser("train", parents=[common, method], help="train one method for each seed")
    t.add_argument("--groups-file")
    t.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    e = sub.add_parser("evaluate", parents=[common, method], help="score checkpoints on the test split")
    e.add_argument("--checkpoint")
    c = sub.add_parser("compare", parents=[common], help="mean ± std tables over runs")
    c.add_argument("manifests", nargs="*", help="run manifests (default: all under --out)")
    c.add_argument("--metrics", nargs="+", default=["f1", "recall", "g_mean", "auc"],
                   choices=metrics.METRIC_NAMES)
    sub.add_parser("synth-bench", parents=[common, method], help="synthetic imbalance benchmark")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config.load(args.config)
        cfg = config.with_overrides(
            cfg,
            method=getattr(args, "method", None),
            beta=getattr(args, "beta", None),
            calib_b=getattr(args, "calib_b", None),
            max_epochs=getattr(args, "max_epochs", None),
            group_reduction=getattr(args, "group_reduction", None),
            num_groups=getattr(args, "num_groups", None),
            output_dir=args.out,
        )
        out = Path(cfg.output_dir)
        return COMMANDS[args.command](cfg, out, args)
    except (config.ConfigError, grouping.GroupingError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except data.DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
