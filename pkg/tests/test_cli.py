import json
import shutil
from pathlib import Path

import pytest
from toyproject import full_pipeline, make_project, run
from toyproject import tree as _tree

from gdrcil import cli, data


@pytest.fixture(scope="module")
def project(tmp_path_factory):
    root = tmp_path_factory.mktemp("proj")
    cfg = make_project(root)
    full_pipeline(cfg)
    return root, cfg


def test_pipeline_artifacts(project):
    root, _ = project
    out = root / "out"
    assert (out / "prepare" / "manifest.json").exists()
    groups = json.loads((out / "groups" / "groups.json").read_text())
    assert groups["num_groups"] == 3 and groups["class_names"] == ["norm", "scan", "flood", "rare"]
    for method in ("gdr-cil", "erm"):
        for seed in (1, 2):
            rdir = out / "runs" / method / f"seed{seed}"
            man = json.loads((rdir / "manifest.json").read_text())
            assert man["method"] == method and man["seed"] == seed
            assert man["kernel_backend"] in ("numpy", "cython")
            assert (out / man["metrics_report"]).exists()
            assert "seconds" not in json.dumps(man)
            assert (rdir / "timings.json").exists()
    agg = json.loads((out / "compare" / "aggregate.json").read_text())
    assert set(agg) == {"gdr-cil", "erm"} and agg["erm"]["n_runs"] == 2
    assert (out / "compare" / "f1.txt").read_text().count("±") > 0


def test_prepare_cache_hit(project, capsys):
    _, cfg = project
    assert run(cfg, "prepare") == 0
    assert "cache hit" in capsys.readouterr().out


def test_group_rerun_is_identical(project, tmp_path):
    root, cfg = project
    path = root / "out" / "groups" / "groups.json"
    before = path.read_bytes()
    assert run(cfg, "group") == 0
    assert path.read_bytes() == before


def test_evaluate_twice_identical(project):
    root, cfg = project
    report = root / "out" / "runs" / "erm" / "seed1" / "report"
    before = _tree(report)
    assert run(cfg, "evaluate", "--method", "erm", "--seed", "1") == 0
    assert _tree(report) == before


def test_compare_single_run_has_zero_std(project, tmp_path):
    root, cfg = project
    out = root / "out"
    man = out / "runs" / "erm" / "seed1" / "manifest.json"
    assert run(cfg, "compare", str(man)) == 0
    agg = json.loads((out / "compare" / "aggregate.json").read_text())
    assert agg["erm"]["n_runs"] == 1
    assert all(v == 0.0 for vals in agg["erm"]["std"].values() for v in vals)
    assert run(cfg, "compare") == 0  # restore the full aggregate


def test_two_output_dirs_are_bit_identical(project, tmp_path):
    root, cfg = project
    out2 = tmp_path / "again"
    full_pipeline(cfg, out2)
    a, b = _tree(root / "out"), _tree(out2)
    assert a.keys() == b.keys()
    assert [k for k in a if a[k] != b[k]] == []


def test_parallel_training_matches_sequential(project, tmp_path):
    root, cfg = project
    out = tmp_path / "par"
    shutil.copytree(root / "out" / "prepare", out / "prepare")
    shutil.copytree(root / "out" / "groups", out / "groups")
    assert run(cfg, "train", "--out", str(out), "--jobs", "2") == 0
    for seed in (1, 2):
        rel = Path("runs") / "gdr-cil" / f"seed{seed}"
        for name in ("manifest.json", "checkpoint.npz"):
            assert (out / rel / name).read_bytes() == (root / "out" / rel / name).read_bytes()


def test_stage_isolation(project, tmp_path, capsys):
    root, cfg = project
    out = tmp_path / "iso"
    shutil.copytree(root / "out", out)
    shutil.rmtree(out / "runs")
    assert run(cfg, "prepare", "--out", str(out)) == 0
    assert "cache hit" in capsys.readouterr().out
    # downstream stages refuse to run without their inputs
    assert run(cfg, "evaluate", "--out", str(out), "--method", "erm") == 3
    shutil.rmtree(out / "groups")
    assert run(cfg, "train", "--out", str(out), "--seed", "1") == 3


def test_test_split_untouched_before_evaluate(tmp_path, monkeypatch):
    cfg = make_project(tmp_path)

    def forbidden(*a, **k):
        raise AssertionError("test split read before evaluation")

    monkeypatch.setattr(data, "load_test_subset", forbidden)
    assert run(cfg, "prepare") == 0
    assert run(cfg, "group") == 0
    assert run(cfg, "train", "--seed", "1", "--max-epochs", "2") == 0
    monkeypatch.undo()
    assert run(cfg, "evaluate", "--seed", "1") == 0


def test_identity_grouping_when_k_equals_c(tmp_path):
    cfg = make_project(tmp_path)
    assert run(cfg, "prepare") == 0
    assert run(cfg, "group", "--num-groups", "4", "--max-epochs", "15") == 0
    payload = json.loads((tmp_path / "out" / "groups" / "groups.json").read_text())
    assert sorted(payload["group_of_class"]) == [0, 1, 2, 3]


def test_config_errors_exit_2(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[experiment]\nbogus = 1\n")
    assert cli.main(["prepare", "--config", str(bad)]) == 2
    assert cli.main(["prepare", "--config", str(tmp_path / "missing.toml")]) == 2
    cfg = make_project(tmp_path / "p")
    assert run(cfg, "prepare") == 0
    assert run(cfg, "group", "--num-groups", "9") == 2


def test_data_errors_exit_3(tmp_path):
    cfg = make_project(tmp_path)
    assert run(cfg, "group") == 3  # nothing prepared yet
    (tmp_path / "data" / "flows.csv").write_text("a,b,proto,label\n1,2,tcp,x\n1,2\n")
    assert run(cfg, "prepare") == 3
    shutil.rmtree(tmp_path / "data")
    assert run(cfg, "prepare") == 3


def test_class_map_mismatch_exit_3(project, tmp_path):
    root, cfg = project
    out = tmp_path / "mm"
    shutil.copytree(root / "out" / "prepare", out / "prepare")
    shutil.copytree(root / "out" / "groups", out / "groups")
    groups = json.loads((out / "groups" / "groups.json").read_text())
    groups["class_names"] = list(reversed(groups["class_names"]))
    (out / "groups" / "groups.json").write_text(json.dumps(groups))
    assert run(cfg, "train", "--out", str(out), "--seed", "1") == 3
    man = json.loads((out / "prepare" / "manifest.json").read_text())
    man["class_map_hash"] = "0" * 16
    (out / "prepare" / "manifest.json").write_text(json.dumps(man))
    ckpt = root / "out" / "runs" / "erm" / "seed1" / "checkpoint.npz"
    assert run(cfg, "evaluate", "--out", str(out), "--checkpoint", str(ckpt)) == 3


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numeric_failure_exit_4(tmp_path):
    cfg = make_project(tmp_path, extra="")
    text = cfg.read_text().replace("learning_rate = 0.1", "learning_rate = 1e6")
    cfg.write_text(text)
    assert run(cfg, "prepare") == 0
    assert run(cfg, "train", "--method", "erm", "--seed", "1") == 4


def test_synth_bench_smoke(tmp_path):
    assert cli.main(["synth-bench", "--out", str(tmp_path), "--seed", "1", "--max-epochs", "3"]) == 0
    summary = json.loads((tmp_path / "synth-bench" / "summary.json").read_text())
    assert set(summary["summary"]) == {"erm", "gdr-cil"}
    assert (tmp_path / "synth-bench" / "gdr-cil" / "seed1" / "metrics.csv").exists()


def test_bench_verdict():
    s = {"erm": {"minority_recall": 0.2, "macro_g_mean": 0.5}, "gdr-cil": {"minority_recall": 0.35, "macro_g_mean": 0.6}}
    v = cli.bench_verdict(s)
    assert v["recall_ok"] and v["g_mean_ok"] and v["minority_recall_gain"] == pytest.approx(0.15)
    s["gdr-cil"]["minority_recall"] = 0.29
    assert not cli.bench_verdict(s)["recall_ok"]


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0
