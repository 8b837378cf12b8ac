import csv
import json
import os
import subprocess
from pathlib import Path

import pytest

CLI = os.environ.get("CACHEDIFF_CLI", "cachediff")
FAST = ["--seed", "0", "--steps", "10", "--repetitions", "1"]


def cli(*args, env_extra=None, cwd=None):
    env = {k: v for k, v in os.environ.items() if k != "CACHEDIFF_OUTPUT_DIR"}
    env.update(env_extra or {})
    return subprocess.run([CLI, *map(str, args)], capture_output=True, text=True, env=env, cwd=cwd, timeout=300)


def read_csv(path):
    lines = Path(path).read_text().splitlines()
    assert lines[0].startswith("# schema_version: ")
    return list(csv.DictReader(lines[1:]))


def test_run_writes_versioned_outputs(tmp_path):
    r = cli("run", *FAST, "--strategy", "fastercache", "--out", tmp_path)
    assert r.returncode == 0, r.stderr
    report = json.loads((tmp_path / "run_fastercache.json").read_text())
    assert report["schema_version"] == 1
    rows = read_csv(tmp_path / "run_fastercache_summary.csv")
    assert [row["strategy"] for row in rows] == ["no_cache", "fastercache"]
    assert int(rows[1]["total_macs"]) == int(rows[1]["predicted_macs"])
    assert float(rows[1]["psnr"]) > 0


def test_output_dir_from_environment(tmp_path):
    r = cli("run", *FAST, "--strategy", "dynamic_fr", env_extra={"CACHEDIFF_OUTPUT_DIR": str(tmp_path)})
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "run_dynamic_fr.json").exists()


def test_flag_beats_environment(tmp_path):
    flag_dir = tmp_path / "flag"
    env_dir = tmp_path / "env"
    r = cli("run", *FAST, "--strategy", "no_cache", "--out", flag_dir, env_extra={"CACHEDIFF_OUTPUT_DIR": str(env_dir)})
    assert r.returncode == 0, r.stderr
    assert (flag_dir / "run_no_cache.json").exists()
    assert not env_dir.exists()


def test_config_file_and_override(tmp_path):
    config = {"sampler": {"seed": 3, "steps": 12}, "strategy": "cfg_cache_only", "repetitions": 1}
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps(config))
    r = cli("run", "--config", path, "--strategy", "stale_uncond", "--out", tmp_path / "o")
    assert r.returncode == 0, r.stderr
    report = json.loads((tmp_path / "o" / "run_stale_uncond.json").read_text())
    assert report["config"]["sampler"]["seed"] == 3
    assert report["config"]["sampler"]["steps"] == 12


def test_ablate_and_sweep(tmp_path):
    r = cli("ablate", *FAST, "--out", tmp_path)
    assert r.returncode == 0, r.stderr
    rows = read_csv(tmp_path / "ablate_summary.csv")
    assert len(rows) == 7
    r = cli("sweep", *FAST, "--strategy", "fastercache", "--param", "cfg_interval", "--values", "2,4", "--out", tmp_path)
    assert r.returncode == 0, r.stderr
    rows = read_csv(tmp_path / "sweep_cfg_interval_summary.csv")
    assert [float(row["sweep_value"]) for row in rows if row["strategy"] == "fastercache"] == [2.0, 4.0]


def test_plot_renders_svgs(tmp_path):
    assert cli("run", *FAST, "--strategy", "fastercache", "--out", tmp_path).returncode == 0
    r = cli("plot", tmp_path / "run_fastercache.json", "--out", tmp_path / "plots")
    assert r.returncode == 0, r.stderr
    for kind in ("feature_mse", "bias_trend", "cost"):
        svg = (tmp_path / "plots" / f"run_fastercache_{kind}.svg").read_text()
        assert svg.startswith("<svg") and 'data-schema-version="1"' in svg


def test_plan_dump_matches_default_schedule():
    r = cli("plan-dump", "--steps", "30", "--strategy", "fastercache")
    assert r.returncode == 0, r.stderr
    rows = read_csv_text(r.stdout)
    assert len(rows) == 30
    assert sum(row["attn_reuse"] == "1" for row in rows) == 11
    assert sum(row["uncond_full"] == "0" for row in rows) == 16
    assert [int(row["step"]) for row in rows if row["record_cfg_bias"] == "1"] == [10, 15, 20, 25]


def test_plan_dump_to_file(tmp_path):
    out = tmp_path / "plan.csv"
    assert cli("plan-dump", "--steps", "8", "--strategy", "dynamic_fr", "--out", out).returncode == 0
    assert len(read_csv(out)) == 8


def read_csv_text(text):
    lines = text.splitlines()
    assert lines[0].startswith("# schema_version: ")
    return list(csv.DictReader(lines[1:]))


@pytest.mark.parametrize(
    "args",
    [
        ["run", "--seed", "0", "--steps", "10"],
        ["run", "--seed", "0", "--steps", "10", "--strategy", "bogus", "--out", "x"],
        ["run", "--seed", "0", "--steps", "1", "--strategy", "no_cache", "--out", "x"],
        ["run", "--seed", "0", "--steps", "10", "--strategy", "no_cache", "--out", "x", "--rho", "1.5"],
        ["run", "--config", "does_not_exist.json"],
        ["sweep", "--seed", "0", "--steps", "10", "--strategy", "fastercache", "--out", "x", "--values", "1"],
        ["sweep", "--seed", "0", "--steps", "10", "--strategy", "fastercache", "--out", "x", "--param", "nope", "--values", "1"],
        ["plan-dump", "--steps", "30"],
        ["plot", "missing_report.json"],
        ["frobnicate"],
        [],
    ],
)
def test_config_errors_exit_2(tmp_path, args):
    r = cli(*args, cwd=tmp_path)
    assert r.returncode == 2, (r.stdout, r.stderr)


def test_bad_config_document_exits_2(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"sampler": {"seed": 0, "stepz": 30}}))
    assert cli("run", "--config", path, "--out", tmp_path).returncode == 2
    path.write_text("{ not json")
    assert cli("run", "--config", path, "--out", tmp_path).returncode == 2


def test_runtime_failures_exit_3(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    r = cli("run", *FAST, "--strategy", "no_cache", "--out", blocker / "sub")
    assert r.returncode == 3
    assert str(blocker) in r.stderr
    r = cli("run", *FAST, "--model", "tiny_dit", "--weights", tmp_path / "absent", "--strategy", "no_cache", "--out", tmp_path)
    assert r.returncode == 3
