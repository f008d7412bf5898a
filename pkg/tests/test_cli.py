"""
Command line runs, exit codes and manifests
"""

import json
import sys

sys.path.insert(0, "src")

import pytest
import yaml

from config import Config
from main import run
from manifest import file_sha256, hashes_match, load_manifest


def _manifest(out):
    return load_manifest(out / "manifest.json")


def test_filter_tables_writes_hashed_files(tmp_path):
    out = tmp_path / "filters"
    assert run(["filter-tables", "--delta", "1.0", "--n-max", "200", "--out", str(out)]) == 0
    manifest = _manifest(out)
    assert manifest["exit_code"] == 0
    assert set(manifest["files"]) == {"tables.json", "w_hat.csv"}
    for name, digest in manifest["files"].items():
        assert file_sha256(out / name) == digest
    report = json.loads((out / "tables.json").read_text())
    assert report["normalization_ok"] and report["band_ok"]


def test_repeated_runs_are_reproducible(tmp_path):
    argv = ["filter-tables", "--delta", "0.5", "--n-max", "200", "--out"]
    assert run(argv + [str(tmp_path / "a")]) == 0
    assert run(argv + [str(tmp_path / "b")]) == 0
    assert hashes_match(_manifest(tmp_path / "a"), _manifest(tmp_path / "b"))


def test_gap_scan_run(tmp_path):
    out = tmp_path / "scan"
    code = run(["gap-scan", "--model", "ising_longitudinal", "--N", "6", "--eps", "0.1", "--rmax", "2", "--out", str(out)])
    assert code == 0
    manifest = _manifest(out)
    assert "gaps.csv" in manifest["files"]
    assert len(manifest["summary"]["deltas"]) == 3
    assert manifest["config"]["params"] == {"eps": 0.1}
    lines = (out / "gaps.csv").read_text().strip().splitlines()
    assert len(lines) == 4


def test_config_file_with_flag_override(tmp_path):
    plan = tmp_path / "plan.yaml"
    plan.write_text(yaml.safe_dump({"model": "ising_longitudinal", "N": 5, "rmax": 3, "params": {"eps": 0.2}}))
    out = tmp_path / "override"
    assert run(["gap-scan", "--config", str(plan), "--rmax", "1", "--out", str(out)]) == 0
    config = _manifest(out)["config"]
    assert config["rmax"] == 1
    assert config["N"] == 5
    assert config["params"] == {"eps": 0.2}


def test_swt_run(tmp_path):
    out = tmp_path / "swt"
    argv = ["swt", "--model", "ising_mixed", "--N", "4", "--g", "0.1", "--eps", "0.2", "--delta", "1.0", "--k-max", "3"]
    assert run(argv + ["--out", str(out)]) == 0
    summary = _manifest(out)["summary"]
    assert summary["orders"] == 3
    assert summary["divergence_onset"] is None


def test_invalid_input_exits_2(tmp_path):
    out = tmp_path / "bad"
    assert run(["gap-scan", "--N", "4", "--out", str(out)]) == 2
    manifest = _manifest(out)
    assert manifest["exit_code"] == 2
    assert "--model" in manifest["error"]
    assert run(["no-such-command"]) == 2
    assert run(["gap-scan", "--model", "nope", "--N", "4", "--out", str(out)]) == 2
    assert run(["filter-tables", "--out", str(out)]) == 2


def test_numerical_guard_exits_3(tmp_path, monkeypatch):
    monkeypatch.setattr(Config, "DENSE_LIMIT", 4)
    out = tmp_path / "guard"
    argv = ["swt", "--model", "ising_mixed", "--N", "3", "--g", "0.1", "--eps", "0.2", "--delta", "1.0"]
    assert run(argv + ["--out", str(out)]) == 3
    assert _manifest(out)["exit_code"] == 3


def test_config_validation_reports_bad_settings(monkeypatch):
    monkeypatch.setattr(Config, "DENSE_LIMIT", 1)
    monkeypatch.setattr(Config, "LOG_LEVEL", "chatty")
    issues = Config.validate()
    assert any("DENSE_LIMIT" in issue for issue in issues)
    assert any("LOG_LEVEL" in issue for issue in issues)
    assert "Guards" in " ".join(Config.summary())


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
