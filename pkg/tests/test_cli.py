"""End-to-end checks of the command line runner and its manifests."""

import json

import pytest

from lorenzlab.cli import main
from lorenzlab.config import (
    load_config,
    make_config,
    read_config_file,
)
from lorenzlab.errors import ConfigError
from lorenzlab.manifest import file_sha256


def _fast_attractor_args(out_dir):
    # Small enough to finish in under a second, large enough that the
    # sweep check is not vacuous.
    return [
        "attractor",
        "-s", "n_samples=400",
        "-s", "t_final=5",
        "-s", f"out_dir={out_dir}",
    ]


def _run_manifest(capsys):
    """Return (exit_code, manifest dict, stdout) for the captured run."""
    captured = capsys.readouterr()
    line = [l for l in captured.out.splitlines() if l.startswith("manifest:")]
    assert len(line) == 1
    path = line[0].split("manifest:", 1)[1].strip()
    with open(path) as fh:
        return json.load(fh), captured.out


class TestConfigParsing:
    def test_defaults_are_valid(self):
        cfg = make_config({})
        assert cfg.experiment == "stat-stability"
        assert cfg.eps_ladder[0] > cfg.eps_ladder[-1]

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            make_config({"epz": "0.1"})

    def test_bad_numeric_value_rejected(self):
        with pytest.raises(ConfigError, match="bad value"):
            make_config({"eps": "plenty"})

    def test_ladder_must_decrease(self):
        with pytest.raises(ConfigError, match="strictly decreasing"):
            make_config({"eps_ladder": "0.1,0.1,0.05"})

    def test_negative_eps_rejected(self):
        with pytest.raises(ConfigError, match="eps must be >= 0"):
            make_config({"eps": "-0.01"})

    def test_config_file_round_trip(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(
            "# comment only\n"
            "\n"
            "experiment = pdmp\n"
            "eps = 0.02   # trailing comment\n"
        )
        pairs = read_config_file(path)
        assert pairs == {"experiment": "pdmp", "eps": "0.02"}

    def test_config_file_bad_line_reports_position(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("eps = 0.02\nnot a pair\n")
        with pytest.raises(ConfigError, match=r"run\.cfg:2"):
            read_config_file(path)

    def test_missing_config_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            read_config_file(tmp_path / "absent.cfg")

    def test_overrides_beat_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("eps = 0.02\nseed = 7\n")
        cfg = load_config(path, {"eps": "0.1"})
        assert cfg.eps == 0.1
        assert cfg.seed == 7


class TestExitCodes:
    def test_validation_failure_is_2(self, capsys):
        assert main(["attractor", "-s", "eps=-1"]) == 2
        assert "eps must be >= 0" in capsys.readouterr().err

    def test_unknown_key_is_2(self, capsys):
        assert main(["attractor", "-s", "bogus=3"]) == 2
        assert "unknown config key" in capsys.readouterr().err

    def test_malformed_override_is_2(self, capsys):
        assert main(["attractor", "-s", "eps_box"]) == 2
        assert "not key=value" in capsys.readouterr().err

    def test_experiment_specific_validation_is_2(self, capsys, tmp_path):
        # The stationary estimators need a margin over the burn-in; this
        # is only checkable once the experiment is known.
        rc = main(["pdmp", "-s", "n_transitions=1100",
                   "-s", f"out_dir={tmp_path}"])
        assert rc == 2
        assert ">= 1000" in capsys.readouterr().err

    def test_runtime_failure_is_1_with_partial_manifest(self, capsys,
                                                        tmp_path):
        # A tiny membership box puts the start point outside the section
        # and the approach search exhausts its horizon.
        rc = main(["pdmp", "-s", "eps_box=5", "-s", f"out_dir={tmp_path}"])
        assert rc == 1
        captured = capsys.readouterr()
        assert "HorizonExceeded" in captured.err
        run_dirs = list(tmp_path.glob("pdmp-*"))
        assert len(run_dirs) == 1
        manifest = json.loads((run_dirs[0] / "manifest.json").read_text())
        assert manifest["status"] == "failed"
        assert "HorizonExceeded" in manifest["error"]
        assert manifest["all_passed"] is False


class TestPrintConfig:
    def test_prints_and_exits_zero(self, capsys):
        assert main(["pdmp", "-s", "eps=0.02", "--print-config"]) == 0
        out = capsys.readouterr().out
        assert "experiment = pdmp" in out
        assert "eps = 0.02" in out

    def test_output_is_reloadable(self, capsys, tmp_path):
        assert main(["cusp-map", "-s", "seed=3", "--print-config"]) == 0
        text = capsys.readouterr().out
        path = tmp_path / "echo.cfg"
        path.write_text(text)
        cfg = load_config(path)
        assert cfg.experiment == "cusp-map"
        assert cfg.seed == 3
        assert cfg.eps_ladder == make_config({}).eps_ladder


class TestAttractorRun:
    def test_fast_run_passes(self, capsys, tmp_path):
        rc = main(_fast_attractor_args(tmp_path))
        assert rc == 0
        manifest, out = _run_manifest(capsys)
        assert manifest["status"] == "ok"
        assert manifest["all_passed"] is True
        assert "[PASS]" in out
        assert "[FAIL]" not in out
        names = [c["name"] for c in manifest["checks"]]
        assert "lyapunov-bound-violations" in names

    def test_manifest_hashes_match_files(self, capsys, tmp_path):
        assert main(_fast_attractor_args(tmp_path)) == 0
        manifest, _ = _run_manifest(capsys)
        run_dir = next(tmp_path.glob("attractor-*"))
        assert manifest["files"], "run should produce artifacts"
        for rel, digest in manifest["files"].items():
            assert file_sha256(run_dir / rel) == digest

    def test_artifacts_are_deterministic(self, capsys, tmp_path):
        assert main(_fast_attractor_args(tmp_path / "a")) == 0
        first, _ = _run_manifest(capsys)
        assert main(_fast_attractor_args(tmp_path / "b")) == 0
        second, _ = _run_manifest(capsys)
        # Manifests differ in timestamps; the artifact hashes must not.
        assert first["files"] == second["files"]
        assert first["checks"] == second["checks"]

        def strip_timing(node):
            if isinstance(node, dict):
                return {k: strip_timing(v) for k, v in node.items()
                        if k != "elapsed_s"}
            return node

        assert strip_timing(first["results"]) == \
            strip_timing(second["results"])
