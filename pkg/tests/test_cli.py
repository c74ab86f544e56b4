"""End-to-end tests of the command-line interface."""

import json

import pytest

from market_abm.cli import main
from market_abm.config import SimConfig, dump_config, load_config, parse_overrides


@pytest.fixture()
def config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("steps = 1000\nseed = 7\n# comment line\nn_agents = 200\n")
    return path


class TestConfigFormat:
    def test_roundtrip(self, tmp_path):
        cfg = SimConfig(steps=123, seed=9, init_cash=450.0)
        path = tmp_path / "c.cfg"
        path.write_text(dump_config(cfg))
        assert load_config(path) == cfg

    def test_unknown_key_named_in_error(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("stepz = 100\n")
        with pytest.raises(ValueError, match="stepz"):
            load_config(path)

    def test_scientific_notation_steps(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("steps = 1e5\n")
        assert load_config(path).steps == 100_000

    def test_override_parsing(self):
        overrides = parse_overrides(["steps=500", "switching_enabled=false"])
        assert overrides == {"steps": 500, "switching_enabled": False}
        with pytest.raises(ValueError, match="frobnicate"):
            parse_overrides(["frobnicate=1"])

    def test_invalid_config_rejected(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("dt = 0.02\n")  # breaks steps_per_period * dt = 1
        with pytest.raises(ValueError):
            load_config(path)


class TestRunCommand:
    def test_missing_config_names_path(self, tmp_path, capsys):
        status = main(["run", "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path / "o")])
        assert status != 0
        assert "nope.cfg" in capsys.readouterr().err

    def test_row_count_contract(self, tmp_path, config_file):
        out = tmp_path / "out"
        assert main(["run", "--config", str(config_file), "--out", str(out)]) == 0
        lines = (out / "steps.csv").read_text().splitlines()
        assert len(lines) == 1001  # header + one row per step

    def test_seed_determinism_byte_identical(self, tmp_path, config_file):
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        for out in (out1, out2):
            assert main(["run", "--config", str(config_file), "--seed", "7",
                         "--out", str(out)]) == 0
        assert (out1 / "steps.csv").read_bytes() == (out2 / "steps.csv").read_bytes()
        assert (out1 / "trades.csv").read_bytes() == (out2 / "trades.csv").read_bytes()

    def test_experiment_manifest_written(self, tmp_path, config_file):
        out = tmp_path / "out"
        main(["run", "--config", str(config_file), "--out", str(out)])
        manifest = json.loads((out / "experiment.json").read_text())
        assert manifest["config_path"] == str(config_file)
        assert len(manifest["config_sha256"]) == 64
        assert manifest["runs"][0]["wall_clock_s"] >= 0

    def test_override_flag(self, tmp_path, config_file):
        out = tmp_path / "out"
        main(["run", "--config", str(config_file), "-O", "steps=300", "--out", str(out)])
        assert len((out / "steps.csv").read_text().splitlines()) == 301

    def test_fundamental_trace(self, tmp_path, config_file):
        out = tmp_path / "out"
        main(["run", "--config", str(config_file), "--out", str(out), "--trace-fundamental"])
        lines = (out / "fundamental.csv").read_text().splitlines()
        assert lines[0] == "step,value"
        assert len(lines) == 1001

    def test_bad_override_key_diagnostic(self, tmp_path, config_file, capsys):
        status = main(["run", "--config", str(config_file), "-O", "bogus=1",
                       "--out", str(tmp_path / "o")])
        assert status != 0
        assert "bogus" in capsys.readouterr().err


class TestEnsembleCommand:
    def test_runs_and_manifest(self, tmp_path, config_file):
        out = tmp_path / "ens"
        assert main(["ensemble", "--config", str(config_file), "--seeds", "3",
                     "--out", str(out), "--workers", "1"]) == 0
        manifest = json.loads((out / "experiment.json").read_text())
        assert manifest["seeds"] == [7, 8, 9]
        for seed in (7, 8, 9):
            assert (out / "runs" / f"seed_{seed}" / "steps.csv").exists()

    def test_manifest_roundtrip_reproduces_outputs(self, tmp_path, config_file):
        import dataclasses

        from market_abm.engine import run_simulation
        from market_abm.runio import write_run

        out = tmp_path / "ens"
        main(["ensemble", "--config", str(config_file), "--seeds", "2",
              "--out", str(out), "--workers", "1"])
        manifest = json.loads((out / "experiment.json").read_text())
        cfg = SimConfig(**manifest["config"])
        for entry in manifest["runs"]:
            rerun = run_simulation(dataclasses.replace(cfg, seed=entry["seed"]))
            redo = tmp_path / "redo" / f"seed_{entry['seed']}"
            write_run(redo, rerun)
            original = (out / "runs" / f"seed_{entry['seed']}" / "steps.csv").read_bytes()
            assert (redo / "steps.csv").read_bytes() == original


class TestAnalyzeCommand:
    def test_full_pipeline(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("steps = 30000\nseed = 0\n")
        runs_dir = tmp_path / "ens"
        assert main(["ensemble", "--config", str(cfg), "--seeds", "2",
                     "--out", str(runs_dir), "--workers", "1"]) == 0
        out = tmp_path / "analysis"
        assert main(["analyze", "--in", str(runs_dir), "--out", str(out)]) == 0
        report = json.loads((out / "analysis.json").read_text())
        assert set(report) >= {"hurst", "tails", "regimes", "sigma_peaks",
                               "aggregational_gaussianity", "meta"}
        assert report["meta"]["n_runs"] == 2
        assert (out / "ccdf_spread.csv").exists()
        assert (out / "fn_return.csv").exists()

    def test_no_runs_found(self, tmp_path, capsys):
        assert main(["analyze", "--in", str(tmp_path), "--out", str(tmp_path / "a")]) == 1
        assert "steps.csv" in capsys.readouterr().err


class TestReproduceCommand:
    def test_desk_scale_pipeline_completes(self, tmp_path):
        out = tmp_path / "exp"
        # tiny scale: 1 seed x 3000 steps, enough for every report section
        assert main(["reproduce-paper", "--scale", "0.003", "--out", str(out),
                     "--workers", "1", "--burn-periods", "5"]) == 0
        report = json.loads((out / "analysis" / "analysis.json").read_text())
        assert "hurst" in report and "regimes" in report
        assert (out / "runs" / "seed_0" / "steps.csv").exists()

    def test_homogeneous_flag(self, tmp_path):
        out = tmp_path / "exp"
        assert main(["reproduce-paper", "--scale", "0.003", "--homogeneous",
                     "--out", str(out), "--workers", "1", "--burn-periods", "5"]) == 0
        manifest = json.loads((out / "experiment.json").read_text())
        assert manifest["config"]["switching_enabled"] is False
        assert manifest["config"]["init_frac_f"] == 1.0

    def test_bad_scale(self, tmp_path, capsys):
        assert main(["reproduce-paper", "--scale", "-1", "--out", str(tmp_path / "x")]) == 2


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
