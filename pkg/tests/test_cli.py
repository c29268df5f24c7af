import json
import os

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from pcabench import fetch as fetch_mod
from pcabench import harness
from pcabench.cli import main
from pcabench.errors import TrainingError
from pcabench.synthetic import latent_rank_dataset, write_csv


def combined(result):
    # click >= 8.2 keeps stderr separate; older runners mixed it into output
    try:
        return result.output + result.stderr
    except (ValueError, AttributeError):
        return result.output


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def synth_csv(tmp_path_factory):
    table = latent_rank_dataset(t=400, n_channels=6, n_latents=2, seed=3, noise=0.05)
    path = tmp_path_factory.mktemp("data") / "synth6.csv"
    write_csv(table, str(path))
    return str(path)


@pytest.fixture
def sweep_config(synth_csv, tmp_path):
    cfg = {
        "dataset": synth_csv,
        "target": "y",
        "components": [1, 2, 4],
        "out_dir": str(tmp_path / "run"),
        "backbone": "last_value",
        "transformer": {"lookback": 16, "label_len": 8, "horizon": 4},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


class TestGroup:
    def test_help_lists_all_commands(self, runner):
        result = runner.invoke(main, ["--help"])
        assert result.exit_code == 0
        for cmd in ("fetch", "correlate", "sweep", "report", "fixture-check"):
            assert cmd in result.output

    def test_version(self, runner):
        result = runner.invoke(main, ["--version"])
        assert result.exit_code == 0
        assert "pcabench" in result.output


class TestCorrelateCommand:
    def test_coupled_pair(self, runner, tmp_path):
        lines = ["date,x,y"] + [f"2016-01-{i:02d},{float(i)!r},{float(2 * i)!r}"
                                for i in range(1, 21)]
        src = tmp_path / "pair.csv"
        src.write_text("\n".join(lines) + "\n")
        result = runner.invoke(main, ["correlate", str(src), "--target", "y",
                                      "--out", str(tmp_path)])
        assert result.exit_code == 0
        out_path = result.output.strip()
        assert out_path.endswith("pcc_pair.csv")
        rows = [l.split(",") for l in open(out_path).read().splitlines()]
        assert rows[0][1:] == [r[0] for r in rows[1:]]
        assert float(rows[1][2]) == 1.0

    def test_missing_target_is_config_error(self, runner, synth_csv, tmp_path):
        result = runner.invoke(main, ["correlate", synth_csv, "--target", "nope",
                                      "--out", str(tmp_path)])
        assert result.exit_code == 2

    def test_missing_file_is_config_error(self, runner, tmp_path):
        result = runner.invoke(main, ["correlate", str(tmp_path / "none.csv")])
        assert result.exit_code == 2


class TestSweepCommand:
    def test_config_file_run(self, runner, sweep_config, tmp_path):
        result = runner.invoke(main, ["sweep", "--config", sweep_config])
        assert result.exit_code == 0, combined(result)
        out_dir = str(tmp_path / "run")
        for name in ("metrics.csv", "metrics_stable.csv", "reductions.csv",
                     "info_kept.csv", "manifest.json"):
            assert os.path.exists(os.path.join(out_dir, name))
        assert "control: mse=" in result.output
        assert "outputs in" in result.output

    def test_flag_overrides_shrink_the_sweep(self, runner, sweep_config, tmp_path):
        out = str(tmp_path / "override_run")
        result = runner.invoke(main, ["sweep", "--config", sweep_config,
                                      "--components", "2", "--out", out,
                                      "--model-label", "Baseline"])
        assert result.exit_code == 0, combined(result)
        rows = open(os.path.join(out, "metrics.csv")).read().splitlines()
        assert len(rows) == 3                     # header + p2 + control
        assert rows[1].startswith("synth6,Baseline,2,")

    def test_component_beyond_width_is_config_error(self, runner, sweep_config):
        result = runner.invoke(main, ["sweep", "--config", sweep_config,
                                      "--components", "9"])
        assert result.exit_code == 2
        assert "P=9" in combined(result)

    def test_malformed_components_flag(self, runner, sweep_config):
        result = runner.invoke(main, ["sweep", "--config", sweep_config,
                                      "--components", "2,x"])
        assert result.exit_code == 2

    def test_unknown_config_key_is_config_error(self, runner, synth_csv, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"dataset": synth_csv, "target": "y",
                                    "components": [1], "out_dir": str(tmp_path),
                                    "lookback": 16}))
        result = runner.invoke(main, ["sweep", "--config", str(path)])
        assert result.exit_code == 2
        assert "lookback" in combined(result)

    def test_missing_config_file(self, runner, tmp_path):
        result = runner.invoke(main, ["sweep", "--config",
                                      str(tmp_path / "none.json")])
        assert result.exit_code == 2

    def test_cell_failure_exits_one(self, runner, sweep_config, monkeypatch):
        real = harness.train_backbone

        def flaky(name, train_w, val_w, test_w, tcfg):
            if tcfg.input_channels == 2:
                raise TrainingError("injected failure")
            return real(name, train_w, val_w, test_w, tcfg)

        monkeypatch.setattr(harness, "train_backbone", flaky)
        result = runner.invoke(main, ["sweep", "--config", sweep_config])
        assert result.exit_code == 1
        assert "FAILED" in combined(result)
        assert "injected failure" in combined(result)

    def test_paper_fixture_mode(self, runner, tmp_path):
        out = str(tmp_path / "fix")
        result = runner.invoke(main, ["sweep", "--paper-fixture", "--out", out])
        assert result.exit_code == 0
        rows = open(os.path.join(out, "metrics.csv")).read().splitlines()
        assert len(rows) == 145
        manifest = json.load(open(os.path.join(out, "manifest.json")))
        assert manifest["mode"] == "paper-fixture"

    def test_paper_fixture_requires_out(self, runner):
        result = runner.invoke(main, ["sweep", "--paper-fixture"])
        assert result.exit_code == 2


class TestReportCommand:
    def test_report_over_fixture_run(self, runner, tmp_path):
        out = str(tmp_path / "fix")
        assert runner.invoke(main, ["sweep", "--paper-fixture",
                                    "--out", out]).exit_code == 0
        result = runner.invoke(main, ["report", out])
        assert result.exit_code == 0
        assert result.output.startswith("# Benchmark report")
        assert os.path.exists(os.path.join(out, "report.md"))
        assert os.path.exists(os.path.join(out, "report_reductions.csv"))

    def test_gap_exits_one(self, runner, tmp_path):
        (tmp_path / "metrics.csv").write_text(
            "dataset,model,components,mse,mae,runtime_s,pca_fit_s\n"
            "D,m,2,0.5,0.4,,\n"
            "D,m,w/o PCA,1.0,0.8,10.0,\n")
        result = runner.invoke(main, ["report", str(tmp_path)])
        assert result.exit_code == 1
        assert "MISSING" in result.output

    def test_directory_without_metrics_is_config_error(self, runner, tmp_path):
        result = runner.invoke(main, ["report", str(tmp_path)])
        assert result.exit_code == 2

    def test_missing_directory_is_config_error(self, runner, tmp_path):
        result = runner.invoke(main, ["report", str(tmp_path / "none")])
        assert result.exit_code == 2


class TestFixtureCheckCommand:
    def test_published_numbers_reproduce(self, runner):
        result = runner.invoke(main, ["fixture-check"])
        assert result.exit_code == 0
        ok_lines = [l for l in result.output.splitlines() if l.startswith("OK ")]
        assert len(ok_lines) == 30
        assert "within 0.02 pp" in result.output

    def test_tight_tolerance_fails(self, runner):
        result = runner.invoke(main, ["fixture-check", "--tolerance", "1e-6"])
        assert result.exit_code == 1
        assert "MISMATCH" in result.output


MINI = fetch_mod.DatasetSpec(
    name="Mini", filename="mini.csv", n_rows=10, n_data_cols=2,
    target="OT", url=None, note="test-only")


class TestFetchCommand:
    def test_unknown_dataset_is_config_error(self, runner):
        result = runner.invoke(main, ["fetch", "NoSuch"])
        assert result.exit_code == 2
        assert "known datasets" in combined(result)

    def test_offline_install(self, runner, tmp_path, monkeypatch):
        monkeypatch.setitem(fetch_mod.DATASETS, "Mini", MINI)
        src = tmp_path / "local.csv"
        rows = ["date,a,OT"] + [f"2016-01-01 {i:02d}:00:00,{i}.0,{i * 2}.0"
                                for i in range(10)]
        src.write_text("\n".join(rows) + "\n")
        dest = tmp_path / "data"
        result = runner.invoke(main, ["fetch", "Mini", "--dest", str(dest),
                                      "--offline-from", str(src)])
        assert result.exit_code == 0, combined(result)
        assert os.path.exists(dest / "mini.csv")
        assert "sha256=" in result.output
        ledger = json.load(open(dest / "checksums.json"))
        assert "Mini" in ledger

    def test_no_url_dataset_explains_manual_placement(self, runner, tmp_path):
        result = runner.invoke(main, ["fetch", "Electricity",
                                      "--dest", str(tmp_path)])
        assert result.exit_code == 1
        assert "--offline-from" in combined(result)

    def test_invalid_offline_file_fails(self, runner, tmp_path, monkeypatch):
        monkeypatch.setitem(fetch_mod.DATASETS, "Mini", MINI)
        src = tmp_path / "short.csv"
        src.write_text("date,a,OT\n2016-01-01,1.0,2.0\n")
        result = runner.invoke(main, ["fetch", "Mini", "--dest",
                                      str(tmp_path / "d"), "--offline-from",
                                      str(src)])
        assert result.exit_code == 1
