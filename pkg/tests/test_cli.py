"""Command-line harness: exit codes, artifacts, idempotence, figures."""

import json

import pytest

from rcdiff import io
from rcdiff.cli import EXIT_COMPUTE, EXIT_CONFIG, EXIT_OK, main

SMOKE = """
world.D = 8
world.d = 2
data.n1 = 4096
data.n2 = 512
schedule.T = 6.0
schedule.t0 = 0.05
schedule.eta = 0.05
score.epochs = 3
sweep.a = 0, 2
sweep.seeds = 0
sample.n = 256
metrics.n_ref = 2000
"""


@pytest.fixture()
def smoke_cfg(tmp_path):
    cfg = tmp_path / "smoke.cfg"
    cfg.write_text(SMOKE + f"out.dir = {tmp_path}/run\n")
    return cfg, tmp_path / "run"


class TestPipelineCommand:
    def test_full_run_and_idempotence(self, smoke_cfg, capsys):
        import time

        cfg, out = smoke_cfg
        start = time.perf_counter()
        assert main(["pipeline", "--config", str(cfg)]) == EXIT_OK
        assert time.perf_counter() - start < 120  # smoke scale stays quick
        manifest = io.read_json(out / "manifest.json")
        assert manifest["complete"] is True
        assert (out / "metrics.csv").exists()
        assert io.verify_manifest(out) == []

        # Second run is a no-op on an up-to-date manifest.
        before = (out / "metrics.csv").stat().st_mtime_ns
        assert main(["pipeline", "--config", str(cfg)]) == EXIT_OK
        assert "up to date" in capsys.readouterr().out
        assert (out / "metrics.csv").stat().st_mtime_ns == before

        # --force reruns and reproduces the cells bit-identically.
        assert main(["pipeline", "--config", str(cfg), "--force",
                     "--out", str(out.parent / "run2")]) == EXIT_OK
        for rel in ("seed_0/samples_a2.bin", "seed_0/metrics_a2.json"):
            assert (out / rel).read_bytes() == (out.parent / "run2" / rel).read_bytes()

    def test_dry_run_touches_only_manifest(self, smoke_cfg):
        cfg, out = smoke_cfg
        assert main(["pipeline", "--config", str(cfg), "--dry-run"]) == EXIT_OK
        assert sorted(p.name for p in out.iterdir()) == ["manifest.json"]
        manifest = io.read_json(out / "manifest.json")
        assert manifest["dry_run"] is True
        assert manifest["complete"] is False

    def test_metrics_csv_is_parseable(self, smoke_cfg):
        from rcdiff.pipeline import read_metrics_csv

        cfg, out = smoke_cfg
        assert main(["pipeline", "--config", str(cfg)]) == EXIT_OK
        rows = read_metrics_csv(out / "metrics.csv")
        assert len(rows) == 2
        assert {row["a"] for row in rows} == {0.0, 2.0}

    def test_config_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("world.unknown = 1\n")
        assert main(["pipeline", "--config", str(bad)]) == EXIT_CONFIG

    def test_failed_stage_leaves_incomplete_manifest(self, smoke_cfg, capsys):
        cfg, out = smoke_cfg
        # A directory squatting on an artifact path makes the write fail.
        (out / "seed_0" / "world.rctb").mkdir(parents=True)
        assert main(["pipeline", "--config", str(cfg)]) == EXIT_COMPUTE
        assert "stage" in capsys.readouterr().err
        manifest = io.read_json(out / "manifest.json")
        assert manifest["complete"] is False

    def test_env_var_out_root(self, smoke_cfg, tmp_path, monkeypatch):
        cfg, _ = smoke_cfg
        monkeypatch.setenv("RCDIFF_OUT", str(tmp_path / "rooted"))
        assert main(["pipeline", "--config", str(cfg), "--dry-run",
                     "--out", "rel"]) == EXIT_OK
        assert (tmp_path / "rooted" / "rel" / "manifest.json").exists()


class TestFiguresCommand:
    def test_requires_pipeline_artifacts(self, smoke_cfg, capsys):
        cfg, _ = smoke_cfg
        assert main(["figures", "--config", str(cfg)]) == EXIT_COMPUTE
        assert "pipeline" in capsys.readouterr().err

    def test_emits_curves_and_histograms(self, smoke_cfg):
        cfg, out = smoke_cfg
        assert main(["pipeline", "--config", str(cfg)]) == EXIT_OK
        assert main(["figures", "--config", str(cfg)]) == EXIT_OK
        figs = out / "figures"
        for name in ("curve_avg_reward", "curve_shift", "curve_offsupport"):
            assert (figs / f"{name}.csv").exists()
            svg = (figs / f"{name}.svg").read_text()
            assert svg.startswith("<svg") and "polyline" in svg
        assert (figs / "hist_a0.csv").exists()
        assert (figs / "hist_a2.csv").exists()

    def test_single_seed_gives_zero_error_bars(self, smoke_cfg):
        import csv

        cfg, out = smoke_cfg
        main(["pipeline", "--config", str(cfg)])
        main(["figures", "--config", str(cfg)])
        with open(out / "figures" / "curve_avg_reward.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert all(float(r["err"]) == 0.0 for r in rows)


class TestValidateCommand:
    def test_single_check_passes(self, capsys):
        assert main(["validate", "--check", "trace-identity"]) == EXIT_OK
        assert "PASS" in capsys.readouterr().out

    def test_unknown_check_is_config_error(self):
        assert main(["validate", "--check", "nonsense"]) == EXIT_CONFIG

    def test_single_check_is_fast(self):
        import time

        start = time.perf_counter()
        main(["validate", "--check", "trace-identity"])
        assert time.perf_counter() - start < 1.0


class TestStagedCommands:
    def test_staged_flow_matches_pipeline_layout(self, smoke_cfg):
        cfg, out = smoke_cfg
        assert main(["gen-data", "--config", str(cfg)]) == EXIT_OK
        assert main(["train-reward", "--config", str(cfg)]) == EXIT_OK
        assert main(["train-score", "--config", str(cfg)]) == EXIT_OK
        assert main(["sample", "--config", str(cfg), "--a", "2"]) == EXIT_OK
        sdir = out / "seed_0"
        for name in ("world.rctb", "labeled.bin", "ridge.rctb",
                     "score_model.rctb", "samples_a2.bin", "samples_a2.json"):
            assert (sdir / name).exists()
        side = json.loads((sdir / "samples_a2.json").read_text())
        assert side["a"] == 2.0
        assert side["n"] == 256

    def test_sample_with_oracle_score(self, smoke_cfg):
        cfg, out = smoke_cfg
        main(["gen-data", "--config", str(cfg)])
        main(["train-reward", "--config", str(cfg)])
        assert main(["sample", "--config", str(cfg), "--a", "0",
                     "--use-oracle"]) == EXIT_OK
        side = json.loads((out / "seed_0" / "samples_a0.json").read_text())
        assert side["score_id"].startswith("oracle:")

    def test_corrupted_model_file_is_compute_error(self, smoke_cfg, capsys):
        cfg, out = smoke_cfg
        main(["gen-data", "--config", str(cfg)])
        main(["train-reward", "--config", str(cfg)])
        main(["train-score", "--config", str(cfg)])
        model_path = out / "seed_0" / "score_model.rctb"
        raw = bytearray(model_path.read_bytes())
        raw[5] ^= 0xFF
        model_path.write_bytes(bytes(raw))
        assert main(["sample", "--config", str(cfg), "--a", "0"]) == EXIT_COMPUTE
        assert "error" in capsys.readouterr().err

    def test_missing_data_is_compute_error(self, smoke_cfg):
        cfg, _ = smoke_cfg
        assert main(["train-reward", "--config", str(cfg)]) == EXIT_COMPUTE
