"""Binary containers, JSON artifacts, manifests, and config parsing."""

import numpy as np
import pytest

from rcdiff import io
from rcdiff.config import RunConfig, SCHEMA, load_config, parse_config_text
from rcdiff.errors import ConfigError, ValidationError
from rcdiff.oracle import DiffusionSchedule
from rcdiff.regression import RidgeEstimate
from rcdiff.sampler import SampleBatch
from rcdiff.score_model import CoveringScore, MlpScore
from rcdiff.world import make_world


class TestMatrixContainer:
    def test_roundtrip(self, tmp_path):
        X = np.random.default_rng(0).standard_normal((13, 7))
        path = tmp_path / "m.bin"
        io.write_matrix(path, X)
        np.testing.assert_array_equal(io.read_matrix(path), X)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "m.bin"
        path.write_bytes(b"NOPE" + b"\0" * 40)
        with pytest.raises(ValidationError):
            io.read_matrix(path)

    def test_truncation_rejected(self, tmp_path):
        X = np.zeros((4, 4))
        path = tmp_path / "m.bin"
        io.write_matrix(path, X)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ValidationError):
            io.read_matrix(path)

    def test_csv_export_parses_back(self, tmp_path):
        X = np.random.default_rng(1).standard_normal((5, 3))
        y = np.random.default_rng(2).standard_normal(5)
        path = tmp_path / "d.csv"
        io.export_csv(path, X, y)
        rows = path.read_text().strip().splitlines()
        assert rows[0] == "x0,x1,x2,y"
        parsed = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
        np.testing.assert_array_equal(parsed[:, :3], X)
        np.testing.assert_array_equal(parsed[:, 3], y)


class TestTensorBlocks:
    def test_roundtrip_with_meta(self, tmp_path):
        rng = np.random.default_rng(0)
        meta = {"kind": "test", "dims": [3, 2]}
        blocks = {"W": rng.standard_normal((3, 2)), "b": rng.standard_normal(2)}
        path = tmp_path / "t.rctb"
        io.write_blocks(path, meta, blocks)
        meta2, blocks2 = io.read_blocks(path)
        assert meta2 == meta
        for k in blocks:
            np.testing.assert_array_equal(blocks2[k], blocks[k])

    def test_corruption_rejected(self, tmp_path):
        path = tmp_path / "t.rctb"
        io.write_blocks(path, {"kind": "test"}, {"W": np.ones((2, 2))})
        raw = bytearray(path.read_bytes())
        raw[6] ^= 0xFF  # scramble the metadata length
        path.write_bytes(bytes(raw))
        with pytest.raises(ValidationError):
            io.read_blocks(path)

    def test_world_and_ridge_roundtrip(self, tmp_path):
        w = make_world(D=6, d=2, seed=0)
        io.save_world(tmp_path / "w.rctb", w)
        w2 = io.load_world(tmp_path / "w.rctb")
        np.testing.assert_array_equal(w2.A, w.A)
        assert w2.offsupport_sign == w.offsupport_sign

        est = RidgeEstimate(theta_hat=w.theta_star, lam=0.5, n2=16,
                            sigma_hat_lambda=np.eye(6))
        io.save_ridge(tmp_path / "r.rctb", est)
        est2 = io.load_ridge(tmp_path / "r.rctb")
        np.testing.assert_array_equal(est2.theta_hat, est.theta_hat)
        assert (est2.lam, est2.n2) == (0.5, 16)

    @pytest.mark.parametrize("variant", ["covering", "mlp"])
    def test_model_roundtrip(self, tmp_path, variant):
        model = (CoveringScore(6, 2, nu=0.5, seed=1) if variant == "covering"
                 else MlpScore(6, 2, hidden=(16, 16), seed=1))
        io.save_model(tmp_path / "m.rctb", model,
                      DiffusionSchedule(5.0, 0.05, 0.05))
        clone = io.load_model(tmp_path / "m.rctb")
        X = np.random.default_rng(2).standard_normal((4, 6))
        np.testing.assert_array_equal(model(X, 1.0, 0.7), clone(X, 1.0, 0.7))

    def test_wrong_kind_rejected(self, tmp_path):
        w = make_world(D=6, d=2, seed=0)
        io.save_world(tmp_path / "w.rctb", w)
        with pytest.raises(ValidationError):
            io.load_model(tmp_path / "w.rctb")

    def test_samples_roundtrip(self, tmp_path):
        sched = DiffusionSchedule(5.0, 0.05, 0.05)
        batch = SampleBatch(
            X=np.random.default_rng(0).standard_normal((8, 3)),
            a=2.0, schedule=sched, score_id="zero", seed=7,
        )
        io.save_samples(tmp_path / "s", batch)
        loaded = io.load_samples(tmp_path / "s")
        np.testing.assert_array_equal(loaded.X, batch.X)
        assert loaded.schedule == sched
        assert loaded.a == 2.0


class TestManifest:
    def test_verify_detects_tamper(self, tmp_path):
        f = tmp_path / "a.bin"
        io.write_matrix(f, np.zeros((2, 2)))
        mb = io.ManifestBuilder("digest", {"k": 1})
        mb.add_file(tmp_path, f)
        mb.write(tmp_path / "manifest.json", complete=True)
        assert io.verify_manifest(tmp_path) == []
        f.write_bytes(b"tampered-with-bytes-----")
        issues = io.verify_manifest(tmp_path)
        assert issues and "hash mismatch" in issues[0]

    def test_json_write_is_stable(self, tmp_path):
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        io.write_json(p1, {"b": 1.5, "a": [1, 2]})
        io.write_json(p2, {"a": [1, 2], "b": 1.5})
        assert p1.read_bytes() == p2.read_bytes()


class TestConfig:
    def test_defaults_reproduce_study_scale(self):
        cfg = RunConfig()
        assert cfg["world.D"] == 64
        assert cfg["world.d"] == 16
        assert cfg["world.offsupport_coeff"] == 5.0
        assert cfg["data.n1"] == 65536
        assert cfg["data.n2"] == 8192
        assert cfg["reward.lambda"] == 1.0
        assert cfg.nu == 1.0 / 8.0
        assert cfg["sweep.a"] == [0.0, 1.0, 2.0, 4.0, 8.0, 16.0]
        assert len(cfg["sweep.seeds"]) == 5
        assert cfg["sample.n"] == 2048
        assert cfg["score.variant"] == "mlp"

    def test_parse_and_override(self):
        cfg = RunConfig(values=parse_config_text(
            "# comment\nworld.D = 8\nworld.d = 2\nsweep.a = 0, 1\n"
        ))
        assert cfg["world.D"] == 8
        assert cfg["sweep.a"] == [0.0, 1.0]
        assert cfg["data.n2"] == 8192  # default preserved

    def test_unknown_key_is_hard_error(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config_text("world.Q = 3\n")

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text("world.D = 8\nworld.D = 9\n")

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError, match="bad value"):
            parse_config_text("world.D = eight\n")

    def test_semantic_validation(self):
        with pytest.raises(ConfigError):
            RunConfig(values={"world.d": 100})  # d > D
        with pytest.raises(ConfigError):
            RunConfig(values={"data.noise_sigma": 1.0})
        with pytest.raises(ConfigError):
            RunConfig(values={"schedule.eta": 0.5})  # eta > t0
        with pytest.raises(ConfigError):
            RunConfig(values={"score.variant": "unet"})

    def test_sigma_diag(self):
        cfg = RunConfig(values={"world.d": 2, "world.D": 4,
                                "world.sigma_diag": [1.0, 0.5]})
        np.testing.assert_array_equal(cfg.sigma, np.diag([1.0, 0.5]))
        assert RunConfig().sigma is None

    def test_digest_depends_on_values_only(self):
        c1 = RunConfig(values={"world.D": 8, "world.d": 2})
        c2 = RunConfig(values={"world.d": 2, "world.D": 8})
        c3 = RunConfig(values={"world.D": 16, "world.d": 2})
        assert c1.digest() == c2.digest()
        assert c1.digest() != c3.digest()

    def test_load_config_from_file(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("world.D = 8\nworld.d = 2\n")
        assert load_config(p)["world.D"] == 8
        assert load_config(None)["world.D"] == 64

    def test_every_schema_key_has_default_and_description(self):
        for key, (parser, default, desc) in SCHEMA.items():
            assert callable(parser)
            assert desc
            RunConfig(values={key: default})  # defaults must self-validate


class TestCsvSchema:
    def test_golden_column_order(self):
        from rcdiff.pipeline import CSV_COLUMNS

        assert CSV_COLUMNS == [
            "a", "seed", "subopt", "avg_reward", "e1", "e2", "e3",
            "angle", "offsupport", "shift",
        ]

    def test_reader_rejects_other_schemas(self, tmp_path):
        from rcdiff.pipeline import read_metrics_csv
        from rcdiff.errors import RcdiffError

        p = tmp_path / "metrics.csv"
        p.write_text("a,seed,reward\n1,2,3\n")
        with pytest.raises(RcdiffError):
            read_metrics_csv(p)
