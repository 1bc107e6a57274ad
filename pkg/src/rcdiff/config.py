"""Run configuration: plain-text dotted key-value files with a hard schema.

Format, one assignment per line::

    # comment
    world.D = 64
    sweep.a = 0, 1, 2, 4, 8, 16

Unknown keys are errors (typo protection), values are validated against the
schema below, and omitted keys take defaults that reproduce the desk-scale
simulation study: D=64, d=16, identity latent covariance, off-support
coefficient 5, 8192 labeled and 65536 unlabeled samples, ridge weight 1,
pseudo-label noise 1/sqrt(D), and a 5-seed sweep over a target grid
{0, 1, 2, 4, 8, 16}.  The diffusion schedule and the target grid are not
prescribed by the study and are documented artifact choices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .io import sha256_text
from .oracle import DiffusionSchedule
from .score_model import TrainConfig


def _parse_bool(s: str) -> bool:
    if s.lower() in ("true", "1", "yes"):
        return True
    if s.lower() in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_float_list(s: str) -> list:
    return [float(v) for v in s.replace(",", " ").split()]


def _parse_int_list(s: str) -> list:
    return [int(v) for v in s.replace(",", " ").split()]


# key -> (parser, default, description)
SCHEMA = {
    "world.D": (int, 64, "ambient dimension"),
    "world.d": (int, 16, "latent dimension"),
    "world.sigma_diag": (_parse_float_list, [], "latent covariance diagonal ([] = identity)"),
    "world.offsupport_coeff": (float, 5.0, "off-support reward coefficient"),
    "world.offsupport_sign": (str, "penalty", "penalty | bonus"),
    "data.n1": (int, 65536, "unlabeled sample count"),
    "data.n2": (int, 8192, "labeled sample count"),
    "data.noise_sigma": (float, 0.1, "label noise std in [0, 1)"),
    "reward.lambda": (float, 1.0, "ridge weight"),
    "reward.nu": (str, "auto", "pseudo-label noise std ('auto' = 1/sqrt(D))"),
    "schedule.T": (float, 10.0, "terminal diffusion time"),
    "schedule.t0": (float, 0.01, "early-stop time"),
    "schedule.eta": (float, 0.01, "backward step size"),
    "score.variant": (str, "mlp", "mlp | covering"),
    "score.hidden": (_parse_int_list, [128, 128], "mlp hidden widths"),
    "score.batch_size": (int, 64, "training batch size"),
    "score.epochs": (int, 10, "training epochs"),
    "score.learning_rate": (float, 3e-3, "Adam learning rate"),
    "score.lr_decay": (float, 0.7, "per-epoch learning-rate factor"),
    "sample.n": (int, 2048, "generated points per cell"),
    "sweep.a": (_parse_float_list, [0.0, 1.0, 2.0, 4.0, 8.0, 16.0], "target values"),
    "sweep.seeds": (_parse_int_list, [0, 1, 2, 3, 4], "root seeds"),
    "metrics.n_ref": (int, 20000, "reference draws for the decomposition"),
    "metrics.histogram_bins": (int, 50, "reward histogram bins"),
    "out.dir": (str, "runs/default", "output directory"),
}


def parse_config_text(text: str) -> dict:
    """Parse and validate a config file body into a flat key -> value dict."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        parser = SCHEMA[key][0]
        try:
            values[key] = parser(val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
    return values


@dataclass(frozen=True)
class RunConfig:
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        resolved = {k: default for k, (_, default, _) in SCHEMA.items()}
        for k, v in self.values.items():
            if k not in SCHEMA:
                raise ConfigError(f"unknown key {k!r}")
            resolved[k] = v
        self._validate(resolved)
        object.__setattr__(self, "values", resolved)

    @staticmethod
    def _validate(v: dict) -> None:
        if not 1 <= v["world.d"] <= v["world.D"]:
            raise ConfigError("need 1 <= world.d <= world.D")
        if v["world.sigma_diag"]:
            if len(v["world.sigma_diag"]) != v["world.d"]:
                raise ConfigError("world.sigma_diag length must equal world.d")
            if min(v["world.sigma_diag"]) <= 0 or max(v["world.sigma_diag"]) > 1:
                raise ConfigError("world.sigma_diag entries must lie in (0, 1]")
        for key in ("data.n1", "data.n2", "sample.n", "metrics.n_ref",
                    "metrics.histogram_bins", "score.batch_size", "score.epochs"):
            if v[key] < 1:
                raise ConfigError(f"{key} must be at least 1")
        if v["world.offsupport_sign"] not in ("penalty", "bonus"):
            raise ConfigError("world.offsupport_sign must be penalty or bonus")
        if not 0 <= v["data.noise_sigma"] < 1:
            raise ConfigError("data.noise_sigma must lie in [0, 1)")
        if v["reward.nu"] != "auto":
            try:
                nu = float(v["reward.nu"])
            except ValueError as exc:
                raise ConfigError("reward.nu must be 'auto' or a number") from exc
            if nu < 0:
                raise ConfigError("reward.nu must be nonnegative")
        if v["score.variant"] not in ("covering", "mlp"):
            raise ConfigError("score.variant must be covering or mlp")
        if not v["sweep.a"]:
            raise ConfigError("sweep.a must be nonempty")
        if not v["sweep.seeds"]:
            raise ConfigError("sweep.seeds must be nonempty")
        try:
            DiffusionSchedule(v["schedule.T"], v["schedule.t0"], v["schedule.eta"])
        except Exception as exc:
            raise ConfigError(f"invalid schedule: {exc}") from exc

    def __getitem__(self, key: str):
        return self.values[key]

    @property
    def nu(self) -> float:
        if self.values["reward.nu"] == "auto":
            return 1.0 / np.sqrt(self.values["world.D"])
        return float(self.values["reward.nu"])

    @property
    def sigma(self):
        diag = self.values["world.sigma_diag"]
        return np.diag(diag) if diag else None

    def schedule(self) -> DiffusionSchedule:
        return DiffusionSchedule(
            self.values["schedule.T"], self.values["schedule.t0"],
            self.values["schedule.eta"],
        )

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            batch_size=self.values["score.batch_size"],
            epochs=self.values["score.epochs"],
            learning_rate=self.values["score.learning_rate"],
            lr_decay=self.values["score.lr_decay"],
            seed=seed,
        )

    def digest(self) -> str:
        return sha256_text(json.dumps(self.values, sort_keys=True))


def load_config(path=None) -> RunConfig:
    """Load a config file; ``None`` gives the documented defaults."""
    if path is None:
        return RunConfig()
    text = Path(path).read_text()
    return RunConfig(values=parse_config_text(text))


def describe_schema() -> str:
    lines = ["known keys (key = default  # description):"]
    for key, (_, default, desc) in SCHEMA.items():
        lines.append(f"  {key} = {default}  # {desc}")
    return "\n".join(lines)
