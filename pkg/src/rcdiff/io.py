"""File formats and run manifests.

Two little-endian binary containers cover all numeric artifacts:

* matrix file (datasets, sample batches) — header ``b"RCDS"``, u32 version,
  u64 row count, u64 column count, then row-major float64 data;
* tensor-block file (models, ridge estimates) — header ``b"RCTB"``, u32
  version, u64 metadata length + UTF-8 JSON, u32 block count, then per
  block: u32 name length, name, u32 rank, u64 dims, float64 data.

JSON artifacts are written with sorted keys and a trailing newline so
byte-identical reruns are possible; manifests record a sha256 per file.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

from .errors import ValidationError

MATRIX_MAGIC = b"RCDS"
TENSOR_MAGIC = b"RCTB"
FORMAT_VERSION = 1


def _atomic_write(path, payload: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# Matrix container
# ---------------------------------------------------------------------------

def write_matrix(path, X: np.ndarray) -> None:
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype="<f8")))
    header = MATRIX_MAGIC + struct.pack("<IQQ", FORMAT_VERSION, *X.shape)
    _atomic_write(path, header + X.tobytes())


def read_matrix(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != MATRIX_MAGIC:
        raise ValidationError(f"{path}: not a matrix file (bad magic)")
    version, n, d = struct.unpack_from("<IQQ", raw, 4)
    if version != FORMAT_VERSION:
        raise ValidationError(f"{path}: unsupported version {version}")
    body = np.frombuffer(raw, dtype="<f8", offset=24)
    if body.size != n * d:
        raise ValidationError(f"{path}: truncated matrix file")
    return body.reshape(n, d).copy()


def export_csv(path, X: np.ndarray, y: np.ndarray | None = None) -> None:
    """Human-readable companion export: x0..x{D-1}[, y]."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    header = [f"x{i}" for i in range(X.shape[1])]
    if y is not None:
        header.append("y")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(X.shape[0]):
            row = [repr(float(v)) for v in X[i]]
            if y is not None:
                row.append(repr(float(y[i])))
            w.writerow(row)


# ---------------------------------------------------------------------------
# Tensor-block container
# ---------------------------------------------------------------------------

def write_blocks(path, meta: dict, blocks: dict) -> None:
    meta_bytes = json.dumps(meta, sort_keys=True).encode()
    parts = [TENSOR_MAGIC, struct.pack("<IQ", FORMAT_VERSION, len(meta_bytes)),
             meta_bytes, struct.pack("<I", len(blocks))]
    for name, arr in blocks.items():
        arr = np.ascontiguousarray(np.asarray(arr, dtype="<f8"))
        nb = name.encode()
        parts.append(struct.pack("<I", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    _atomic_write(path, b"".join(parts))


def read_blocks(path) -> tuple[dict, dict]:
    raw = Path(path).read_bytes()
    if raw[:4] != TENSOR_MAGIC:
        raise ValidationError(f"{path}: not a tensor-block file (bad magic)")
    try:
        version, meta_len = struct.unpack_from("<IQ", raw, 4)
        if version != FORMAT_VERSION:
            raise ValidationError(f"{path}: unsupported version {version}")
        off = 16
        meta = json.loads(raw[off: off + meta_len].decode())
        off += meta_len
        (n_blocks,) = struct.unpack_from("<I", raw, off)
        off += 4
        blocks = {}
        for _ in range(n_blocks):
            (name_len,) = struct.unpack_from("<I", raw, off)
            off += 4
            name = raw[off: off + name_len].decode()
            off += name_len
            (rank,) = struct.unpack_from("<I", raw, off)
            off += 4
            shape = struct.unpack_from(f"<{rank}Q", raw, off)
            off += 8 * rank
            count = int(np.prod(shape)) if rank else 1
            arr = np.frombuffer(raw, dtype="<f8", count=count, offset=off)
            off += 8 * count
            blocks[name] = arr.reshape(shape).copy()
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValidationError(f"{path}: corrupt tensor-block file ({exc})") from exc
    if off != len(raw):
        raise ValidationError(f"{path}: trailing bytes in tensor-block file")
    return meta, blocks


# ---------------------------------------------------------------------------
# Typed artifact helpers
# ---------------------------------------------------------------------------

def save_ridge(path, est) -> None:
    write_blocks(
        path,
        {"kind": "ridge", "lambda": est.lam, "n2": est.n2},
        {"theta_hat": est.theta_hat, "sigma_hat_lambda": est.sigma_hat_lambda},
    )


def load_ridge(path):
    from .regression import RidgeEstimate

    meta, blocks = read_blocks(path)
    if meta.get("kind") != "ridge":
        raise ValidationError(f"{path}: not a ridge estimate file")
    return RidgeEstimate(
        theta_hat=blocks["theta_hat"],
        lam=float(meta["lambda"]),
        n2=int(meta["n2"]),
        sigma_hat_lambda=blocks["sigma_hat_lambda"],
    )


def save_model(path, model, schedule=None) -> None:
    meta, blocks = model.to_blocks()
    if schedule is not None:
        meta = {**meta, "schedule": schedule.to_dict()}
    write_blocks(path, {"kind": "score_model", **meta}, blocks)


def load_model(path):
    from .score_model import model_from_blocks

    meta, blocks = read_blocks(path)
    if meta.get("kind") != "score_model":
        raise ValidationError(f"{path}: not a score model file")
    return model_from_blocks(meta, blocks)


def save_world(path, world) -> None:
    write_blocks(
        path,
        {
            "kind": "world",
            "offsupport_coeff": world.offsupport_coeff,
            "offsupport_sign": world.offsupport_sign,
        },
        {"A": world.A, "Sigma": world.Sigma, "beta_star": world.beta_star},
    )


def load_world(path):
    from .world import SubspaceWorld

    meta, blocks = read_blocks(path)
    if meta.get("kind") != "world":
        raise ValidationError(f"{path}: not a world file")
    return SubspaceWorld(
        A=blocks["A"],
        Sigma=blocks["Sigma"],
        beta_star=blocks["beta_star"],
        offsupport_coeff=float(meta["offsupport_coeff"]),
        offsupport_sign=str(meta["offsupport_sign"]),
    )


def save_samples(path_prefix, batch) -> tuple[str, str]:
    """Write a sample batch as matrix file plus JSON sidecar; returns paths."""
    bin_path = str(path_prefix) + ".bin"
    json_path = str(path_prefix) + ".json"
    write_matrix(bin_path, batch.X)
    write_json(
        json_path,
        {
            "a": batch.a,
            "n": batch.n,
            "schedule": batch.schedule.to_dict(),
            "score_id": batch.score_id,
            "seed": batch.seed,
        },
    )
    return bin_path, json_path


def load_samples(path_prefix):
    from .oracle import DiffusionSchedule
    from .sampler import SampleBatch

    X = read_matrix(str(path_prefix) + ".bin")
    side = read_json(str(path_prefix) + ".json")
    return SampleBatch(
        X=X,
        a=float(side["a"]),
        schedule=DiffusionSchedule.from_dict(side["schedule"]),
        score_id=str(side["score_id"]),
        seed=side["seed"],
    )


# ---------------------------------------------------------------------------
# JSON, hashing, manifests
# ---------------------------------------------------------------------------

def write_json(path, obj) -> None:
    payload = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    _atomic_write(path, payload.encode())


def read_json(path):
    return json.loads(Path(path).read_text())


def sha256_file(path) -> str:
    sha = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            sha.update(chunk)
    return sha.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


class ManifestBuilder:
    """Collects artifact hashes and timings for one run."""

    def __init__(self, config_digest: str, resolved_config: dict):
        self.data = {
            "config_digest": config_digest,
            "config": resolved_config,
            "format_version": FORMAT_VERSION,
            "files": {},
            "timings_s": {},
            "complete": False,
        }

    def add_file(self, root, path) -> None:
        rel = os.path.relpath(path, root)
        self.data["files"][rel] = sha256_file(path)

    def add_timing(self, name: str, seconds: float) -> None:
        self.data["timings_s"][name] = round(seconds, 3)

    def write(self, path, complete: bool) -> None:
        self.data["complete"] = complete
        write_json(path, self.data)


def verify_manifest(root) -> list:
    """Return mismatched or missing files recorded in a run manifest."""
    root = Path(root)
    manifest = read_json(root / "manifest.json")
    bad = []
    for rel, digest in manifest["files"].items():
        p = root / rel
        if not p.exists():
            bad.append(f"missing: {rel}")
        elif sha256_file(p) != digest:
            bad.append(f"hash mismatch: {rel}")
    return bad
