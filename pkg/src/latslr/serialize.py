"""JSON persistence for instances with a schema version and a content hash.

Floats are written with Python's shortest round-trip representation, so
loading reproduces every stored double exactly.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

import numpy as np

from .clwe import ClweSample
from .errors import HashMismatch, IoError, SchemaVersionUnsupported
from .gadgets import GadgetShape
from .lattice import BinaryBddInstance, LatticeBasis
from .reduction import ReductionParams, ReductionTranscript, SlrInstance

SCHEMA_VERSION = 1


def _canonical(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def content_hash(payload: Any) -> str:
    return hashlib.sha256(_canonical(payload).encode()).hexdigest()


def _floats(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def _opt(a):
    return None if a is None else _floats(a)


def _basis_payload(basis: LatticeBasis) -> dict:
    return {"d": basis.d, "B": _floats(basis.entries)}


def _params_payload(p: ReductionParams) -> dict:
    return {
        "lambda1_hat": p.lambda1_hat,
        "delta": p.delta,
        "gamma": p.gamma,
        "m": p.m,
        "m1": p.m1,
        "Z": p.Z,
        "shape": p.shape.as_dict(),
        "sigma_flood": p.sigma_flood,
    }


def to_payload(obj, include_secrets: bool = True) -> tuple[str, dict]:
    """(type tag, JSON-ready dict) for any persistable object."""
    if isinstance(obj, LatticeBasis):
        return "lattice_basis", _basis_payload(obj)
    if isinstance(obj, BinaryBddInstance):
        secret = include_secrets and obj.has_hidden
        return "binary_bdd", {
            "basis": _basis_payload(obj.basis),
            "t": _floats(obj.target),
            "alpha": obj.alpha,
            "lambda1_bin": obj.lambda1_bin,
            "z": [int(v) for v in obj.hidden_z] if secret else None,
            "e": _floats(obj.hidden_e) if secret else None,
        }
    if isinstance(obj, SlrInstance):
        return "slr", {
            "m": obj.m,
            "n": obj.n,
            "k": obj.k,
            "delta": obj.delta,
            "X": _floats(obj.X),
            "y": _floats(obj.y),
            "provenance": obj.provenance,
        }
    if isinstance(obj, ReductionTranscript):
        basis = _basis_payload(obj.basis_ref)
        target = _floats(obj.target_ref)
        return "reduction_transcript", {
            "params": _params_payload(obj.params),
            "R": _floats(obj.R),
            "basis": basis,
            "basis_sha256": content_hash(basis),
            "t": target,
            "t_sha256": content_hash(target),
            "seed": obj.rng_seed,
            "flood": _opt(obj.flood),
        }
    if isinstance(obj, ClweSample):
        secret = include_secrets and obj.hidden_s is not None
        return "clwe_sample", {
            "m": obj.m,
            "n": obj.n,
            "A": _floats(obj.A),
            "b": _floats(obj.b),
            "gamma_clwe": obj.gamma_clwe,
            "beta": obj.beta,
            "provenance": obj.provenance,
            "s": _floats(obj.hidden_s) if secret else None,
        }
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _basis_from(p: dict) -> LatticeBasis:
    return LatticeBasis(np.array(p["B"], dtype=float).reshape(p["d"], p["d"]))


def from_payload(kind: str, p: dict):
    if kind == "lattice_basis":
        return _basis_from(p)
    if kind == "binary_bdd":
        z = None if p.get("z") is None else np.array(p["z"], dtype=np.int64)
        e = None if p.get("e") is None else np.array(p["e"], dtype=float)
        return BinaryBddInstance(_basis_from(p["basis"]), np.array(p["t"]), p["alpha"], z, e, p.get("lambda1_bin"))
    if kind == "slr":
        X = np.array(p["X"], dtype=float).reshape(p["m"], p["n"])
        return SlrInstance(X, np.array(p["y"]), p["delta"], p["k"], p["provenance"])
    if kind == "reduction_transcript":
        if content_hash(p["basis"]) != p["basis_sha256"] or content_hash(p["t"]) != p["t_sha256"]:
            raise HashMismatch("transcript basis or target does not match its recorded hash")
        q = p["params"]
        shape = GadgetShape(q["shape"]["d"], q["shape"]["k"])
        params = ReductionParams(
            q["lambda1_hat"], q["delta"], q["gamma"], q["m"], q["m1"], q["Z"], shape, q["sigma_flood"]
        )
        R = np.array(p["R"], dtype=float).reshape(q["m1"], shape.d)
        flood = None if p.get("flood") is None else np.array(p["flood"])
        return ReductionTranscript(params, R, _basis_from(p["basis"]), np.array(p["t"]), p["seed"], flood)
    if kind == "clwe_sample":
        A = np.array(p["A"], dtype=float).reshape(p["m"], p["n"])
        s = None if p.get("s") is None else np.array(p["s"])
        return ClweSample(A, np.array(p["b"]), p["gamma_clwe"], p["beta"], p["provenance"], s)
    raise SchemaVersionUnsupported(f"unknown object type {kind!r}")


def dumps(obj, include_secrets: bool = True) -> str:
    kind, payload = to_payload(obj, include_secrets)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "type": kind,
        "sha256": content_hash(payload),
        "payload": payload,
    }
    return json.dumps(doc, allow_nan=False)


def loads(text: str):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise IoError(f"not valid JSON: {exc}") from exc
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise SchemaVersionUnsupported(f"schema_version {doc.get('schema_version')!r} is not {SCHEMA_VERSION}")
    if content_hash(doc["payload"]) != doc.get("sha256"):
        raise HashMismatch("payload does not match its recorded sha256")
    return from_payload(doc["type"], doc["payload"])


def save_instance(path, obj, include_secrets: bool = True) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dumps(obj, include_secrets))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


def load_instance(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    return loads(text)
