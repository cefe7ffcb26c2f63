"""Reproducibility manifests and deterministic serialization.

Every CLI run emits a sidecar manifest recording the resolved parameters,
the root seed, the tool version, the kernel backend, and SHA-256 checksums
of every output file.  Replaying a manifest re-runs the command with the
recorded parameters and compares checksums; outputs are bit-stable across
thread counts because all randomness flows through named substreams.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__
from ._kernels import backend_name

MANIFEST_SCHEMA = "fbmlab.manifest/1"
ENVELOPE_SCHEMA = "fbmlab.report/1"


def jsonable(obj):
    """Recursively convert numpy containers/scalars to plain Python."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def canonical_json_bytes(obj) -> bytes:
    return (json.dumps(jsonable(obj), sort_keys=True, indent=2) + "\n").encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def file_sha256(path) -> str:
    return sha256_hex(Path(path).read_bytes())


def build_manifest(command: list, params: dict, seed: int, outputs: list,
                   config_digests: dict | None = None) -> dict:
    return {
        "schema": MANIFEST_SCHEMA,
        "tool_version": __version__,
        "kernel_backend": backend_name(),
        "command": list(command),
        "params": jsonable(params),
        "seed": int(seed),
        "config_digests": config_digests or {},
        "outputs": outputs,
    }


def write_envelope(path, command: list, payload, params: dict, seed: int,
                   warnings: list | None = None,
                   config_digests: dict | None = None) -> dict:
    """Write a report envelope (payload + embedded manifest) and its sidecar
    manifest with whole-file checksums.  Returns the sidecar manifest."""
    path = Path(path)
    payload = jsonable(payload)
    inner = build_manifest(command, params, seed, outputs=[], config_digests=config_digests)
    inner["payload_sha256"] = sha256_hex(canonical_json_bytes(payload))
    envelope = {
        "schema": ENVELOPE_SCHEMA,
        "payload": payload,
        "manifest": inner,
        "warnings": list(warnings or []),
    }
    path.write_bytes(canonical_json_bytes(envelope))
    return write_sidecar(path, command, params, seed, [path], config_digests)


def write_sidecar(manifest_for, command: list, params: dict, seed: int,
                  outputs: list, config_digests: dict | None = None) -> dict:
    """Write <first-output>.manifest.json listing checksums of all outputs."""
    outputs = [Path(p) for p in outputs]
    entries = [{"path": p.name, "sha256": file_sha256(p)} for p in outputs]
    man = build_manifest(command, params, seed, entries, config_digests)
    man_path = Path(str(outputs[0]) + ".manifest.json")
    man_path.write_bytes(canonical_json_bytes(man))
    return man


def load_manifest(path) -> dict:
    path = Path(path)
    obj = json.loads(path.read_text())
    if "manifest" in obj and "payload" in obj:
        obj = obj["manifest"]  # accept an envelope in place of a sidecar
    if obj.get("schema") != MANIFEST_SCHEMA:
        raise ValueError(
            f"unsupported manifest schema {obj.get('schema')!r} (expected {MANIFEST_SCHEMA})"
        )
    return obj
