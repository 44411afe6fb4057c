"""JSON export for solver results; big vectors go to sidecar binary files."""
from __future__ import annotations

import datetime as _dt
import json
from pathlib import Path

import numpy as np

from . import kernels
from .matrix import write_dense

SCHEMA = "lazy-spectra/1"
INLINE_LIMIT = 10_000


def _vectors(arr, out_path, stem):
    """Inline list for small arrays, else a sidecar file referenced by name."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.size <= INLINE_LIMIT or out_path is None:
        return {"inline": arr.tolist()}, None
    side = Path(out_path).with_name(f"{Path(out_path).stem}.{stem}.bin")
    write_dense(side, arr)
    return {"path": side.name, "shape": list(arr.shape)}, side


def _envelope(command, payload, deterministic):
    doc = {"schema": SCHEMA, "command": command, "kernels": kernels.BACKEND}
    doc.update(payload)
    if not deterministic:
        doc["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    return doc


def genev_document(res, out_path=None, deterministic=True, extra=None):
    vecs, _ = _vectors(res.vectors, out_path, "vectors")
    payload = {
        "eigenvalues": [float(v) for v in res.eigenvalues],
        "signs": [int(s) for s in res.signs],
        "vectors": vecs,
        "vectors_path": vecs.get("path"),
        "b_orthonormality_error": res.b_orthonormality_error,
        "residual_exhausted": res.residual_exhausted,
        "traces": res.traces,
        "calls": res.calls,
        "stats": res.stats.as_dict(),
        "seed": res.seed,
        "config": {**res.config, "schedule": res.schedule},
    }
    payload.update(extra or {})
    return _envelope("genev", payload, deterministic)


def cca_document(res, out_path=None, deterministic=True, leakage=None, extra=None):
    phi, _ = _vectors(res.phi, out_path, "phi")
    psi, _ = _vectors(res.psi, out_path, "psi")
    payload = {
        "sigmas": [float(s) for s in res.sigmas],
        "phi": phi,
        "psi": psi,
        "phi_path": phi.get("path"),
        "psi_path": psi.get("path"),
        "leakage": leakage,
        "residual_exhausted": res.residual_exhausted,
        "traces": res.traces,
        "calls": res.calls,
        "stats": res.stats.as_dict(),
        "seed": res.seed,
        "config": {**res.config, "schedule": res.schedule},
    }
    payload.update(extra or {})
    return _envelope("cca", payload, deterministic)


def validate_document(report, deterministic=True):
    return _envelope("validate", report, deterministic)


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write(doc, path):
    text = dumps(doc)
    if path is None or str(path) == "-":
        return text
    Path(path).write_text(text)
    return text
