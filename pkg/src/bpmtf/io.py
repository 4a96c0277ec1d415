"""Deterministic serialization of runs.

Identical inputs must produce byte-identical output files: JSON lines are
written with sorted keys and no whitespace, CSV floats with one fixed format,
newlines fixed to \\n regardless of platform. Nothing here is clever; it only
refuses the places nondeterminism sneaks in (dict order, locale, float repr
drift, carriage returns).
"""

from __future__ import annotations

import hashlib
import json
from typing import Iterable

import numpy as np

from .errors import DomainError
from .filter import Estimate, ScanRecord
from .sim import Truth

_FLOAT_FMT = "%.12g"


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def dumps_record(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


def write_jsonl(path, records: Iterable) -> int:
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(dumps_record(rec))
            fh.write("\n")
            count += 1
    return count


def read_jsonl(path) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False))
        fh.write("\n")


def _csv_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return _FLOAT_FMT % float(value)
    return str(value)


def write_csv(path, header: list[str], rows: Iterable) -> int:
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header))
        fh.write("\n")
        for row in rows:
            fh.write(",".join(_csv_cell(v) for v in row))
            fh.write("\n")
            count += 1
    return count


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def estimate_dict(e: Estimate) -> dict:
    return {
        "trackId": int(e.track_id),
        "existence": float(e.existence),
        "mean": np.asarray(e.mean).tolist(),
        "cov": np.asarray(e.cov).tolist(),
    }


def scan_record_dict(r: ScanRecord) -> dict:
    return {
        "scan": int(r.scan_index),
        "nMeasurements": int(r.n_measurements),
        "nClusters": int(r.n_clusters),
        "nHypotheses": int(r.n_hypotheses),
        "method": r.method,
        "iterations": int(r.iterations),
        "converged": bool(r.converged),
        "residual": float(r.residual),
        "forcedClaims": int(r.forced_claims),
        "mapLogWeight": None if r.map_log_weight is None else float(r.map_log_weight),
        "transferMass": float(r.transfer_mass),
        "recycle": {k: float(v) for k, v in r.recycle.items()},
        "prunedMass": float(r.pruned_mass),
        "prunedCount": int(r.pruned_count),
        "degenerateCount": int(r.degenerate_count),
        "balance": {k: float(v) for k, v in r.balance.items()},
        "nTracks": int(r.n_tracks),
        "gridMass": float(r.grid_mass),
        "estimates": [estimate_dict(e) for e in r.estimates],
    }


def truth_dicts(truth: Truth) -> list[dict]:
    return [
        {
            "targetId": int(t.target_id),
            "birthScan": int(t.birth_scan),
            "states": [np.asarray(x).tolist() for x in t.states],
        }
        for t in truth.targets
    ]


def measurement_dicts(scans: list[np.ndarray]) -> list[dict]:
    return [
        {"scan": int(k), "measurements": np.asarray(z).tolist()}
        for k, z in enumerate(scans)
    ]


def read_measurements(path) -> list[np.ndarray]:
    """Measurement scans back from the JSONL written by the simulate command.

    Rows must carry consecutive scan indices from zero."""
    scans: list[np.ndarray] = []
    for row in read_jsonl(path):
        if int(row.get("scan", -1)) != len(scans):
            raise DomainError(f"measurement rows must cover scans in order, got {row.get('scan')}")
        scans.append(np.asarray(row["measurements"], dtype=float))
    return scans
