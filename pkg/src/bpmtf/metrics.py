"""Scoring: set-to-set position error, cardinality, calibration.

The set metric penalizes localization and cardinality mismatch together: per
scan, matched pairs contribute their cutoff-clipped distance, unmatched
targets contribute the cutoff, and the matching itself is the one that
minimizes the total (solved with the same assignment machinery the filter
uses, on a negated cost)."""

from __future__ import annotations

import numpy as np

from .assignment import auction_assignment
from .errors import DomainError
from .gaussians import mixture_moments
from .sim import Truth


def ospa(x: np.ndarray, y: np.ndarray, cutoff: float, order: float = 1.0) -> float:
    """Optimal subpattern assignment distance between two point sets."""
    if cutoff <= 0:
        raise DomainError(f"cutoff must be positive, got {cutoff}")
    if order < 1:
        raise DomainError(f"order must be at least 1, got {order}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = 0 if x.size == 0 else x.shape[0]
    m = 0 if y.size == 0 else y.shape[0]
    if n == 0 and m == 0:
        return 0.0
    if n == 0 or m == 0:
        return float(cutoff)
    x = x.reshape(n, -1)
    y = y.reshape(m, -1)
    diff = x[:, None, :] - y[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    cost = np.minimum(dist, cutoff) ** order
    k = max(n, m)
    padded = np.full((k, k), float(cutoff) ** order)
    padded[:n, :m] = cost
    row_to_col = auction_assignment(-padded)
    total = float(padded[np.arange(k), row_to_col].sum())
    return float((total / k) ** (1.0 / order))


def _aligned(truth: Truth, estimates_per_scan: list) -> None:
    if len(estimates_per_scan) != truth.n_scans:
        raise DomainError(
            f"got {len(estimates_per_scan)} estimate scans for {truth.n_scans} truth scans"
        )


def ospa_series(
    truth: Truth,
    estimates_per_scan: list,
    position_dim: int,
    cutoff: float,
    order: float = 1.0,
) -> list[float]:
    _aligned(truth, estimates_per_scan)
    values = []
    for scan in range(truth.n_scans):
        x = truth.positions_at(scan, position_dim)
        ests = estimates_per_scan[scan]
        y = (
            np.array([np.asarray(e.mean)[:position_dim] for e in ests])
            if ests else np.zeros((0, position_dim))
        )
        values.append(ospa(x, y, cutoff, order))
    return values


def cardinality_series(truth: Truth, estimates_per_scan: list) -> list[int]:
    _aligned(truth, estimates_per_scan)
    return [
        abs(truth.cardinality(scan) - len(estimates_per_scan[scan]))
        for scan in range(truth.n_scans)
    ]


def existence_calibration(
    tracks_per_scan: list,
    truth: Truth,
    position_dim: int,
    radius: float,
    n_bins: int = 10,
) -> list[dict]:
    """Reliability table: tracks binned by existence probability against the
    fraction that sit within ``radius`` of a true target."""
    if radius <= 0 or n_bins < 1:
        raise DomainError("calibration needs a positive radius and at least one bin")
    _aligned(truth, tracks_per_scan)
    sums = np.zeros(n_bins)
    hits = np.zeros(n_bins)
    counts = np.zeros(n_bins, dtype=int)
    for scan in range(truth.n_scans):
        true_pos = truth.positions_at(scan, position_dim)
        for track in tracks_per_scan[scan]:
            pos = getattr(track, "mean", None)
            if pos is None:
                if track.pdf is None:
                    continue
                pos = mixture_moments(track.pdf)[0]
            pos = np.asarray(pos)[:position_dim]
            b = min(int(track.existence * n_bins), n_bins - 1)
            matched = bool(
                true_pos.shape[0]
                and (np.linalg.norm(true_pos - pos, axis=1) <= radius).any()
            )
            sums[b] += track.existence
            hits[b] += matched
            counts[b] += 1
    table = []
    for b in range(n_bins):
        table.append({
            "bin_low": b / n_bins,
            "bin_high": (b + 1) / n_bins,
            "count": int(counts[b]),
            "mean_existence": float(sums[b] / counts[b]) if counts[b] else None,
            "match_rate": float(hits[b] / counts[b]) if counts[b] else None,
        })
    return table


def summarize(
    records: list,
    truth: Truth,
    position_dim: int,
    cutoff: float,
    order: float = 1.0,
    radius: float = 5.0,
    n_bins: int = 10,
) -> dict:
    """Aggregate scoring of one run against its truth.

    ``records`` is the per-scan output stream (anything carrying an
    ``estimates`` list per scan, or bare per-scan estimate lists); lengths
    must line up with the truth. Returns per-scan series, their aggregates,
    and the existence-calibration table over reported tracks.
    """
    estimates_per_scan = [getattr(r, "estimates", r) for r in records]
    _aligned(truth, estimates_per_scan)
    o = np.asarray(
        ospa_series(truth, estimates_per_scan, position_dim, cutoff, order), dtype=float
    )
    c = np.asarray(cardinality_series(truth, estimates_per_scan), dtype=float)
    calibration = existence_calibration(
        estimates_per_scan, truth, position_dim, radius, n_bins
    )
    return {
        "scans": int(o.size),
        "mean_ospa": float(o.mean()) if o.size else 0.0,
        "max_ospa": float(o.max()) if o.size else 0.0,
        "mean_cardinality_error": float(c.mean()) if c.size else 0.0,
        "max_cardinality_error": float(c.max()) if c.size else 0.0,
        "ospa": o.tolist(),
        "cardinality_error": [int(v) for v in c],
        "calibration": calibration,
    }
