"""Bernoulli track state, hypothesis expansion, and collapse.

Between scans every track is a single Bernoulli component (existence
probability plus a Gaussian-mixture state pdf). A scan expands each track
into one missed-detection hypothesis plus one hypothesis per gated
measurement, and prices one candidate track per measurement against clutter
and the undetected-target intensity. After association marginals (and any
probability transfer) are available, each track collapses back to a single
Bernoulli.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2

from .assoc import AssociationProblem
from .errors import DomainError
from .gaussians import GaussianDensity, GaussianMixture, kalman_predict, kalman_update
from .grid import GridIntensity, birth_track_params
from .models import ModelBundle, MotionModel, SensorModel

MISS = -1


@dataclass
class Track:
    track_id: int
    existence: float
    pdf: GaussianMixture
    origin_scan: int
    origin_measurement: int
    degenerate: bool = False

    def __post_init__(self):
        if not 0.0 <= self.existence <= 1.0 + 1e-9:
            raise DomainError(f"track {self.track_id}: existence {self.existence} outside [0, 1]")
        self.existence = min(self.existence, 1.0)


@dataclass
class Hypothesis:
    assoc: int                      # MISS or a measurement index
    weight: float
    existence: float
    pdf: GaussianMixture | None
    degenerate: bool = False        # weight underflowed; treated as ungated


@dataclass
class ScanAssociation:
    """One scan's expanded hypothesis forest plus its weight matrix view."""

    problem: AssociationProblem
    hyps: list[dict[int, Hypothesis]]       # per track row, keyed by assoc
    gate: np.ndarray                        # (n_existing, m) candidate mask
    new_weights: np.ndarray                 # (m,) total weight per measurement
    new_existence: np.ndarray               # (m,) candidate-track existence

    def det_existence(self) -> np.ndarray:
        """(n_tracks, m) existence of each detected hypothesis (0 where absent)."""
        n, m = self.problem.n_tracks, self.problem.n_measurements
        out = np.zeros((n, m))
        for i, track_hyps in enumerate(self.hyps):
            for a, h in track_hyps.items():
                if a != MISS:
                    out[i, a] = h.existence
        return out


def predict_track(track: Track, motion: MotionModel) -> Track:
    comps = [kalman_predict(c, motion.trans, motion.noise) for c in track.pdf.components]
    return Track(
        track.track_id,
        motion.survival * track.existence,
        GaussianMixture(track.pdf.weights.copy(), comps),
        track.origin_scan,
        track.origin_measurement,
        track.degenerate,
    )


def gate_threshold(gate_prob: float, meas_dim: int) -> float:
    if not 0.0 < gate_prob <= 1.0:
        raise DomainError("gate probability must lie in (0, 1]")
    if gate_prob == 1.0:
        return np.inf
    return float(chi2.ppf(gate_prob, df=meas_dim))


def _pair_distances(track: Track, measurements: np.ndarray, sensor: SensorModel) -> np.ndarray:
    """Squared Mahalanobis distance of each measurement to the closest component."""
    obs, noise = sensor.obs, sensor.noise
    best = np.full(measurements.shape[0], np.inf)
    for comp in track.pdf.normalized().components:
        innov_cov = obs @ comp.cov @ obs.T + noise
        chol = np.linalg.cholesky(innov_cov)
        diff = measurements - obs @ comp.mean
        sol = np.linalg.solve(chol, diff.T)
        best = np.minimum(best, np.sum(sol * sol, axis=0))
    return best


def gate(track: Track, z: np.ndarray, sensor: SensorModel, gate_threshold: float) -> bool:
    """Whether the measurement falls inside the track's gating ellipsoid.

    The distance is taken to the closest mixture component; the threshold is
    the squared-Mahalanobis radius (typically a chi-square quantile for the
    measurement dimension).
    """
    z = np.asarray(z, dtype=float).reshape(1, -1)
    return bool(_pair_distances(track, z, sensor)[0] <= gate_threshold)


def gate_measurements(
    tracks: list[Track], measurements: np.ndarray, sensor: SensorModel, gate_threshold: float
) -> np.ndarray:
    """Candidate mask over (track, measurement) pairs for one scan."""
    m = measurements.shape[0]
    out = np.zeros((len(tracks), m), dtype=bool)
    if m == 0:
        return out
    for i, track in enumerate(tracks):
        out[i] = _pair_distances(track, measurements, sensor) <= gate_threshold
    return out


def update_missed_hypothesis(track: Track, sensor: SensorModel) -> Hypothesis:
    """Missed-detection hypothesis: weight 1 - q*Pd, existence q(1-Pd)/(1 - q*Pd)."""
    q = track.existence
    pd = sensor.detection_prob
    weight = 1.0 - q * pd
    if weight > 0.0:
        existence = q * (1.0 - pd) / weight
    else:
        existence = 0.0
    return Hypothesis(MISS, weight, existence, track.pdf.normalized())


def update_detected_hypothesis(
    track: Track, sensor: SensorModel, z: np.ndarray, assoc: int
) -> Hypothesis:
    """Detected hypothesis for one (track, measurement) pair.

    Weight is q * Pd * likelihood; if every component likelihood underflows
    the hypothesis comes back with weight 0 and the degenerate flag set,
    which downstream treats the same as an ungated pair.
    """
    prior = track.pdf.normalized()
    post_comps = []
    post_weights = []
    for w, comp in zip(prior.weights, prior.components):
        posterior, lik = kalman_update(comp, z, sensor.obs, sensor.noise)
        post_comps.append(posterior)
        post_weights.append(w * lik)
    total = float(np.sum(post_weights))
    weight = track.existence * sensor.detection_prob * total
    if weight <= 0.0 or not np.isfinite(weight):
        return Hypothesis(assoc, 0.0, 1.0, prior, degenerate=True)
    pdf = GaussianMixture(np.asarray(post_weights) / total, post_comps)
    return Hypothesis(assoc, weight, 1.0, pdf)


def build_association_problem(
    tracks: list[Track],
    measurements: np.ndarray,
    grid_pred: GridIntensity,
    model: ModelBundle,
    gate_threshold: float,
) -> ScanAssociation:
    """Expand hypotheses and assemble the scan's association weights.

    The candidate-track weights interrogate the *predicted* (pre-thinning)
    intensity, which is what prices a measurement as clutter or new target.
    """
    n = len(tracks)
    measurements = np.asarray(measurements, dtype=float).reshape(-1, model.sensor.meas_dim)
    m = measurements.shape[0]
    mask = gate_measurements(tracks, measurements, model.sensor, gate_threshold)

    miss_weight = np.ones(n + m)
    det_weight = np.zeros((n + m, m))
    hyps: list[dict[int, Hypothesis]] = []

    for i, track in enumerate(tracks):
        track_hyps: dict[int, Hypothesis] = {}
        miss = update_missed_hypothesis(track, model.sensor)
        track_hyps[MISS] = miss
        miss_weight[i] = miss.weight
        for j in np.flatnonzero(mask[i]):
            hyp = update_detected_hypothesis(track, model.sensor, measurements[j], int(j))
            if hyp.weight > 0.0:
                track_hyps[int(j)] = hyp
                det_weight[i, j] = hyp.weight
        hyps.append(track_hyps)

    new_weights = np.zeros(m)
    new_existence = np.zeros(m)
    for j in range(m):
        weight, existence, pdf = birth_track_params(grid_pred, model, measurements[j])
        new_weights[j] = weight
        new_existence[j] = existence
        row_hyps = {
            MISS: Hypothesis(MISS, 1.0, 0.0, None),
            j: Hypothesis(j, weight, existence, GaussianMixture(np.array([1.0]), [pdf])),
        }
        det_weight[n + j, j] = weight
        hyps.append(row_hyps)

    problem = AssociationProblem(miss_weight, det_weight, n_existing=n)
    problem.validate()
    return ScanAssociation(problem, hyps, mask, new_weights, new_existence)


def collapse_track(
    track_hyps: dict[int, Hypothesis], p_miss: float, p_det: np.ndarray
) -> tuple[float, GaussianMixture | None, bool]:
    """Mix the hypothesis Bernoullis back into a single Bernoulli.

    Existence is the marginal-weighted hypothesis existence; the pdf mixes
    each hypothesis pdf with weight marginal * existence. A track whose
    posterior existence is zero keeps its missed-detection pdf and is flagged.
    """
    existence = 0.0
    weights: list[float] = []
    comps: list = []
    for a, hyp in track_hyps.items():
        p = p_miss if a == MISS else float(p_det[a])
        if p < -1e-12:
            raise DomainError(f"negative association marginal {p} for hypothesis {a}")
        p = max(p, 0.0)
        mass = p * hyp.existence
        existence += mass
        if mass > 0.0 and hyp.pdf is not None:
            pdf = hyp.pdf.normalized()
            weights.extend((mass * pdf.weights).tolist())
            comps.extend(pdf.components)
    if existence <= 0.0 or not comps:
        fallback = track_hyps.get(MISS)
        pdf = fallback.pdf if fallback is not None and fallback.pdf is not None else None
        if pdf is None:
            for hyp in track_hyps.values():
                if hyp.pdf is not None:
                    pdf = hyp.pdf
                    break
        return max(existence, 0.0), pdf, True
    mixture = GaussianMixture(np.asarray(weights), comps).normalized()
    return float(existence), mixture, False
