"""The scan-by-scan filter: predict, associate, collapse, recycle.

The posterior over targets is carried as an intensity grid for undetected
targets plus a list of Bernoulli tracks for detected ones. A scan runs

  1. prediction of grid and tracks,
  2. hypothesis expansion against the predicted (pre-thinning) grid,
  3. missed-detection thinning of the grid,
  4. association marginals per connected cluster,
  5. optional probability transfer toward the MAP assignment,
  6. collapse of every track row back to one Bernoulli,
  7. recycling of cheap tracks into the grid, pruning, extraction.

Every scan closes an expected-count balance: start mass plus births minus
decay, leakage, thinning, truncation, and pruning (with the association
update's gain recorded) must match the end mass.

``step_member`` is the measurement-oriented variant: instead of collapsing
each track row over its claims, it forms one output track per measurement
from the measurement-side marginals (plus one per surviving miss), with
fresh identities every scan.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .assoc import AssociationMarginals, clustered_marginals, split_clusters
from .coalescence import apply_transfer, map_assignment, solve_transfer
from .errors import ConvergenceError, DomainError, InvariantViolation
from .gaussians import GaussianMixture, mixture_moments, mixture_reduce
from .grid import (
    GridIntensity,
    predict_intensity,
    steady_state,
    transport_stencils,
    update_missed,
    zero_intensity,
)
from .models import ModelBundle
from .recycling import recycle, select_recycle
from .tracks import (
    MISS,
    Hypothesis,
    ScanAssociation,
    Track,
    build_association_problem,
    collapse_track,
    gate_threshold,
    predict_track,
)


@dataclass
class FilterParams:
    gate_prob: float = 0.999
    gate_radius: float | None = None    # explicit chi-square threshold; wins over gate_prob
    association: str = "lbp"            # "lbp" or "exact"
    lbp_tol: float = 1e-6
    lbp_max_iter: int = 1000
    lbp_damping: float = 0.0
    coalescence: bool = True
    recycle_budget: float = 0.05
    prune_threshold: float = 1e-4
    report_threshold: float = 0.5
    max_components: int = 10
    merge_threshold: float = 0.1

    def validate(self) -> None:
        if not 0.0 < self.gate_prob <= 1.0:
            raise DomainError(f"gate probability {self.gate_prob} outside (0, 1]")
        if self.gate_radius is not None and self.gate_radius <= 0.0:
            raise DomainError("gate radius must be positive")
        if self.association not in ("lbp", "exact"):
            raise DomainError(f"unknown association method {self.association!r}")
        if self.lbp_tol <= 0 or self.lbp_max_iter < 1:
            raise DomainError("belief propagation tolerance/iteration settings invalid")
        if not 0.0 <= self.lbp_damping < 1.0:
            raise DomainError(f"damping {self.lbp_damping} outside [0, 1)")
        if self.recycle_budget < 0:
            raise DomainError("recycling budget must be nonnegative")
        if self.prune_threshold < 0 or not 0.0 <= self.report_threshold <= 1.0:
            raise DomainError("pruning/reporting thresholds invalid")
        if self.max_components < 1 or self.merge_threshold < 0:
            raise DomainError("mixture reduction settings invalid")


@dataclass
class Estimate:
    track_id: int
    existence: float
    mean: np.ndarray
    cov: np.ndarray


@dataclass
class ScanRecord:
    scan_index: int
    n_measurements: int
    n_clusters: int
    n_hypotheses: int
    method: str
    iterations: int
    converged: bool
    residual: float
    forced_claims: int
    map_log_weight: float | None
    transfer_mass: float
    recycle: dict[str, float]
    pruned_mass: float
    pruned_count: int
    degenerate_count: int
    balance: dict[str, float]
    estimates: list[Estimate]
    n_tracks: int
    grid_mass: float


@dataclass
class FilterState:
    model: ModelBundle
    params: FilterParams
    grid: GridIntensity
    tracks: list[Track]
    scan_index: int = 0
    next_track_id: int = 0
    stencils: list[np.ndarray] = field(default_factory=list)

    @property
    def track_mass(self) -> float:
        return float(sum(t.existence for t in self.tracks))


def initialize(
    model: ModelBundle,
    params: FilterParams | None = None,
    grid: GridIntensity | None = None,
    tracks: list[Track] | None = None,
    cold_start: bool = False,
) -> FilterState:
    """Fresh filter state: steady-state unknown-target grid (or an all-zero
    grid on a cold start), no tracks unless seeded explicitly."""
    params = params or FilterParams()
    params.validate()
    if grid is None:
        grid = zero_intensity(model.region) if cold_start else steady_state(model)[0]
    tracks = list(tracks) if tracks else []
    next_id = max((t.track_id for t in tracks), default=-1) + 1
    return FilterState(
        model, params, grid, tracks,
        scan_index=0, next_track_id=next_id,
        stencils=transport_stencils(model),
    )


def _gate_radius(state: FilterState) -> float:
    p = state.params
    if p.gate_radius is not None:
        return p.gate_radius
    return gate_threshold(p.gate_prob, state.model.sensor.meas_dim)


def _as_measurements(measurements, model: ModelBundle) -> np.ndarray:
    z = np.asarray(measurements, dtype=float)
    if z.size == 0:
        return np.zeros((0, model.sensor.meas_dim))
    return z.reshape(-1, model.sensor.meas_dim)


def _solve_marginals(state: FilterState, scan: ScanAssociation):
    p = state.params
    marginals = clustered_marginals(
        scan.problem, method=p.association,
        tol=p.lbp_tol, max_iter=p.lbp_max_iter, damping=p.lbp_damping,
    )
    if p.association == "lbp" and not marginals.converged:
        raise ConvergenceError(
            f"association residual {marginals.residual:.3e} above {p.lbp_tol:.1e} "
            f"after {marginals.iterations} iterations",
            scan=state.scan_index,
        )
    return marginals


def _reduced(state: FilterState, mixture: GaussianMixture | None) -> GaussianMixture | None:
    if mixture is None:
        return None
    return mixture_reduce(mixture, state.params.max_components, state.params.merge_threshold)


def _finish_scan(
    state: FilterState,
    collapsed: list[Track],
    next_id: int,
    grid_thinned: GridIntensity,
    pred_track_mass: float,
    record_kwargs: dict,
    start_total: float,
    grid_report: dict,
    thinned_mass: float,
    track_decay: float,
) -> tuple[FilterState, ScanRecord]:
    """Shared tail of both stepping variants: recycle, prune, extract,
    close the expected-count balance."""
    p = state.params
    assoc_gain = sum(t.existence for t in collapsed) - pred_track_mass

    decision = select_recycle(collapsed, p.recycle_budget)
    kept, grid_out, rec_report = recycle(collapsed, decision, grid_thinned)
    survivors = [t for t in kept if t.existence >= p.prune_threshold]
    pruned = [t for t in kept if t.existence < p.prune_threshold]
    pruned_mass = float(sum(t.existence for t in pruned))

    end_total = grid_out.mass + sum(t.existence for t in survivors)
    grid_decay = grid_report["prior_mass"] * (1.0 - grid_report["survival"])
    balance = {
        "start": start_total,
        "grid_decay": grid_decay,
        "track_decay": track_decay,
        "birth": grid_report["birth_mass"],
        "leakage": grid_report["leakage"],
        "thinning": thinned_mass,
        "association_gain": assoc_gain,
        "recycle_truncated": rec_report["truncated_mass"],
        "pruned": pruned_mass,
        "end": end_total,
    }
    balance["closure"] = end_total - (
        start_total - grid_decay - track_decay + balance["birth"]
        - balance["leakage"] - thinned_mass + assoc_gain
        - balance["recycle_truncated"] - pruned_mass
    )

    new_state = replace(
        state, grid=grid_out, tracks=survivors,
        scan_index=state.scan_index + 1, next_track_id=next_id,
    )
    record = ScanRecord(
        scan_index=state.scan_index,
        recycle=rec_report,
        pruned_mass=pruned_mass,
        pruned_count=len(pruned),
        degenerate_count=sum(1 for t in collapsed if t.degenerate),
        balance=balance,
        estimates=extract_estimates(survivors, p.report_threshold),
        n_tracks=len(survivors),
        grid_mass=grid_out.mass,
        **record_kwargs,
    )
    return new_state, record


def step(state: FilterState, measurements) -> tuple[FilterState, ScanRecord]:
    """Process one scan and return the new state plus its diagnostics."""
    model, p = state.model, state.params
    z = _as_measurements(measurements, model)
    m = z.shape[0]
    start_total = state.grid.mass + state.track_mass

    grid_pred, grid_report = predict_intensity(state.grid, model, state.stencils)
    tracks_pred = [predict_track(t, model.motion) for t in state.tracks]
    pred_track_mass = float(sum(t.existence for t in tracks_pred))
    track_decay = state.track_mass - pred_track_mass

    scan = build_association_problem(tracks_pred, z, grid_pred, model, _gate_radius(state))
    grid_thinned = update_missed(grid_pred, model.sensor.detection_prob)
    thinned_mass = grid_pred.mass - grid_thinned.mass

    marginals = _solve_marginals(state, scan)
    n_clusters = len(split_clusters(scan.problem))

    hyps = scan.hyps
    map_log_weight: float | None = None
    transfer_mass = 0.0
    if p.coalescence and m > 0 and tracks_pred:
        assignment = map_assignment(scan.problem)
        map_log_weight = assignment.log_weight
        solution = solve_transfer(scan.problem, marginals, assignment, scan.det_existence())
        transfer_mass = solution.objective
        marginals, hyps = apply_transfer(hyps, marginals, solution)

    collapsed: list[Track] = []
    next_id = state.next_track_id
    for k, track in enumerate(tracks_pred):
        q, mixture, flagged = collapse_track(hyps[k], marginals.track_miss[k], marginals.track_det[k])
        collapsed.append(Track(
            track.track_id, q, _reduced(state, mixture),
            track.origin_scan, track.origin_measurement,
            degenerate=flagged or track.degenerate,
        ))
    n = len(tracks_pred)
    for j in range(m):
        q, mixture, flagged = collapse_track(
            hyps[n + j], marginals.track_miss[n + j], marginals.track_det[n + j]
        )
        collapsed.append(Track(
            next_id, q, _reduced(state, mixture),
            origin_scan=state.scan_index, origin_measurement=j,
            degenerate=flagged,
        ))
        next_id += 1

    record_kwargs = dict(
        n_measurements=m, n_clusters=n_clusters,
        n_hypotheses=sum(len(h) for h in hyps),
        method=marginals.method, iterations=marginals.iterations,
        converged=marginals.converged, residual=marginals.residual,
        forced_claims=len(marginals.forced_pairs),
        map_log_weight=map_log_weight, transfer_mass=transfer_mass,
    )
    return _finish_scan(
        state, collapsed, next_id, grid_thinned, pred_track_mass,
        record_kwargs, start_total, grid_report, thinned_mass, track_decay,
    )


def measurement_row_track(
    hyps: list[dict[int, Hypothesis]], marginals: AssociationMarginals, j: int
) -> tuple[float, GaussianMixture | None, bool]:
    """Bernoulli for the row track owned by measurement j.

    Existence mixes every row's hypothesis for measurement j through the
    measurement-side marginal; the pdf is the matching mixture. Returns
    (existence, mixture, degenerate) in the same shape as ``collapse_track``.
    """
    weights: list[float] = []
    comps: list = []
    q_row = 0.0
    fallback = None
    for i, track_hyps in enumerate(hyps):
        hyp = track_hyps.get(j)
        if hyp is None:
            continue
        fallback = fallback or hyp.pdf
        mass = float(marginals.meas_track[j, i]) * hyp.existence
        q_row += mass
        if mass > 0.0 and hyp.pdf is not None:
            pdf = hyp.pdf.normalized()
            weights.extend((mass * pdf.weights).tolist())
            comps.extend(pdf.components)
    if comps:
        return min(q_row, 1.0), GaussianMixture(np.asarray(weights), comps).normalized(), False
    return min(q_row, 1.0), fallback, True


def step_member(state: FilterState, measurements) -> tuple[FilterState, ScanRecord]:
    """Measurement-oriented stepping variant.

    One output track per measurement (existence mixes every row's detected
    hypothesis through the measurement-side marginals) plus one per existing
    track's missed-detection hypothesis. Identities do not persist: every
    output track gets a fresh id each scan. No probability transfer."""
    model, p = state.model, state.params
    z = _as_measurements(measurements, model)
    m = z.shape[0]
    start_total = state.grid.mass + state.track_mass

    grid_pred, grid_report = predict_intensity(state.grid, model, state.stencils)
    tracks_pred = [predict_track(t, model.motion) for t in state.tracks]
    pred_track_mass = float(sum(t.existence for t in tracks_pred))
    track_decay = state.track_mass - pred_track_mass

    scan = build_association_problem(tracks_pred, z, grid_pred, model, _gate_radius(state))
    grid_thinned = update_missed(grid_pred, model.sensor.detection_prob)
    thinned_mass = grid_pred.mass - grid_thinned.mass

    marginals = _solve_marginals(state, scan)
    n_clusters = len(split_clusters(scan.problem))

    collapsed: list[Track] = []
    next_id = state.next_track_id
    for k, track in enumerate(tracks_pred):
        miss_hyp = scan.hyps[k][MISS]
        q = float(marginals.track_miss[k]) * miss_hyp.existence
        collapsed.append(Track(
            next_id, min(q, 1.0), miss_hyp.pdf,
            origin_scan=state.scan_index, origin_measurement=MISS,
            degenerate=track.degenerate,
        ))
        next_id += 1
    for j in range(m):
        q_row, mixture, flagged = measurement_row_track(scan.hyps, marginals, j)
        collapsed.append(Track(
            next_id, q_row, _reduced(state, mixture),
            origin_scan=state.scan_index, origin_measurement=j,
            degenerate=flagged,
        ))
        next_id += 1

    record_kwargs = dict(
        n_measurements=m, n_clusters=n_clusters,
        n_hypotheses=sum(len(h) for h in scan.hyps),
        method=marginals.method, iterations=marginals.iterations,
        converged=marginals.converged, residual=marginals.residual,
        forced_claims=len(marginals.forced_pairs),
        map_log_weight=None, transfer_mass=0.0,
    )
    return _finish_scan(
        state, collapsed, next_id, grid_thinned, pred_track_mass,
        record_kwargs, start_total, grid_report, thinned_mass, track_decay,
    )


def run_scans(
    state: FilterState, scans, member: bool = False
) -> tuple[FilterState, list[ScanRecord]]:
    stepper = step_member if member else step
    records = []
    for z in scans:
        state, record = stepper(state, z)
        records.append(record)
    return state, records


def extract_estimates(state: FilterState | list[Track], threshold: float) -> list[Estimate]:
    """Point estimates for tracks at or above the reporting threshold.

    Accepts a filter state or a bare track list."""
    tracks = state.tracks if isinstance(state, FilterState) else state
    out = []
    for t in tracks:
        if t.existence >= threshold and t.pdf is not None:
            mean, cov = mixture_moments(t.pdf)
            out.append(Estimate(t.track_id, t.existence, mean, cov))
    return out


def validate_state(state: FilterState) -> None:
    """Invariant sweep; raises on violation."""
    if (state.grid.cells < 0).any():
        raise InvariantViolation("negative grid intensity")
    seen: set[int] = set()
    for t in state.tracks:
        if t.track_id in seen:
            raise InvariantViolation(f"duplicate track id {t.track_id}")
        seen.add(t.track_id)
        if not 0.0 <= t.existence <= 1.0:
            raise InvariantViolation(f"track {t.track_id}: existence {t.existence}")
        if t.pdf is not None:
            w = t.pdf.weights
            if (w < 0).any() or abs(float(w.sum()) - 1.0) > 1e-6:
                raise InvariantViolation(f"track {t.track_id}: pdf weights not normalized")
