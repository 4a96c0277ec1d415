"""Coalescence avoidance by probability transfer toward the MAP assignment.

After marginal association, closely spaced tracks hold near-identical claim
distributions and their collapsed pdfs smear together. The remedy moves claim
probability toward each track's MAP claim, as much as the joint constraints
allow: per-track claim distributions stay normalized, per-measurement claim
mass is conserved across tracks, missed-detection probability is untouchable,
and no hypothesis may lose more existence-weighted mass than it has. The
optimal transfer maximizes the total mass moved into MAP claims and is
computed exactly as a min-cost circulation. Applying it rescales hypothesis
existences and rebuilds the pdf of each receiving hypothesis as the
nonnegative mixture of the donors' pdfs, which conserves both each track's
existence probability and the global intensity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assignment import auction_assignment
from .assoc import AssociationMarginals, AssociationProblem, _forced_claims
from .errors import InvariantViolation
from .flow import MinCostFlow
from .gaussians import GaussianMixture
from .tracks import MISS, Hypothesis

_P_EPS = 1e-14


@dataclass
class MapAssignment:
    claims: np.ndarray          # (n_tracks,) MISS or measurement index
    log_weight: float

    def owner_of(self, j: int) -> int:
        owners = np.flatnonzero(self.claims == j)
        if owners.size != 1:
            raise InvariantViolation(f"measurement {j} claimed by {owners.size} tracks")
        return int(owners[0])


@dataclass
class TransferSolution:
    delta: np.ndarray           # (n_tracks, n_measurements), zero at miss
    objective: float            # total probability moved into MAP claims


def map_assignment(problem: AssociationProblem) -> MapAssignment:
    """Most probable joint association event via auction on the equivalent
    matching problem (rows: existing tracks + per-measurement slack; columns:
    measurements + per-track miss slots)."""
    problem.validate()
    _forced_claims(problem)     # surfaces structurally infeasible inputs
    n = problem.n_existing
    m = problem.n_measurements
    size = n + m
    benefit = np.full((size, size), -np.inf)
    with np.errstate(divide="ignore"):
        log_det = np.log(problem.det_weight)
        log_miss = np.log(problem.miss_weight)
    for i in range(n):
        benefit[i, :m] = log_det[i]
        benefit[i, m + i] = log_miss[i]
    for j in range(m):
        benefit[n + j, j] = log_det[n + j, j]
        benefit[n + j, m:] = 0.0

    claims = np.full(problem.n_tracks, MISS, dtype=int)
    if size:
        row_to_col = auction_assignment(benefit)
        for i in range(n):
            if row_to_col[i] < m:
                claims[i] = row_to_col[i]
        for j in range(m):
            if row_to_col[n + j] == j:
                claims[n + j] = j

    log_weight = 0.0
    for i, a in enumerate(claims):
        if a == MISS:
            if i < n:
                log_weight += float(log_miss[i])
        else:
            log_weight += float(log_det[i, a])
    for j in range(m):
        if not np.any(claims == j):
            raise InvariantViolation(f"MAP assignment left measurement {j} unclaimed")
    return MapAssignment(claims, log_weight)


def solve_transfer(
    problem: AssociationProblem,
    marginals: AssociationMarginals,
    assignment: MapAssignment,
    det_existence: np.ndarray,
) -> TransferSolution:
    """Maximal feasible probability transfer toward the MAP claims.

    Only tracks whose MAP claim is a measurement participate; each may gain at
    its MAP claim and lose at its other claims, capped by the claim's
    existence-weighted probability; per-measurement totals are conserved, so
    every unit of transfer travels a cycle of participating tracks. Solved as
    a min-cost circulation (gains priced -1), which maximizes the total gain.
    """
    n_tracks, m = problem.n_tracks, problem.n_measurements
    delta = np.zeros((n_tracks, m))
    claims = assignment.claims
    participating = np.flatnonzero((np.arange(n_tracks) < problem.n_existing) & (claims >= 0))
    if participating.size == 0 or m == 0:
        return TransferSolution(delta, 0.0)

    part = set(int(i) for i in participating)
    owner = {}
    for j in range(m):
        i = assignment.owner_of(j)
        if i in part:
            owner[j] = i

    loss_cells = []
    for i in participating:
        for j in np.flatnonzero(problem.det_weight[i] > 0):
            j = int(j)
            if j == claims[i] or j not in owner:
                continue
            cap = float(marginals.track_det[i, j] * det_existence[i, j])
            if cap > 0.0:
                loss_cells.append((int(i), j, cap))
    if not loss_cells:
        return TransferSolution(delta, 0.0)

    track_node = {int(i): k for k, i in enumerate(sorted(part))}
    col_used = sorted({j for _, j, _ in loss_cells})
    col_node = {j: len(track_node) + k for k, j in enumerate(col_used)}
    flow = MinCostFlow(len(track_node) + len(col_node))

    loss_arcs = []
    col_cap = {j: 0.0 for j in col_used}
    for i, j, cap in loss_cells:
        arc = flow.add_arc(track_node[i], col_node[j], cap, 0.0)
        loss_arcs.append((arc, i, j))
        col_cap[j] += cap
    gain_arcs = []
    for j in col_used:
        arc = flow.add_arc(col_node[j], track_node[owner[j]], col_cap[j], -1.0)
        gain_arcs.append((arc, owner[j], j))

    total_cost = flow.solve_circulation()

    for arc, i, j in loss_arcs:
        delta[i, j] -= flow.flow(arc)
    for arc, i, j in gain_arcs:
        delta[i, j] += flow.flow(arc)
    objective = -total_cost

    row_sums = np.abs(delta.sum(axis=1))
    col_sums = np.abs(delta.sum(axis=0))
    if row_sums.max(initial=0.0) > 1e-9 or col_sums.max(initial=0.0) > 1e-9:
        raise InvariantViolation("transfer violates per-track or per-measurement conservation")
    return TransferSolution(delta, objective)


def apply_transfer(
    hyps: list[dict[int, Hypothesis]],
    marginals: AssociationMarginals,
    solution: TransferSolution,
) -> tuple[AssociationMarginals, list[dict[int, Hypothesis]]]:
    """Apply a transfer: shift claim probabilities, rescale hypothesis
    existences so per-claim existence mass moves with the probability, and
    rebuild each receiving hypothesis pdf as the donor-weighted mixture.

    Per-track existence and the global existence-weighted intensity are both
    conserved exactly (checked)."""
    delta = solution.delta
    n_tracks, m = delta.shape
    new_det = marginals.track_det + delta
    if new_det.min(initial=0.0) < -1e-9:
        raise InvariantViolation("transfer drove a claim probability negative")
    new_det = np.maximum(new_det, 0.0)

    out_hyps: list[dict[int, Hypothesis]] = []
    for i, track_hyps in enumerate(hyps):
        updated: dict[int, Hypothesis] = {}
        for a, hyp in track_hyps.items():
            if a == MISS:
                updated[a] = hyp
                continue
            d = float(delta[i, a])
            p_old = float(marginals.track_det[i, a])
            p_new = float(new_det[i, a])
            mass_old = p_old * hyp.existence
            mass_new = mass_old + d
            if p_new <= _P_EPS:
                updated[a] = Hypothesis(a, hyp.weight, 0.0, hyp.pdf)
                continue
            q_new = min(max(mass_new / p_new, 0.0), 1.0)
            pdf = hyp.pdf
            if d > 0.0 and mass_new > 0.0:
                weights = list(mass_old * hyp.pdf.normalized().weights)
                comps = list(hyp.pdf.normalized().components)
                for i2 in range(n_tracks):
                    gift = -float(delta[i2, a])
                    if i2 == i or gift <= 0.0:
                        continue
                    donor = hyps[i2][a].pdf.normalized()
                    weights.extend((gift * donor.weights).tolist())
                    comps.extend(donor.components)
                pdf = GaussianMixture(np.asarray(weights), comps).normalized()
            updated[a] = Hypothesis(a, hyp.weight, q_new, pdf)
        out_hyps.append(updated)

    meas_track = marginals.meas_track.copy()
    for j in range(m):
        col = new_det[:, j]
        total = col.sum()
        if total > 0.0:
            meas_track[j] = col / total

    for i in range(n_tracks):
        before = marginals.track_miss[i] * hyps[i][MISS].existence if MISS in hyps[i] else 0.0
        after = before
        for a, hyp in hyps[i].items():
            if a != MISS:
                before += marginals.track_det[i, a] * hyp.existence
        for a, hyp in out_hyps[i].items():
            if a != MISS:
                after += new_det[i, a] * hyp.existence
        if abs(before - after) > 1e-9:
            raise InvariantViolation(
                f"track {i}: existence not conserved by transfer ({before} -> {after})"
            )

    updated_marginals = AssociationMarginals(
        marginals.track_miss.copy(), new_det, meas_track,
        marginals.iterations, marginals.converged, marginals.residual,
        method=marginals.method, forced_pairs=list(marginals.forced_pairs),
    )
    return updated_marginals, out_hyps
