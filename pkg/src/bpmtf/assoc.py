"""Measurement-to-track association by loopy belief propagation.

The association problem couples every track (existing tracks plus one
candidate track per measurement) to the measurements it might explain. Joint
association events assign each track a claim (one measurement or none) such
that every measurement is claimed by exactly one track; a measurement's own
candidate track absorbs the false-alarm / new-target explanation. Marginal
claim probabilities are computed either by damped Jacobi belief propagation
(scalable, approximate on loopy problems, exact on trees) or by an exact
subset-sum recursion (exponential in the measurement count, guarded).

Structurally forced claims (a measurement whose only positive-weight
candidate is a single track, or a track that cannot miss and has a single
candidate) are peeled off exactly before message passing, which keeps every
message denominator strictly positive afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product as _iter_product

import numpy as np

from .errors import CapacityError, DomainError, NumericalError

_EXACT_GUARD = 12
_DUALITY_GUARD = 300000


@dataclass
class AssociationProblem:
    """Weights of one scan's association problem.

    Rows 0..n_existing-1 are existing tracks; row n_existing + j is the
    candidate (new) track for measurement j, whose only claimable measurement
    is j itself and whose no-claim weight is 1.
    """

    miss_weight: np.ndarray         # (n_tracks,)
    det_weight: np.ndarray          # (n_tracks, n_measurements)
    n_existing: int

    def __post_init__(self):
        self.miss_weight = np.atleast_1d(np.asarray(self.miss_weight, dtype=float))
        det = np.asarray(self.det_weight, dtype=float)
        if det.ndim != 2:
            det = det.reshape(self.miss_weight.size, -1)
        if det.shape[0] != self.miss_weight.size:
            raise DomainError("det_weight row count must match miss_weight length")
        self.det_weight = det

    @property
    def n_tracks(self) -> int:
        return self.miss_weight.size

    @property
    def n_measurements(self) -> int:
        return self.det_weight.shape[1]

    def new_track_row(self, j: int) -> int:
        return self.n_existing + j

    def validate(self) -> None:
        n, m = self.n_tracks, self.n_measurements
        if n != self.n_existing + m:
            raise DomainError(
                f"expected {self.n_existing} existing + {m} candidate rows, got {n}"
            )
        if not np.all(np.isfinite(self.miss_weight)) or not np.all(np.isfinite(self.det_weight)):
            raise DomainError("association weights must be finite")
        if np.any(self.miss_weight < 0) or np.any(self.det_weight < 0):
            raise DomainError("association weights must be nonnegative")
        for j in range(m):
            row = self.new_track_row(j)
            if self.miss_weight[row] <= 0.0:
                raise DomainError(f"candidate track for measurement {j} must have positive no-claim weight")
            mask = self.det_weight[row] > 0
            if mask.sum() != 1 or not mask[j]:
                raise DomainError(
                    f"candidate track for measurement {j} must claim exactly measurement {j}"
                )
        for i in range(self.n_existing):
            candidates = int((self.det_weight[i] > 0).sum())
            if self.miss_weight[i] == 0.0 and candidates >= 2:
                raise DomainError(
                    f"track {i}: zero miss weight with {candidates} candidate measurements "
                    "is ambiguous; inference undefined"
                )
            if self.miss_weight[i] == 0.0 and candidates == 0:
                raise DomainError(f"track {i}: zero miss weight and no candidates (no valid event)")


@dataclass
class AssociationMarginals:
    track_miss: np.ndarray          # (n_tracks,)
    track_det: np.ndarray           # (n_tracks, n_measurements)
    meas_track: np.ndarray          # (n_measurements, n_tracks)
    iterations: int
    converged: bool
    residual: float
    method: str = "lbp"
    forced_pairs: list[tuple[int, int]] = field(default_factory=list)


def _forced_claims(problem: AssociationProblem):
    """Peel off structurally certain claims; returns the reduction."""
    miss = problem.miss_weight.copy()
    det = problem.det_weight.copy()
    n, m = problem.n_tracks, problem.n_measurements
    track_active = np.ones(n, dtype=bool)
    meas_active = np.ones(m, dtype=bool)
    forced: list[tuple[int, int]] = []

    changed = True
    while changed:
        changed = False
        for j in range(m):
            if not meas_active[j]:
                continue
            cands = np.flatnonzero(track_active & (det[:, j] > 0))
            if cands.size == 0:
                raise DomainError(f"measurement {j} has no remaining candidate (no valid event)")
            if cands.size == 1:
                i = int(cands[0])
                forced.append((i, j))
                track_active[i] = False
                meas_active[j] = False
                det[i, :] = 0.0
                det[:, j] = 0.0
                changed = True
        for i in range(n):
            if not track_active[i] or miss[i] > 0.0:
                continue
            cands = np.flatnonzero(meas_active & (det[i] > 0))
            if cands.size == 0:
                raise DomainError(f"track {i} cannot miss and has no remaining candidate")
            if cands.size == 1:
                j = int(cands[0])
                forced.append((i, j))
                track_active[i] = False
                meas_active[j] = False
                det[i, :] = 0.0
                det[:, j] = 0.0
                changed = True
    return miss, det, track_active, meas_active, forced


def lbp_marginals(
    problem: AssociationProblem,
    tol: float = 1e-6,
    max_iter: int = 1000,
    damping: float = 0.0,
) -> AssociationMarginals:
    """Scalar belief propagation on the track/measurement bipartite graph.

    Jacobi (synchronous) updates, messages initialized to one, optional
    log-space damping. The residual is the largest absolute change of any log
    message between sweeps; convergence means residual < tol.
    """
    problem.validate()
    if not 0.0 <= damping < 1.0:
        raise DomainError("damping must lie in [0, 1)")
    n, m = problem.n_tracks, problem.n_measurements
    miss, det, track_active, meas_active, forced = _forced_claims(problem)

    ti = np.flatnonzero(track_active)
    mj = np.flatnonzero(meas_active)
    w0 = miss[ti]
    w = det[np.ix_(ti, mj)]
    mask = w > 0.0

    iterations = 0
    residual = 0.0
    converged = True
    if ti.size and mj.size and mask.any():
        mu = np.ones_like(w)
        nu = np.zeros_like(w)
        converged = False
        for iterations in range(1, max_iter + 1):
            weighted = w * mu
            denom_nu = w0[:, None] + weighted.sum(axis=1, keepdims=True) - weighted
            if np.any(denom_nu[mask] <= 0.0):
                raise NumericalError("belief propagation: nonpositive track-side denominator")
            nu_new = np.where(mask, np.divide(w, denom_nu, where=denom_nu > 0), 0.0)
            denom_mu = nu_new.sum(axis=0, keepdims=True) - nu_new
            if np.any(denom_mu[mask] <= 0.0):
                raise NumericalError("belief propagation: nonpositive measurement-side denominator")
            mu_cand = np.where(mask, np.divide(1.0, denom_mu, where=denom_mu > 0), 0.0)
            if damping > 0.0:
                mu_new = np.where(mask, mu_cand ** (1.0 - damping) * mu ** damping, 0.0)
            else:
                mu_new = mu_cand
            with np.errstate(divide="ignore", invalid="ignore"):
                delta_mu = np.abs(np.log(mu_new[mask]) - np.log(mu[mask]))
                delta_nu = np.abs(np.log(nu_new[mask]) - np.log(nu[mask])) if iterations > 1 else np.array([0.0])
            residual = float(max(delta_mu.max(initial=0.0), delta_nu.max(initial=0.0)))
            mu, nu = mu_new, nu_new
            if residual < tol:
                converged = True
                break
    else:
        mu = np.ones((ti.size, mj.size))
        nu = np.zeros((ti.size, mj.size))

    track_miss = np.zeros(n)
    track_det = np.zeros((n, m))
    meas_track = np.zeros((m, n))

    if ti.size:
        unnorm_miss = w0
        unnorm_det = w * mu
        norm = unnorm_miss + unnorm_det.sum(axis=1)
        track_miss[ti] = unnorm_miss / norm
        if mj.size:
            track_det[np.ix_(ti, mj)] = unnorm_det / norm[:, None]
    if mj.size and ti.size:
        col = nu.sum(axis=0)
        good = col > 0
        meas_block = np.zeros_like(nu.T)
        meas_block[good] = (nu.T[good] / col[good, None])
        meas_track[np.ix_(mj, ti)] = meas_block

    for i, j in forced:
        track_miss[i] = 0.0
        track_det[i, :] = 0.0
        track_det[i, j] = 1.0
        meas_track[j, :] = 0.0
        meas_track[j, i] = 1.0

    return AssociationMarginals(
        track_miss, track_det, meas_track, iterations, converged, residual,
        method="lbp", forced_pairs=forced,
    )


def _partition_sums(w0: np.ndarray, w: np.ndarray, skip: int | None = None) -> np.ndarray:
    """Subset recursion: result[S] = total weight of events in which the
    non-skipped tracks claim exactly the measurement set S."""
    m = w.shape[1]
    size = 1 << m
    acc = np.zeros(size)
    acc[0] = 1.0
    idx = np.arange(size)
    for i in range(w.shape[0]):
        if i == skip:
            continue
        nxt = acc * w0[i]
        for j in np.flatnonzero(w[i] > 0):
            bit = 1 << int(j)
            has = (idx & bit) != 0
            nxt[has] += w[i, int(j)] * acc[idx[has] ^ bit]
        acc = nxt
    return acc


def exact_marginals(problem: AssociationProblem) -> AssociationMarginals:
    """Exact claim marginals by leave-one-out subset recursion.

    Cost grows as 2^n_measurements; both track and measurement counts are
    guarded at 12.
    """
    problem.validate()
    n, m = problem.n_tracks, problem.n_measurements
    if problem.n_existing > _EXACT_GUARD or m > _EXACT_GUARD:
        raise CapacityError(
            f"exact marginals guarded at {_EXACT_GUARD} tracks/measurements "
            f"(got {problem.n_existing} existing, {m} measurements)"
        )
    # scale weights per track for conditioning; marginals are scale-invariant
    scale = np.maximum(problem.miss_weight, problem.det_weight.max(axis=1, initial=0.0))
    scale[scale <= 0.0] = 1.0
    w0 = problem.miss_weight / scale
    w = problem.det_weight / scale[:, None]

    full = (1 << m) - 1
    z = _partition_sums(w0, w)[full]
    if z <= 0.0:
        raise DomainError("association problem admits no valid joint event")

    track_miss = np.zeros(n)
    track_det = np.zeros((n, m))
    for i in range(n):
        loo = _partition_sums(w0, w, skip=i)
        track_miss[i] = w0[i] * loo[full]
        for j in np.flatnonzero(w[i] > 0):
            track_det[i, int(j)] = w[i, int(j)] * loo[full ^ (1 << int(j))]
    norm = track_miss + track_det.sum(axis=1)
    track_miss /= norm
    track_det /= norm[:, None]

    meas_track = np.zeros((m, n))
    for j in range(m):
        col = track_det[:, j]
        total = col.sum()
        if total <= 0.0:
            raise NumericalError(f"measurement {j} received zero claim mass")
        meas_track[j] = col / total

    return AssociationMarginals(
        track_miss, track_det, meas_track, 0, True, 0.0, method="exact"
    )


def check_association_duality(problem: AssociationProblem) -> tuple[float, float]:
    """Two routes to the association partition sum.

    Route one sums track-claim products over valid joint events directly.
    Route two sums over all claim vectors and all measurement-side pointer
    vectors with the literal pairwise consistency indicator, factorized per
    measurement. Both are returned; they agree identically when the pairwise
    indicator formulation is faithful to the event space.
    """
    problem.validate()
    n, m = problem.n_tracks, problem.n_measurements
    options = [(-1, *np.flatnonzero(problem.det_weight[i] > 0).tolist()) for i in range(n)]
    combos = 1
    for opts in options:
        combos *= len(opts)
    if combos > _DUALITY_GUARD:
        raise CapacityError(f"duality check guarded at {_DUALITY_GUARD} claim combinations")

    event_sum = 0.0
    consistency_sum = 0.0
    for claims in _iter_product(*options):
        weight = 1.0
        for i, a in enumerate(claims):
            weight *= problem.miss_weight[i] if a == -1 else problem.det_weight[i, a]
        if weight == 0.0:
            continue
        counts = np.zeros(m, dtype=int)
        for a in claims:
            if a >= 0:
                counts[a] += 1
        if m == 0 or np.all(counts == 1):
            event_sum += weight
        factor = 1.0
        for j in range(m):
            s_j = 0.0
            for b in range(n):
                ok = all((claims[i] == j) == (b == i) for i in range(n))
                if ok:
                    s_j += 1.0
            factor *= s_j
        consistency_sum += weight * factor
    return event_sum, consistency_sum


def lemma1_check(
    n: int, m: int, f0: np.ndarray, F: np.ndarray, tol: float = 1e-12
) -> bool:
    """Combinatorial equivalence behind the pairwise association factorization.

    Inputs describe n set functions that vanish on sets of two or more
    elements, over a ground set of m elements: ``f0[j]`` prices element j
    when it lands in the unassigned block, ``F[i, 0]`` is function i's value
    on the empty set, and ``F[i, 1 + j]`` its value on the singleton {j}.

    Route one sums, over every way of splitting the ground set into the
    unassigned block plus one (possibly empty) block per function, the
    product of f0 over the unassigned block and each function's value on its
    realized block. Route two sums over all pairs of per-function claims and
    per-element owner pointers, gated by the literal pairwise consistency
    indicator. Returns True when the two sums agree within tol (relative to
    their magnitude).
    """
    if not (0 <= n <= 3 and 0 <= m <= 3):
        raise CapacityError("equivalence check guarded at 3 functions and 3 elements")
    f0 = np.asarray(f0, dtype=float).reshape(m)
    F = np.asarray(F, dtype=float).reshape(n, m + 1)

    partition_sum = 0.0
    for blocks in _iter_product(range(n + 1), repeat=m):
        term = 1.0
        for j, k in enumerate(blocks):
            if k == 0:
                term *= f0[j]
        for i in range(n):
            members = [j for j, k in enumerate(blocks) if k == i + 1]
            if len(members) == 0:
                term *= F[i, 0]
            elif len(members) == 1:
                term *= F[i, 1 + members[0]]
            else:
                term = 0.0     # the set functions vanish beyond singletons
                break
        partition_sum += term

    index_sum = 0.0
    for claims in _iter_product(range(-1, m), repeat=n):
        for owners in _iter_product(range(n + 1), repeat=m):
            consistent = all(
                (claims[i] == j) == (owners[j] == i + 1)
                for i in range(n) for j in range(m)
            )
            if not consistent:
                continue
            term = 1.0
            for i, a in enumerate(claims):
                term *= F[i, 0] if a == -1 else F[i, 1 + a]
            for j, b in enumerate(owners):
                if b == 0:
                    term *= f0[j]
            index_sum += term

    scale = max(1.0, abs(partition_sum), abs(index_sum))
    return abs(partition_sum - index_sum) <= tol * scale


def make_random_problem(
    rng: np.random.Generator,
    max_tracks: int = 5,
    max_measurements: int = 5,
    edge_prob: float = 0.7,
    min_tracks: int = 0,
    min_measurements: int = 0,
) -> AssociationProblem:
    """Random well-posed problem for batteries: positive miss weights, random
    gating pattern, positive candidate-track weights."""
    n = int(rng.integers(min_tracks, max_tracks + 1))
    m = int(rng.integers(min_measurements, max_measurements + 1))
    miss = np.concatenate([rng.uniform(0.05, 1.0, size=n), np.ones(m)])
    det = np.zeros((n + m, m))
    if m:
        det[:n] = rng.uniform(0.0, 1.0, size=(n, m)) * (rng.random((n, m)) < edge_prob)
        det[n:, :] = np.diag(rng.uniform(0.05, 1.0, size=m))
    return AssociationProblem(miss, det, n_existing=n)


@dataclass
class Cluster:
    """One connected component of the association graph: a set of existing
    tracks, the measurements they can reach, and the self-contained
    sub-problem over them (candidate rows included)."""

    existing_rows: list[int]
    measurements: list[int]
    problem: AssociationProblem


def split_clusters(problem: AssociationProblem) -> list[Cluster]:
    """Connected components over the bipartite positive-weight graph.

    Every measurement's component contains its candidate track. Existing
    tracks with no positive claim weight form their own single-track
    clusters (with an empty measurement set)."""
    n, m = problem.n_existing, problem.n_measurements
    det = problem.det_weight
    track_adj = [np.flatnonzero(det[i] > 0).tolist() for i in range(n)]
    meas_adj = [np.flatnonzero(det[:n, j] > 0).tolist() for j in range(m)]

    track_seen = np.zeros(n, dtype=bool)
    meas_seen = np.zeros(m, dtype=bool)
    clusters: list[Cluster] = []

    def build(rows: list[int], cols: list[int]) -> Cluster:
        rows = sorted(rows)
        cols = sorted(cols)
        pos = {j: k for k, j in enumerate(cols)}
        n_sub, m_sub = len(rows), len(cols)
        miss = np.ones(n_sub + m_sub)
        sub_det = np.zeros((n_sub + m_sub, m_sub))
        for k, i in enumerate(rows):
            miss[k] = problem.miss_weight[i]
            for j in track_adj[i]:
                sub_det[k, pos[j]] = det[i, j]
        for k, j in enumerate(cols):
            row = problem.new_track_row(j)
            miss[n_sub + k] = problem.miss_weight[row]
            sub_det[n_sub + k, k] = det[row, j]
        return Cluster(rows, cols, AssociationProblem(miss, sub_det, n_existing=n_sub))

    for seed in range(m):
        if meas_seen[seed]:
            continue
        rows: list[int] = []
        cols: list[int] = []
        stack = [("m", seed)]
        meas_seen[seed] = True
        while stack:
            kind, idx = stack.pop()
            if kind == "m":
                cols.append(idx)
                for i in meas_adj[idx]:
                    if not track_seen[i]:
                        track_seen[i] = True
                        stack.append(("t", i))
            else:
                rows.append(idx)
                for j in track_adj[idx]:
                    if not meas_seen[j]:
                        meas_seen[j] = True
                        stack.append(("m", j))
        clusters.append(build(rows, cols))
    for i in range(n):
        if not track_seen[i]:
            clusters.append(build([i], []))
    return clusters


def clustered_marginals(
    problem: AssociationProblem,
    method: str = "lbp",
    tol: float = 1e-6,
    max_iter: int = 1000,
    damping: float = 0.0,
) -> AssociationMarginals:
    """Solve each connected component independently and reassemble the
    global marginals. Identical results to one joint solve, with the exact
    method's capacity guard applied per component rather than globally."""
    if method not in ("lbp", "exact"):
        raise DomainError(f"unknown association method {method!r}")
    problem.validate()
    n, m = problem.n_existing, problem.n_measurements
    n_tracks = problem.n_tracks
    track_miss = np.ones(n_tracks)
    track_det = np.zeros((n_tracks, m))
    meas_track = np.zeros((m, n_tracks))
    iterations = 0
    converged = True
    residual = 0.0
    forced_pairs: list[tuple[int, int]] = []

    for cluster in split_clusters(problem):
        sub = cluster.problem
        if method == "exact":
            marg = exact_marginals(sub)
        else:
            marg = lbp_marginals(sub, tol=tol, max_iter=max_iter, damping=damping)
        rows = cluster.existing_rows
        cols = cluster.measurements
        n_sub = len(rows)
        global_rows = rows + [problem.new_track_row(j) for j in cols]
        for k, gi in enumerate(global_rows):
            track_miss[gi] = marg.track_miss[k]
            for c, gj in enumerate(cols):
                track_det[gi, gj] = marg.track_det[k, c]
        for c, gj in enumerate(cols):
            for k, gi in enumerate(global_rows):
                meas_track[gj, gi] = marg.meas_track[c, k]
        iterations = max(iterations, marg.iterations)
        converged = converged and marg.converged
        residual = max(residual, marg.residual)
        for (si, sj) in marg.forced_pairs:
            gi = global_rows[si] if si < len(global_rows) else si
            forced_pairs.append((gi, cols[sj]))

    return AssociationMarginals(
        track_miss, track_det, meas_track,
        iterations=iterations, converged=converged, residual=residual,
        method=method, forced_pairs=forced_pairs,
    )
