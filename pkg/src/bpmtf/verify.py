"""Built-in cross-checks runnable from the command line.

Each check exercises two independent routes to the same quantity inside the
package (message passing vs exact recursion, closed forms vs discrete
enumeration, transfer vs conservation laws) and reports the worst deviation
seen. The independent *external* oracles live in the test suite; this module
is the operational smoke battery.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assoc import (
    AssociationProblem,
    check_association_duality,
    exact_marginals,
    lbp_marginals,
    lemma1_check,
    make_random_problem,
)
from .coalescence import apply_transfer, map_assignment, solve_transfer
from .errors import BpmtfError
from .experiments import standard_scenario
from .filter import initialize, run_scans
from .finite_rfs import (
    bernoulli_rfs,
    convolve,
    kl_divergence,
    poisson_pmf,
    poisson_rfs,
)
from .gaussians import GaussianDensity, GaussianMixture, mixture_moments
from .io import dumps_record, scan_record_dict
from .recycling import bernoulli_poisson_kl, kl_subadditivity_check
from .sim import generate_scenario
from .tracks import MISS, Hypothesis


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def verify_association(
    n_problems: int = 200, seed: int = 20240, tol: float = 1e-9, max_iter: int = 10000
) -> CheckResult:
    """Belief propagation against the exact recursion on random problems:
    everything must converge, and the marginals must stay close."""
    rng = _rng(seed)
    worst = 0.0
    errs = []
    iters = []
    for _ in range(n_problems):
        problem = make_random_problem(rng, max_tracks=5, max_measurements=5)
        approx = lbp_marginals(problem, tol=tol, max_iter=max_iter)
        if not approx.converged:
            return CheckResult(
                "association", False,
                f"belief propagation failed to converge (residual {approx.residual:.2e})",
            )
        exact = exact_marginals(problem)
        err = float(np.abs(approx.track_miss - exact.track_miss).max(initial=0.0))
        if problem.n_measurements:
            err = max(err, float(np.abs(approx.track_det - exact.track_det).max()))
        errs.append(err)
        worst = max(worst, err)
        iters.append(approx.iterations)
    mean_err = float(np.mean(errs))
    ok = mean_err <= 0.05
    return CheckResult(
        "association", ok,
        f"{n_problems} problems converged; mean max error {mean_err:.4f}, "
        f"worst {worst:.4f}, mean iterations {np.mean(iters):.1f}",
    )


def verify_association_acyclic(n_problems: int = 200, seed: int = 20241) -> CheckResult:
    """On cycle-free problems message passing is exact; check to 1e-9."""
    rng = _rng(seed)
    worst = 0.0
    for _ in range(n_problems):
        n = int(rng.integers(1, 5))
        m = int(rng.integers(1, 5))
        miss = np.concatenate([rng.uniform(0.05, 1.0, n), np.ones(m)])
        det = np.zeros((n + m, m))
        for j in range(m):
            if rng.random() < 0.75:
                det[int(rng.integers(0, n)), j] = rng.uniform(0.05, 1.0)
            det[n + j, j] = rng.uniform(0.05, 1.0)
        problem = AssociationProblem(miss, det, n_existing=n)
        approx = lbp_marginals(problem, tol=1e-12, max_iter=10000)
        exact = exact_marginals(problem)
        err = float(np.abs(approx.track_miss - exact.track_miss).max(initial=0.0))
        err = max(err, float(np.abs(approx.track_det - exact.track_det).max(initial=0.0)))
        worst = max(worst, err)
    ok = worst <= 1e-9
    return CheckResult("association-acyclic", ok, f"worst error on cycle-free problems {worst:.2e}")


def verify_lemma1(draws_per_shape: int = 50, seed: int = 20245) -> CheckResult:
    """Partition sum vs indicator-factorized double sum, every shape up to
    three set functions and three elements."""
    rng = _rng(seed)
    failures = 0
    total = 0
    for n in range(4):
        for m in range(4):
            for _ in range(draws_per_shape):
                f0 = rng.uniform(0.1, 2.0, size=m)
                F = rng.uniform(0.1, 2.0, size=(n, m + 1))
                total += 1
                if not lemma1_check(n, m, f0, F):
                    failures += 1
    ok = failures == 0
    return CheckResult(
        "association-equivalence", ok,
        f"{total} instances across all shapes up to 3x3; {failures} mismatches",
    )


def verify_duality(n_problems: int = 100, seed: int = 20242, tol: float = 1e-12) -> CheckResult:
    """Sum over valid joint events vs the factorized consistency sum."""
    rng = _rng(seed)
    worst = 0.0
    for _ in range(n_problems):
        problem = make_random_problem(rng, max_tracks=3, max_measurements=3)
        events, consistency = check_association_duality(problem)
        scale = max(1.0, abs(events))
        worst = max(worst, abs(events - consistency) / scale)
    ok = worst <= tol
    return CheckResult("association-duality", ok, f"worst relative mismatch {worst:.2e}")


def _random_gaussian(rng: np.random.Generator) -> GaussianMixture:
    mean = rng.normal(0.0, 5.0, size=2)
    a = rng.normal(0.0, 1.0, size=(2, 2))
    cov = a @ a.T + 0.1 * np.eye(2)
    return GaussianMixture(np.array([1.0]), [GaussianDensity(mean, cov)])


def _random_scan(rng: np.random.Generator):
    problem = make_random_problem(rng, max_tracks=4, max_measurements=4,
                                  min_tracks=1, min_measurements=1)
    n, m = problem.n_existing, problem.n_measurements
    hyps: list[dict[int, Hypothesis]] = []
    det_existence = np.zeros((problem.n_tracks, m))
    for i in range(problem.n_tracks):
        row: dict[int, Hypothesis] = {}
        if i < n:
            row[MISS] = Hypothesis(MISS, problem.miss_weight[i],
                                   float(rng.uniform(0.0, 1.0)), _random_gaussian(rng))
        else:
            row[MISS] = Hypothesis(MISS, 1.0, 0.0, None)
        for j in np.flatnonzero(problem.det_weight[i] > 0):
            j = int(j)
            q = float(rng.uniform(0.2, 1.0)) if i < n else float(rng.uniform(0.0, 1.0))
            row[j] = Hypothesis(j, problem.det_weight[i, j], q, _random_gaussian(rng))
            det_existence[i, j] = q
        hyps.append(row)
    return problem, hyps, det_existence


def _intensity_moments(hyps, miss_p, det_p):
    weights = []
    comps = []
    for i, row in enumerate(hyps):
        for a, hyp in row.items():
            p = miss_p[i] if a == MISS else det_p[i, a]
            mass = p * hyp.existence
            if mass > 0.0 and hyp.pdf is not None:
                pdf = hyp.pdf.normalized()
                weights.extend((mass * pdf.weights).tolist())
                comps.extend(pdf.components)
    total = float(np.sum(weights))
    mean, cov = mixture_moments(GaussianMixture(np.asarray(weights) / total, comps))
    return total, mean, cov


def verify_transfer(n_instances: int = 200, seed: int = 20243) -> CheckResult:
    """Probability transfer conservation: per-track existence to 1e-10 and
    global intensity moments to 1e-9."""
    rng = _rng(seed)
    worst_track = 0.0
    worst_global = 0.0
    moved = 0
    for _ in range(n_instances):
        problem, hyps, det_existence = _random_scan(rng)
        marginals = exact_marginals(problem)
        assignment = map_assignment(problem)
        solution = solve_transfer(problem, marginals, assignment, det_existence)
        if solution.objective > 0:
            moved += 1
        new_marg, new_hyps = apply_transfer(hyps, marginals, solution)
        for i in range(problem.n_tracks):
            before = sum(
                (marginals.track_miss[i] if a == MISS else marginals.track_det[i, a]) * h.existence
                for a, h in hyps[i].items()
            )
            after = sum(
                (new_marg.track_miss[i] if a == MISS else new_marg.track_det[i, a]) * h.existence
                for a, h in new_hyps[i].items()
            )
            worst_track = max(worst_track, abs(before - after))
        t0, m0, c0 = _intensity_moments(hyps, marginals.track_miss, marginals.track_det)
        t1, m1, c1 = _intensity_moments(new_hyps, new_marg.track_miss, new_marg.track_det)
        worst_global = max(
            worst_global, abs(t0 - t1),
            float(np.abs(m0 - m1).max()), float(np.abs(c0 - c1).max()),
        )
    ok = worst_track <= 1e-10 and worst_global <= 1e-9
    return CheckResult(
        "transfer", ok,
        f"{n_instances} instances ({moved} with transfer); worst per-track "
        f"deviation {worst_track:.2e}, worst global moment deviation {worst_global:.2e}",
    )


def verify_recycling(n_instances: int = 200, seed: int = 20244) -> CheckResult:
    """Closed-form swap cost against discrete enumeration, cost
    subadditivity under unions, and exact factorization over independent
    blocks."""
    rng = _rng(seed)
    worst_const = 0.0
    for q in (0.05, 0.1, 0.3, 0.5, 0.9):
        f = rng.dirichlet(np.ones(3))
        bern = bernoulli_rfs(q, f)
        intensity = q * f
        enumerated = kl_divergence(bern, lambda v: poisson_pmf(intensity, v))
        worst_const = max(worst_const, abs(enumerated - bernoulli_poisson_kl(q)))

    worst_sub = 0.0
    violations = 0
    for _ in range(n_instances):
        k = 3
        q1, q2 = rng.uniform(0.05, 0.95, size=2)
        f1, f2 = rng.dirichlet(np.ones(k)), rng.dirichlet(np.ones(k))
        g, h = bernoulli_rfs(q1, f1), bernoulli_rfs(q2, f2)
        g_t = poisson_rfs(q1 * f1, 2)
        h_t = poisson_rfs(q2 * f2, 2)
        if not kl_subadditivity_check(g, h, g_t, h_t):
            violations += 1
        lhs = kl_divergence(convolve(g, h), convolve(g_t, h_t))
        rhs = kl_divergence(g, g_t) + kl_divergence(h, h_t)
        worst_sub = max(worst_sub, lhs - rhs)

    worst_fact = 0.0
    for _ in range(50):
        q1, q2 = rng.uniform(0.05, 0.95, size=2)
        f1 = np.concatenate([rng.dirichlet(np.ones(2)), np.zeros(2)])
        f2 = np.concatenate([np.zeros(2), rng.dirichlet(np.ones(2))])
        g, h = bernoulli_rfs(q1, f1), bernoulli_rfs(q2, f2)
        g_t = poisson_rfs(q1 * f1, 2)
        h_t = poisson_rfs(q2 * f2, 2)
        joint = kl_divergence(convolve(g, h), convolve(g_t, h_t))
        split = kl_divergence(g, g_t) + kl_divergence(h, h_t)
        worst_fact = max(worst_fact, abs(joint - split))

    ok = worst_const <= 1e-12 and violations == 0 and worst_fact <= 1e-12
    return CheckResult(
        "recycling", ok,
        f"swap-cost constant deviation {worst_const:.2e}; subadditivity "
        f"violations {violations}/{n_instances} (worst gap {worst_sub:.2e}); "
        f"factorization deviation {worst_fact:.2e}",
    )


def verify_filter(n_scans: int = 10, seed: int = 4321) -> CheckResult:
    """Short benchmark run: balance closure every scan and byte-identical
    reruns."""
    model, params, _ = standard_scenario()
    truth, scans = generate_scenario(model, n_scans, seed, initial_targets=5)

    def run():
        state = initialize(model, params)
        _, records = run_scans(state, scans)
        return records

    records = run()
    worst = max(abs(r.balance["closure"]) for r in records)
    blob1 = "".join(dumps_record(scan_record_dict(r)) for r in records)
    blob2 = "".join(dumps_record(scan_record_dict(r)) for r in run())
    ok = worst <= 1e-6 and blob1 == blob2
    detail = f"worst balance closure {worst:.2e}; rerun identical: {blob1 == blob2}"
    return CheckResult("filter", ok, detail)


def run_verification(level: str = "fast") -> list[CheckResult]:
    if level not in ("fast", "full"):
        raise BpmtfError(f"unknown verification level {level!r}")
    scale = 1 if level == "fast" else 5
    results = [
        verify_association(n_problems=200 * scale),
        verify_association_acyclic(n_problems=200 * scale),
        verify_lemma1(draws_per_shape=50 * scale),
        verify_duality(n_problems=100 * scale),
        verify_transfer(n_instances=100 * scale),
        verify_recycling(n_instances=200 * scale),
        verify_filter(n_scans=10 * (2 if level == "full" else 1)),
    ]
    return results
