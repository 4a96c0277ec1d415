"""Exact point-process distributions on a small finite space.

States are occupancy-count vectors over K sites, stored sparsely as
``{counts tuple: probability}``. Independent union is convolution of count
vectors. These exact representations back the correctness checks for the
recycling approximation; they are deliberately brute force and sized for
single-digit K.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError


def bernoulli_rfs(existence: float, spatial: np.ndarray) -> dict[tuple[int, ...], float]:
    """At most one point: empty with prob 1-q, one point at site x with
    prob q*f[x]. ``spatial`` must sum to 1 (unless q is 0)."""
    spatial = np.asarray(spatial, dtype=float)
    if not 0.0 <= existence <= 1.0:
        raise DomainError(f"existence probability {existence} outside [0, 1]")
    if spatial.ndim != 1 or (spatial < 0).any():
        raise DomainError("spatial distribution must be a nonnegative vector")
    if existence > 0.0 and abs(spatial.sum() - 1.0) > 1e-9:
        raise DomainError("spatial distribution must sum to 1")
    k = spatial.size
    dist = {tuple([0] * k): 1.0 - existence}
    for x in range(k):
        p = existence * float(spatial[x])
        if p > 0.0:
            counts = [0] * k
            counts[x] = 1
            dist[tuple(counts)] = p
    return dist


def poisson_pmf(intensity: np.ndarray, counts: tuple[int, ...]) -> float:
    """Exact probability of one count vector under independent per-site
    Poisson counts with the given means."""
    intensity = np.asarray(intensity, dtype=float)
    if (intensity < 0).any():
        raise DomainError("intensity must be nonnegative")
    p = 1.0
    for lam, n in zip(intensity, counts):
        p *= math.exp(-lam) * lam ** n / math.factorial(n)
    return p


def poisson_rfs(intensity: np.ndarray, max_total: int) -> dict[tuple[int, ...], float]:
    """All count vectors with total at most ``max_total``; each entry is the
    exact Poisson probability (the trimmed tail is simply absent)."""
    intensity = np.asarray(intensity, dtype=float)
    k = intensity.size
    dist: dict[tuple[int, ...], float] = {}

    def fill(site: int, prefix: list[int], remaining: int) -> None:
        if site == k:
            dist[tuple(prefix)] = poisson_pmf(intensity, tuple(prefix))
            return
        for n in range(remaining + 1):
            fill(site + 1, prefix + [n], remaining - n)

    fill(0, [], max_total)
    return dist


def convolve(
    a: dict[tuple[int, ...], float], b: dict[tuple[int, ...], float]
) -> dict[tuple[int, ...], float]:
    """Distribution of the union of two independent processes."""
    out: dict[tuple[int, ...], float] = {}
    for va, pa in a.items():
        for vb, pb in b.items():
            v = tuple(x + y for x, y in zip(va, vb))
            out[v] = out.get(v, 0.0) + pa * pb
    return out


def multi_bernoulli_rfs(
    components: list[tuple[float, np.ndarray]]
) -> dict[tuple[int, ...], float]:
    if not components:
        raise DomainError("need at least one component")
    dist = bernoulli_rfs(*components[0])
    for q, f in components[1:]:
        dist = convolve(dist, bernoulli_rfs(q, f))
    return dist


def total_mass(dist: dict[tuple[int, ...], float]) -> float:
    return float(sum(dist.values()))


def expected_counts(dist: dict[tuple[int, ...], float]) -> np.ndarray:
    k = len(next(iter(dist)))
    mean = np.zeros(k)
    for v, p in dist.items():
        mean += p * np.asarray(v, dtype=float)
    return mean


def kl_divergence(p: dict[tuple[int, ...], float], q) -> float:
    """KL(p || q). ``q`` is a dict or a callable on count vectors. Infinite
    when p puts mass where q has none."""
    lookup = q if callable(q) else (lambda v: q.get(v, 0.0))
    total = 0.0
    for v, pv in p.items():
        if pv <= 0.0:
            continue
        qv = lookup(v)
        if qv <= 0.0:
            return math.inf
        total += pv * math.log(pv / qv)
    return total
