"""Gaussian densities, Gaussian mixtures, and linear-Gaussian conditioning.

All covariance outputs are re-symmetrized as (C + C^T)/2 before leaving a
function. Likelihoods are evaluated in the linear domain; underflow to 0.0 is
legitimate and treated by callers as an impossible association, never as an
error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericalError

_WEIGHT_EPS = 1e-12


def _symmetrize(cov: np.ndarray) -> np.ndarray:
    return 0.5 * (cov + cov.T)


def _cholesky(cov: np.ndarray, what: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"{what}: covariance not positive definite") from exc


@dataclass
class GaussianDensity:
    """Single Gaussian with mean vector and covariance matrix."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        self.cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if self.mean.ndim != 1:
            raise DomainError("mean must be a vector")
        if self.cov.shape != (self.mean.size, self.mean.size):
            raise DomainError(
                f"covariance shape {self.cov.shape} does not match state dim {self.mean.size}"
            )
        if not np.all(np.isfinite(self.mean)) or not np.all(np.isfinite(self.cov)):
            raise DomainError("non-finite mean or covariance")
        if not np.allclose(self.cov, self.cov.T, atol=1e-8 * (1.0 + np.abs(self.cov).max())):
            raise DomainError("covariance not symmetric")
        self.cov = _symmetrize(self.cov)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass
class GaussianMixture:
    """Weighted Gaussian mixture; weights need not sum to one unless normalized."""

    weights: np.ndarray
    components: list[GaussianDensity] = field(default_factory=list)

    def __post_init__(self):
        self.weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if self.weights.size != len(self.components):
            raise DomainError("weight count does not match component count")
        if self.weights.size == 0:
            raise DomainError("empty mixture")
        if np.any(self.weights < 0) or not np.all(np.isfinite(self.weights)):
            raise DomainError("weights must be finite and nonnegative")

    @property
    def size(self) -> int:
        return len(self.components)

    @property
    def dim(self) -> int:
        return self.components[0].dim

    def total_weight(self) -> float:
        return float(self.weights.sum())

    def normalized(self) -> "GaussianMixture":
        total = self.total_weight()
        if total <= 0.0:
            raise DomainError("cannot normalize a zero-weight mixture")
        return GaussianMixture(self.weights / total, list(self.components))

    def scaled(self, factor: float) -> "GaussianMixture":
        return GaussianMixture(self.weights * factor, list(self.components))


def gaussian_logpdf(x: np.ndarray, d: GaussianDensity) -> float:
    chol = _cholesky(d.cov, "gaussian_logpdf")
    diff = np.asarray(x, dtype=float) - d.mean
    sol = np.linalg.solve(chol, diff)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    return float(-0.5 * (sol @ sol + logdet + d.dim * np.log(2.0 * np.pi)))


def kalman_predict(d: GaussianDensity, trans: np.ndarray, noise: np.ndarray) -> GaussianDensity:
    """Propagate through x' = F x + w, w ~ N(0, Q)."""
    trans = np.asarray(trans, dtype=float)
    noise = np.asarray(noise, dtype=float)
    mean = trans @ d.mean
    cov = _symmetrize(trans @ d.cov @ trans.T + noise)
    return GaussianDensity(mean, cov)


def kalman_update(
    d: GaussianDensity, z: np.ndarray, obs: np.ndarray, noise: np.ndarray
) -> tuple[GaussianDensity, float]:
    """Condition on z = H x + v, v ~ N(0, R).

    Returns the posterior and the predictive likelihood N(z; H m, H P H^T + R).
    Joseph-form covariance update keeps the result PSD for any gain.
    """
    obs = np.asarray(obs, dtype=float)
    noise = np.asarray(noise, dtype=float)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    innov = z - obs @ d.mean
    innov_cov = _symmetrize(obs @ d.cov @ obs.T + noise)
    chol = _cholesky(innov_cov, "kalman_update")
    sol = np.linalg.solve(chol, innov)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    loglik = -0.5 * (sol @ sol + logdet + z.size * np.log(2.0 * np.pi))
    gain = np.linalg.solve(innov_cov, obs @ d.cov).T
    mean = d.mean + gain @ innov
    eye_kh = np.eye(d.dim) - gain @ obs
    cov = _symmetrize(eye_kh @ d.cov @ eye_kh.T + gain @ noise @ gain.T)
    return GaussianDensity(mean, cov), float(np.exp(loglik))


def mixture_moments(m: GaussianMixture) -> tuple[np.ndarray, np.ndarray]:
    """Overall mean and covariance of the normalized mixture."""
    norm = m.normalized()
    means = np.stack([c.mean for c in norm.components])
    mean = norm.weights @ means
    cov = np.zeros((m.dim, m.dim))
    for w, c in zip(norm.weights, norm.components):
        diff = c.mean - mean
        cov += w * (c.cov + np.outer(diff, diff))
    return mean, _symmetrize(cov)


def merge_moment_matched(weights: np.ndarray, comps: list[GaussianDensity]) -> tuple[float, GaussianDensity]:
    total = float(np.sum(weights))
    sub = GaussianMixture(np.asarray(weights, dtype=float), comps)
    mean, cov = mixture_moments(sub)
    return total, GaussianDensity(mean, cov)


def symmetrized_kl(a: GaussianDensity, b: GaussianDensity) -> float:
    """KL(a||b) + KL(b||a); used as the merge distance in mixture_reduce."""

    def _kl(p: GaussianDensity, q: GaussianDensity) -> float:
        chol_q = _cholesky(q.cov, "symmetrized_kl")
        diff = q.mean - p.mean
        sol = np.linalg.solve(chol_q, diff)
        trace = np.trace(np.linalg.solve(q.cov, p.cov))
        sign_p, logdet_p = np.linalg.slogdet(p.cov)
        sign_q, logdet_q = np.linalg.slogdet(q.cov)
        if sign_p <= 0 or sign_q <= 0:
            raise NumericalError("symmetrized_kl: covariance not positive definite")
        return 0.5 * (trace + sol @ sol - p.dim + logdet_q - logdet_p)

    return float(_kl(a, b) + _kl(b, a))


def mixture_reduce(
    m: GaussianMixture, max_components: int, merge_threshold: float = 0.0
) -> GaussianMixture:
    """Reduce by greedy pairwise moment-matched merging of the closest pair.

    Pairs closer than merge_threshold (symmetrized KL) are merged even when the
    component budget is already met. Components with relative weight below
    1e-12 are dropped afterwards with the survivors rescaled, so the total
    weight is preserved exactly and the overall moments to well below 1e-9.
    """
    if max_components < 1:
        raise DomainError("max_components must be >= 1")
    weights = list(np.asarray(m.weights, dtype=float))
    comps = list(m.components)

    while len(comps) > 1:
        best = None
        for i in range(len(comps)):
            for j in range(i + 1, len(comps)):
                d = symmetrized_kl(comps[i], comps[j])
                if best is None or d < best[0]:
                    best = (d, i, j)
        dist, i, j = best
        if len(comps) <= max_components and dist >= merge_threshold:
            break
        w, merged = merge_moment_matched(np.array([weights[i], weights[j]]), [comps[i], comps[j]])
        for k in sorted((i, j), reverse=True):
            del weights[k]
            del comps[k]
        weights.append(w)
        comps.append(merged)

    weights = np.asarray(weights)
    total = weights.sum()
    if total > 0.0:
        keep = weights >= _WEIGHT_EPS * total
        if not np.all(keep) and keep.any():
            kept = weights[keep]
            weights = kept * (total / kept.sum())
            comps = [c for c, k in zip(comps, keep) if k]
    return GaussianMixture(weights, comps)
