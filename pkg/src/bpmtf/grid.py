"""Piecewise-constant intensity grid for the undetected-target population.

The grid carries expected target counts per cell over the position space.
Prediction is birth plus survival-scaled transport through a truncated
separable Gaussian stencil; mass convolved past the region boundary is
dropped (targets departing the region). The missed-detection update thins
every cell by (1 - Pd). Measurements interrogate the grid to price new
tracks, and recycled tracks deposit their mass back onto it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d
from scipy.special import ndtr

from .errors import ConvergenceError, DegenerateMeasurementError, DomainError
from .gaussians import GaussianDensity, GaussianMixture
from .models import ModelBundle, Region, diffusion_covariance

log = logging.getLogger("bpmtf.grid")

_STENCIL_RADIUS_SIGMAS = 4.0


@dataclass
class GridIntensity:
    region: Region
    cells: np.ndarray

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=float)
        if self.cells.shape != tuple(self.region.resolution):
            raise DomainError(
                f"cells shape {self.cells.shape} does not match region resolution "
                f"{self.region.resolution}"
            )
        if np.any(self.cells < 0) or not np.all(np.isfinite(self.cells)):
            raise DomainError("intensity cells must be finite and nonnegative")

    @property
    def mass(self) -> float:
        return float(self.cells.sum())


def zero_intensity(region: Region) -> GridIntensity:
    return GridIntensity(region, np.zeros(region.resolution))


def axis_stencil(sigma: float, cell_width: float) -> np.ndarray:
    """1D transport stencil: cell-integrated N(0, sigma^2), cut at 4 sigma and
    renormalized so in-region transport is mass-preserving."""
    if sigma < 1e-12 * max(cell_width, 1.0):
        return np.array([1.0])
    radius = int(np.ceil(_STENCIL_RADIUS_SIGMAS * sigma / cell_width))
    offsets = np.arange(-radius, radius + 1) * cell_width
    upper = ndtr((offsets + 0.5 * cell_width) / sigma)
    lower = ndtr((offsets - 0.5 * cell_width) / sigma)
    weights = upper - lower
    return weights / weights.sum()


def transport_stencils(model: ModelBundle) -> list[np.ndarray]:
    diff = diffusion_covariance(model.motion, model.birth.velocity_prior)
    widths = model.region.cell_widths
    return [axis_stencil(float(np.sqrt(max(diff[k, k], 0.0))), widths[k]) for k in range(model.region.dim)]


def _transport(cells: np.ndarray, stencils: list[np.ndarray]) -> np.ndarray:
    out = cells
    for axis, stencil in enumerate(stencils):
        if stencil.size == 1:
            continue
        out = convolve1d(out, stencil, axis=axis, mode="constant", cval=0.0)
    return np.maximum(out, 0.0)


def predict_intensity(
    grid: GridIntensity, model: ModelBundle, stencils: list[np.ndarray] | None = None
) -> tuple[GridIntensity, dict]:
    """One prediction step: birth + survival * transported intensity.

    Returns the predicted grid and a mass-balance report with the boundary
    leakage actually incurred.
    """
    if stencils is None:
        stencils = transport_stencils(model)
    survived = model.motion.survival * _transport(grid.cells, stencils)
    leakage = model.motion.survival * grid.mass - float(survived.sum())
    cells = model.birth.cells + survived
    out = GridIntensity(grid.region, cells)
    report = {
        "prior_mass": grid.mass,
        "birth_mass": model.birth.total_rate,
        "survival": model.motion.survival,
        "leakage": leakage,
        "predicted_mass": out.mass,
    }
    return out, report


def update_missed(grid: GridIntensity, sensor) -> GridIntensity:
    """Thin the intensity by the miss probability. ``sensor`` may be a sensor
    model or a bare detection probability."""
    detection_prob = float(getattr(sensor, "detection_prob", sensor))
    if not 0.0 <= detection_prob <= 1.0:
        raise DomainError("detection probability must lie in [0, 1]")
    return GridIntensity(grid.region, (1.0 - detection_prob) * grid.cells)


def steady_state(
    model: ModelBundle, tol: float = 1e-12, max_iter: int = 100000
) -> tuple[GridIntensity, int]:
    """Fixed point of the predict step by Richardson iteration from zero.

    Converges linearly with ratio = survival whenever survival < 1 or
    boundary leakage drains mass. Returns the grid and the iteration count.
    """
    stencils = transport_stencils(model)
    grid = zero_intensity(model.region)
    for it in range(1, max_iter + 1):
        nxt, _ = predict_intensity(grid, model, stencils)
        residual = float(np.max(np.abs(nxt.cells - grid.cells))) if grid.cells.size else 0.0
        grid = nxt
        if residual < tol:
            return grid, it
    raise ConvergenceError(f"steady_state: residual above {tol} after {max_iter} iterations")


def _cell_likelihoods(grid: GridIntensity, z: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """N(z; c, R) for every cell center c, flattened in C-order."""
    centers = grid.region.cell_centers()
    diff = centers - np.asarray(z, dtype=float)
    chol = np.linalg.cholesky(noise)
    sol = np.linalg.solve(chol, diff.T)
    quad = np.sum(sol * sol, axis=0)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    lognorm = -0.5 * (logdet + grid.region.dim * np.log(2.0 * np.pi))
    return np.exp(lognorm - 0.5 * quad)


def birth_track_params(
    grid: GridIntensity, model: ModelBundle, z: np.ndarray
) -> tuple[float, float, GaussianDensity]:
    """Price a measurement against clutter plus the undetected intensity.

    Returns (total weight, existence probability, moment-matched state pdf)
    for the track born from measurement z. The weight is the clutter density
    at z plus the detected-intensity mass; the pdf moment-matches the
    cell-weighted measurement posterior in position, with the configured
    zero-mean velocity prior on the remaining coordinates.
    """
    pd = model.sensor.detection_prob
    like = _cell_likelihoods(grid, z, model.sensor.noise)
    masses = grid.cells.ravel()
    detected = pd * like * masses
    intensity_mass = float(detected.sum())
    weight = model.clutter_density + intensity_mass
    if weight <= 0.0:
        raise DegenerateMeasurementError(
            f"measurement {np.asarray(z).tolist()} has zero clutter and zero intensity support"
        )
    existence = intensity_mass / weight

    p = model.position_dim
    widths = model.region.cell_widths
    smear = np.diag(widths ** 2 / 12.0)
    if intensity_mass > 0.0:
        gamma = detected / intensity_mass
        centers = grid.region.cell_centers()
        pos_mean = gamma @ centers
        centered = centers - pos_mean
        pos_cov = (centered.T * gamma) @ centered + smear
    else:
        pos_mean = np.asarray(z, dtype=float)
        pos_cov = model.sensor.noise + smear

    state_dim = model.motion.state_dim
    mean = np.zeros(state_dim)
    mean[:p] = pos_mean
    cov = np.zeros((state_dim, state_dim))
    cov[:p, :p] = pos_cov
    if state_dim > p:
        cov[p:, p:] = model.birth.velocity_prior
    return weight, existence, GaussianDensity(mean, cov)


def deposit_intensity(
    grid: GridIntensity, mass: float, pdf: GaussianMixture | GaussianDensity
) -> tuple[GridIntensity, float]:
    """Add mass * (discretized position marginal of pdf) onto the grid.

    Each component's position marginal is discretized by per-axis CDF
    differences over the cell edges. Returns the new grid and the fraction of
    the mass that fell outside the region (truncated, i.e. not deposited).
    """
    if mass < 0.0:
        raise DomainError("deposit mass must be nonnegative")
    if mass == 0.0:
        return grid, 0.0
    if isinstance(pdf, GaussianDensity):
        pdf = GaussianMixture(np.array([1.0]), [pdf])
    pdf = pdf.normalized()
    region = grid.region
    p = region.dim
    added = np.zeros(region.resolution)
    for w, comp in zip(pdf.weights, pdf.components):
        axis_probs = []
        for axis in range(p):
            mu = comp.mean[axis]
            var = max(comp.cov[axis, axis], 0.0)
            edges = region.axis_edges(axis)
            if var <= 0.0:
                probs = 1.0 * ((edges[:-1] <= mu) & (mu < edges[1:]))
            else:
                sigma = np.sqrt(var)
                cdf = ndtr((edges - mu) / sigma)
                probs = np.diff(cdf)
            axis_probs.append(probs)
        block = axis_probs[0]
        for probs in axis_probs[1:]:
            block = np.multiply.outer(block, probs)
        added += w * block
    deposited = float(added.sum())
    truncated = 1.0 - deposited
    if truncated > 0.5:
        log.warning("deposit of %.4g lost %.1f%% past the region boundary", mass, 100.0 * truncated)
    out = GridIntensity(region, grid.cells + mass * added)
    return out, truncated
