"""Scenario models: region geometry, motion, sensor, and birth."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

# state layout convention: positions first, velocities (if any) after


@dataclass
class Region:
    """Axis-aligned surveillance region with a regular cell grid."""

    lower: np.ndarray
    upper: np.ndarray
    resolution: tuple[int, ...]

    def __post_init__(self):
        self.lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        self.resolution = tuple(int(r) for r in np.atleast_1d(self.resolution))
        if self.lower.shape != self.upper.shape or len(self.resolution) != self.lower.size:
            raise ConfigurationError("region bounds/resolution dimension mismatch", "region")
        if np.any(self.upper <= self.lower):
            raise ConfigurationError("region upper bound must exceed lower bound", "region.bounds")
        if any(r < 1 for r in self.resolution):
            raise ConfigurationError("resolution must be >= 1 per axis", "region.resolution")

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def cell_widths(self) -> np.ndarray:
        return (self.upper - self.lower) / np.asarray(self.resolution, dtype=float)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.cell_widths))

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def axis_edges(self, axis: int) -> np.ndarray:
        return np.linspace(self.lower[axis], self.upper[axis], self.resolution[axis] + 1)

    def axis_centers(self, axis: int) -> np.ndarray:
        edges = self.axis_edges(axis)
        return 0.5 * (edges[:-1] + edges[1:])

    def cell_centers(self) -> np.ndarray:
        """All cell centers, shape (n_cells, dim), C-order over the grid."""
        axes = [self.axis_centers(k) for k in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=-1)


@dataclass
class MotionModel:
    trans: np.ndarray           # F
    noise: np.ndarray           # Q
    survival: float             # per-scan survival probability
    position_dim: int

    def __post_init__(self):
        self.trans = np.atleast_2d(np.asarray(self.trans, dtype=float))
        self.noise = np.atleast_2d(np.asarray(self.noise, dtype=float))
        n = self.trans.shape[0]
        if self.trans.shape != (n, n) or self.noise.shape != (n, n):
            raise ConfigurationError("F and Q must be square and same size", "motion")
        if not np.allclose(self.noise, self.noise.T, atol=1e-10):
            raise ConfigurationError("Q must be symmetric", "motion.noise")
        if np.any(np.linalg.eigvalsh(0.5 * (self.noise + self.noise.T)) < -1e-10):
            raise ConfigurationError("Q must be positive semidefinite", "motion.noise")
        if not 0.0 <= self.survival <= 1.0:
            raise ConfigurationError("survival must lie in [0, 1]", "motion.survival")
        if not 1 <= self.position_dim <= n:
            raise ConfigurationError("position_dim out of range", "motion")

    @property
    def state_dim(self) -> int:
        return self.trans.shape[0]


@dataclass
class SensorModel:
    obs: np.ndarray             # H
    noise: np.ndarray           # R
    detection_prob: float
    clutter_rate: float         # expected false alarms per scan over the region

    def __post_init__(self):
        self.obs = np.atleast_2d(np.asarray(self.obs, dtype=float))
        self.noise = np.atleast_2d(np.asarray(self.noise, dtype=float))
        if self.noise.shape != (self.obs.shape[0], self.obs.shape[0]):
            raise ConfigurationError("R shape must match measurement dim", "sensor.noise")
        if not 0.0 <= self.detection_prob <= 1.0:
            raise ConfigurationError("detection probability must lie in [0, 1]", "sensor.pd")
        if self.clutter_rate < 0.0:
            raise ConfigurationError("clutter rate must be nonnegative", "sensor.clutterRate")

    @property
    def meas_dim(self) -> int:
        return self.obs.shape[0]


@dataclass
class BirthModel:
    """Birth intensity as per-cell expected new-target counts, plus the
    zero-mean velocity prior used for tracks born from measurements."""

    cells: np.ndarray           # shape = region resolution
    velocity_prior: np.ndarray  # (v, v) covariance; shape (0, 0) for static states

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=float)
        if self.velocity_prior is None:
            self.velocity_prior = np.zeros((0, 0))
        self.velocity_prior = np.atleast_2d(np.asarray(self.velocity_prior, dtype=float))
        if np.any(self.cells < 0) or not np.all(np.isfinite(self.cells)):
            raise ConfigurationError("birth cells must be finite and nonnegative", "birth")

    @property
    def total_rate(self) -> float:
        return float(self.cells.sum())


@dataclass
class ModelBundle:
    region: Region
    motion: MotionModel
    sensor: SensorModel
    birth: BirthModel
    warnings: list[str] = field(default_factory=list)

    @property
    def clutter_density(self) -> float:
        return self.sensor.clutter_rate / self.region.volume

    @property
    def position_dim(self) -> int:
        return self.motion.position_dim

    def embed_position(self, pos: np.ndarray) -> np.ndarray:
        """Lift region-space points to full state space with zero velocity."""
        pos = np.atleast_2d(pos)
        out = np.zeros((pos.shape[0], self.motion.state_dim))
        out[:, : self.position_dim] = pos
        return out


def make_cv_motion(dims: int, dt: float, accel_std: float, survival: float) -> MotionModel:
    """Nearly-constant-velocity model with white-acceleration process noise."""
    eye = np.eye(dims)
    trans = np.block([[eye, dt * eye], [np.zeros((dims, dims)), eye]])
    q = accel_std ** 2
    noise = np.block(
        [
            [q * dt ** 4 / 4.0 * eye, q * dt ** 3 / 2.0 * eye],
            [q * dt ** 3 / 2.0 * eye, q * dt ** 2 * eye],
        ]
    )
    return MotionModel(trans, noise, survival, position_dim=dims)


def make_static_motion(dims: int, noise_std: float, survival: float) -> MotionModel:
    return MotionModel(np.eye(dims), noise_std ** 2 * np.eye(dims), survival, position_dim=dims)


def make_position_sensor(
    state_dim: int, position_dim: int, noise_std: float, pd: float, clutter_rate: float
) -> SensorModel:
    obs = np.zeros((position_dim, state_dim))
    obs[:, :position_dim] = np.eye(position_dim)
    return SensorModel(obs, noise_std ** 2 * np.eye(position_dim), pd, clutter_rate)


def uniform_birth(region: Region, rate: float, velocity_prior: np.ndarray) -> BirthModel:
    n_cells = int(np.prod(region.resolution))
    cells = np.full(region.resolution, rate / n_cells)
    return BirthModel(cells, velocity_prior)


def sensor_measures_position(sensor: SensorModel, position_dim: int) -> bool:
    h = sensor.obs
    if h.shape[0] != position_dim:
        return False
    expect = np.zeros_like(h)
    expect[:, :position_dim] = np.eye(position_dim)
    return bool(np.allclose(h, expect, atol=1e-12))


def diffusion_covariance(motion: MotionModel, velocity_prior: np.ndarray) -> np.ndarray:
    """Per-step position diffusion implied by F, Q and the zero-mean velocity
    prior; this is what the grid's spatial kernel is built from."""
    n = motion.state_dim
    p = motion.position_dim
    prior = np.zeros((n, n))
    v = np.atleast_2d(velocity_prior)
    if v.size > 0:
        prior[p:, p:] = v
    full = motion.trans @ prior @ motion.trans.T + motion.noise
    return 0.5 * (full[:p, :p] + full[:p, :p].T)


def validate_model(bundle: ModelBundle) -> list[str]:
    """Structural checks; returns warnings for legal-but-fragile settings."""
    warnings: list[str] = []
    p = bundle.position_dim
    if bundle.region.dim != p:
        raise ConfigurationError("region dimension must equal position dimension", "region")
    if bundle.birth.cells.shape != tuple(bundle.region.resolution):
        raise ConfigurationError("birth cells must match region resolution", "birth")
    v = bundle.motion.state_dim - p
    if bundle.birth.velocity_prior.size == 0:
        if v != 0:
            raise ConfigurationError("velocity prior required for models with velocity", "birth")
    elif bundle.birth.velocity_prior.shape != (v, v):
        raise ConfigurationError("velocity prior shape must be (v, v)", "birth")
    if not sensor_measures_position(bundle.sensor, p):
        raise ConfigurationError(
            "grid operations require a sensor measuring position directly (H = [I 0])",
            "sensor.obs",
        )
    if bundle.sensor.clutter_rate == 0.0:
        warnings.append(
            "clutterRate = 0: association contraction no longer guaranteed and measurements "
            "outside all intensity become degenerate"
        )
    if bundle.sensor.detection_prob >= 1.0:
        # a sure detection makes the missed-detection weight of a certain
        # track exactly zero, and the association denominators with it
        raise ConfigurationError(
            "detection probability must be strictly below 1 for filtering",
            "sensor.detectionProb",
        )
    if bundle.motion.survival >= 1.0:
        warnings.append("survival = 1: undetected intensity has no steady state with births")
    bundle.warnings = warnings
    return warnings
