"""Scenario simulator with reproducible, independently seeded substreams.

Every random draw comes from a counter-based generator keyed by (seed,
substream), so regenerating measurements does not perturb the truth, adding
scans extends a run without rewriting history, and the measurement order
within a scan is shuffled by its own stream (array position carries no
information about origin).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .models import ModelBundle, sensor_measures_position

_STREAMS = {
    "births": 0,
    "initial": 1,
    "motion": 2,
    "survival": 3,
    "detection": 4,
    "measnoise": 5,
    "clutter": 6,
    "order": 7,
}
_REDRAW_CAP = 100


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named purpose under one scenario seed."""
    key = _STREAMS[name]
    seq = np.random.SeedSequence(entropy=seed, spawn_key=(key,))
    return np.random.Generator(np.random.Philox(seq))


@dataclass
class TruthTarget:
    target_id: int
    birth_scan: int
    states: list[np.ndarray]        # one per scan, birth_scan onward

    @property
    def death_scan(self) -> int:    # first scan the target no longer exists
        return self.birth_scan + len(self.states)

    def state_at(self, scan: int) -> np.ndarray:
        return self.states[scan - self.birth_scan]


@dataclass
class Truth:
    n_scans: int
    state_dim: int
    targets: list[TruthTarget]

    def alive_at(self, scan: int) -> list[TruthTarget]:
        return [t for t in self.targets if t.birth_scan <= scan < t.death_scan]

    def positions_at(self, scan: int, position_dim: int) -> np.ndarray:
        alive = self.alive_at(scan)
        if not alive:
            return np.zeros((0, position_dim))
        return np.array([t.state_at(scan)[:position_dim] for t in alive])

    def cardinality(self, scan: int) -> int:
        return len(self.alive_at(scan))


def _sample_birth_states(model: ModelBundle, count: int, rng: np.random.Generator) -> list[np.ndarray]:
    region = model.region
    rates = model.birth.cells.ravel()
    total = rates.sum()
    if count and total <= 0:
        raise DomainError("cannot sample births from a zero birth intensity")
    vel_cov = model.birth.velocity_prior
    vel_dim = 0 if vel_cov is None else vel_cov.shape[0]
    states = []
    for _ in range(count):
        flat = rng.choice(rates.size, p=rates / total)
        cell = np.unravel_index(flat, region.resolution)
        pos = region.lower + (np.asarray(cell) + rng.random(region.dim)) * region.cell_widths
        if vel_dim:
            vel = rng.multivariate_normal(np.zeros(vel_dim), vel_cov)
            states.append(np.concatenate([pos, vel]))
        else:
            states.append(pos)
    return states


def generate_truth(
    model: ModelBundle,
    n_scans: int,
    seed: int,
    initial_targets=None,
) -> Truth:
    """Survival/birth/motion ground truth.

    ``initial_targets``: explicit (n0, state_dim) states present at the first
    scan, or an int to sample that many from the birth distribution, or None
    for an initially empty scene. Births also occur at every scan (the first
    included) at the model's rate. Targets may drift out of the region; they
    keep existing, they just become hard to see."""
    motion = model.motion
    state_dim = motion.trans.shape[0]
    rng_b = substream(seed, "births")
    rng_i = substream(seed, "initial")
    rng_m = substream(seed, "motion")
    rng_s = substream(seed, "survival")

    targets: list[TruthTarget] = []
    alive: list[TruthTarget] = []
    next_id = 0

    if initial_targets is not None:
        if np.isscalar(initial_targets):
            first = _sample_birth_states(model, int(initial_targets), rng_i)
        else:
            arr = np.asarray(initial_targets, dtype=float).reshape(-1, state_dim)
            first = [arr[k] for k in range(arr.shape[0])]
        for x in first:
            t = TruthTarget(next_id, 0, [np.asarray(x, dtype=float)])
            next_id += 1
            targets.append(t)
            alive.append(t)

    for scan in range(n_scans):
        if scan > 0:
            survivors = []
            for t in alive:
                if rng_s.random() < motion.survival:
                    noise = rng_m.multivariate_normal(np.zeros(state_dim), motion.noise)
                    t.states.append(motion.trans @ t.states[-1] + noise)
                    survivors.append(t)
            alive = survivors
        n_births = rng_b.poisson(model.birth.total_rate)
        for x in _sample_birth_states(model, int(n_births), rng_b):
            t = TruthTarget(next_id, scan, [x])
            next_id += 1
            targets.append(t)
            alive.append(t)
    return Truth(n_scans, state_dim, targets)


def generate_measurements(
    truth: Truth, model: ModelBundle, seed: int, with_labels: bool = False
):
    """Detections plus clutter per scan, shuffled.

    A detection falling outside the region is redrawn (fresh noise) up to a
    cap, then dropped: the sensor only reports from inside the region."""
    sensor = model.sensor
    if not sensor_measures_position(sensor, model.motion.position_dim):
        raise DomainError("simulation requires a sensor that measures position directly")
    region = model.region
    rng_d = substream(seed, "detection")
    rng_n = substream(seed, "measnoise")
    rng_c = substream(seed, "clutter")
    rng_o = substream(seed, "order")
    zero = np.zeros(sensor.meas_dim)

    scans: list[np.ndarray] = []
    labels: list[np.ndarray] = []
    for scan in range(truth.n_scans):
        zs = []
        ids = []
        for t in truth.alive_at(scan):
            if rng_d.random() >= sensor.detection_prob:
                continue
            mean = sensor.obs @ t.state_at(scan)
            for _ in range(_REDRAW_CAP):
                z = mean + rng_n.multivariate_normal(zero, sensor.noise)
                if bool(region.contains(z[None, :])[0]):
                    zs.append(z)
                    ids.append(t.target_id)
                    break
        n_clutter = int(rng_c.poisson(sensor.clutter_rate))
        for _ in range(n_clutter):
            zs.append(region.lower + rng_c.random(region.dim) * (region.upper - region.lower))
            ids.append(-1)
        if zs:
            z_arr = np.asarray(zs)
            id_arr = np.asarray(ids)
            perm = rng_o.permutation(len(zs))
            scans.append(z_arr[perm])
            labels.append(id_arr[perm])
        else:
            scans.append(np.zeros((0, sensor.meas_dim)))
            labels.append(np.zeros(0, dtype=int))
    if with_labels:
        return scans, labels
    return scans


def generate_scenario(
    model: ModelBundle, n_scans: int, seed: int, initial_targets=None
) -> tuple[Truth, list[np.ndarray]]:
    """Truth and measurements under one seed (distinct substreams, so the
    pair is reproducible jointly and severally)."""
    truth = generate_truth(model, n_scans, seed, initial_targets)
    return truth, generate_measurements(truth, model, seed)
