"""Bernoulli track hypothesis machinery.

Hand-substituted miss/detected weights, gating geometry against chi-square
radii, association-problem layout, and the collapse back to a single
Bernoulli. The final class checks that an isolated track driven through the
full expand/solve/collapse path reproduces an independently coded
single-target Bernoulli update.
"""

import math

import numpy as np
import pytest

from bpmtf.assoc import exact_marginals
from bpmtf.errors import DomainError
from bpmtf.gaussians import GaussianDensity, GaussianMixture, mixture_moments
from bpmtf.grid import GridIntensity, zero_intensity
from bpmtf.models import (
    ModelBundle,
    Region,
    make_position_sensor,
    make_static_motion,
    uniform_birth,
)
from bpmtf.tracks import (
    MISS,
    Hypothesis,
    Track,
    build_association_problem,
    collapse_track,
    gate,
    gate_threshold,
    predict_track,
    update_detected_hypothesis,
    update_missed_hypothesis,
)

from oracles import JottOracle


def _track(q, mean, cov, track_id=0):
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    pdf = GaussianMixture(np.array([1.0]), [GaussianDensity(mean, cov)])
    return Track(track_id, q, pdf, origin_scan=0, origin_measurement=MISS)


def _world(pd=0.5, clutter=2.0, extent=20.0, res=20):
    region = Region([0.0], [extent], (res,))
    motion = make_static_motion(1, 0.4, 0.95)
    sensor = make_position_sensor(1, 1, 1.0, pd, clutter)
    birth = uniform_birth(region, 0.0, None)
    return ModelBundle(region, motion, sensor, birth)


class TestPredictTrack:
    def test_sure_survival_keeps_existence(self):
        out = predict_track(_track(0.37, [1.0], [[1.0]]), make_static_motion(1, 0.5, 1.0))
        assert out.existence == pytest.approx(0.37)

    def test_existence_scales_by_survival(self):
        out = predict_track(_track(0.8, [0.0], [[1.0]]), make_static_motion(1, 0.5, 0.95))
        assert out.existence == pytest.approx(0.76)

    def test_components_pass_through_prediction(self):
        rng = np.random.default_rng(42)
        motion = make_static_motion(2, 0.7, 0.9)
        for _ in range(20):
            a = rng.normal(size=(2, 2))
            cov = a @ a.T + np.eye(2)
            mean = rng.normal(size=2)
            t = _track(0.5, mean, cov)
            out = predict_track(t, motion)
            comp = out.pdf.components[0]
            np.testing.assert_allclose(comp.mean, motion.trans @ mean, atol=1e-12)
            np.testing.assert_allclose(
                comp.cov, motion.trans @ cov @ motion.trans.T + motion.noise, atol=1e-12
            )
            np.testing.assert_allclose(out.pdf.weights, t.pdf.weights)


class TestGating:
    def test_chi_square_radius(self):
        assert gate_threshold(0.99, 2) == pytest.approx(9.21034037197618, rel=1e-12)
        assert gate_threshold(1.0, 2) == np.inf
        with pytest.raises(DomainError):
            gate_threshold(0.0, 2)

    def test_measurement_at_mean_always_inside(self):
        sensor = make_position_sensor(2, 2, 1.0, 0.5, 1.0)
        t = _track(0.5, [3.0, -1.0], np.eye(2))
        assert gate(t, np.array([3.0, -1.0]), sensor, 1e-9)

    def test_infinite_threshold(self):
        sensor = make_position_sensor(2, 2, 1.0, 0.5, 1.0)
        t = _track(0.5, [0.0, 0.0], np.eye(2))
        assert gate(t, np.array([1e6, 1e6]), sensor, np.inf)

    def test_distance_ten_outside_99_gate(self):
        """Unit innovation covariance: squared distance 10 exceeds the
        two-dimensional 0.99 radius 9.21, distance 9 does not."""
        sensor = make_position_sensor(2, 2, 1.0, 0.5, 1.0)
        t = _track(0.5, [0.0, 0.0], 1e-12 * np.eye(2))
        radius = gate_threshold(0.99, 2)
        assert not gate(t, np.array([math.sqrt(10.0), 0.0]), sensor, radius)
        assert gate(t, np.array([3.0, 0.0]), sensor, radius)

    def test_closest_component_governs(self):
        sensor = make_position_sensor(1, 1, 1.0, 0.5, 1.0)
        pdf = GaussianMixture(
            np.array([0.5, 0.5]),
            [
                GaussianDensity(np.array([0.0]), 1e-12 * np.eye(1)),
                GaussianDensity(np.array([10.0]), 1e-12 * np.eye(1)),
            ],
        )
        t = Track(0, 0.5, pdf, 0, MISS)
        assert gate(t, np.array([10.5]), sensor, 1.0)
        assert not gate(t, np.array([5.0]), sensor, 1.0)


class TestMissedHypothesis:
    def test_zero_detection_is_identity(self):
        sensor = make_position_sensor(1, 1, 1.0, 0.0, 1.0)
        t = _track(0.42, [1.0], [[1.0]])
        h = update_missed_hypothesis(t, sensor)
        assert h.weight == pytest.approx(1.0)
        assert h.existence == pytest.approx(0.42)

    def test_sure_target_high_detection(self):
        sensor = make_position_sensor(1, 1, 1.0, 0.9, 1.0)
        h = update_missed_hypothesis(_track(1.0, [0.0], [[1.0]]), sensor)
        assert h.weight == pytest.approx(0.1)
        assert h.existence == pytest.approx(1.0)

    def test_half_half(self):
        sensor = make_position_sensor(1, 1, 1.0, 0.5, 1.0)
        h = update_missed_hypothesis(_track(0.5, [0.0], [[1.0]]), sensor)
        assert h.weight == pytest.approx(0.75)
        assert h.existence == pytest.approx(1.0 / 3.0)

    def test_algebra_over_random_draws(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            q = float(rng.uniform(0, 1))
            pd = float(rng.uniform(0, 0.99))
            sensor = make_position_sensor(1, 1, 1.0, pd, 1.0)
            h = update_missed_hypothesis(_track(q, [0.0], [[1.0]]), sensor)
            assert h.weight == pytest.approx(1.0 - q * pd, rel=1e-12)
            assert h.existence == pytest.approx(q * (1 - pd) / (1 - q * pd), rel=1e-12)
            assert h.assoc == MISS


class TestDetectedHypothesis:
    def test_nonexistent_target_zero_weight(self):
        sensor = make_position_sensor(1, 1, 1.0, 0.9, 1.0)
        h = update_detected_hypothesis(_track(0.0, [0.0], [[1.0]]), sensor, np.array([0.0]), 0)
        assert h.weight == 0.0

    def test_single_component_closed_form(self):
        """w = q * Pd * N(z; mean, cov + R) for a scalar track."""
        sensor = make_position_sensor(1, 1, 1.0, 0.8, 1.0)
        q, mean, var, z = 0.6, 1.5, 2.0, 2.3
        h = update_detected_hypothesis(_track(q, [mean], [[var]]), sensor, np.array([z]), 0)
        pred_var = var + 1.0
        like = math.exp(-0.5 * (z - mean) ** 2 / pred_var) / math.sqrt(2 * math.pi * pred_var)
        assert h.weight == pytest.approx(q * 0.8 * like, rel=1e-12)
        assert h.existence == 1.0
        assert h.assoc == 0

    def test_detected_existence_always_one(self):
        rng = np.random.default_rng(7)
        sensor = make_position_sensor(1, 1, 1.0, 0.7, 1.0)
        for _ in range(50):
            t = _track(float(rng.uniform(0.01, 1)), rng.normal(size=1), [[float(rng.uniform(0.5, 2))]])
            h = update_detected_hypothesis(t, sensor, rng.normal(size=1), 0)
            assert h.existence == 1.0

    def test_mixture_reweighting_matches_enumeration(self):
        """Posterior component weights proportional to prior weight times
        component likelihood."""
        sensor = make_position_sensor(1, 1, 1.0, 0.5, 1.0)
        pdf = GaussianMixture(
            np.array([0.3, 0.7]),
            [
                GaussianDensity(np.array([0.0]), np.array([[1.0]])),
                GaussianDensity(np.array([4.0]), np.array([[0.5]])),
            ],
        )
        t = Track(0, 0.9, pdf, 0, MISS)
        z = 2.0
        h = update_detected_hypothesis(t, sensor, np.array([z]), 0)
        liks = []
        for mean, var in ((0.0, 1.0), (4.0, 0.5)):
            s = var + 1.0
            liks.append(math.exp(-0.5 * (z - mean) ** 2 / s) / math.sqrt(2 * math.pi * s))
        raw = np.array([0.3 * liks[0], 0.7 * liks[1]])
        np.testing.assert_allclose(h.pdf.weights, raw / raw.sum(), rtol=1e-12)
        assert h.weight == pytest.approx(0.9 * 0.5 * raw.sum(), rel=1e-12)

    def test_underflow_flags_degenerate(self):
        sensor = make_position_sensor(1, 1, 1.0, 0.9, 1.0)
        h = update_detected_hypothesis(_track(0.9, [0.0], [[1.0]]), sensor, np.array([1e9]), 0)
        assert h.weight == 0.0
        assert h.degenerate


class TestBuildProblem:
    def test_no_measurements(self):
        model = _world()
        tracks = [_track(0.5, [4.0], [[1.0]]), _track(0.8, [9.0], [[1.0]], track_id=1)]
        scan = build_association_problem(tracks, np.zeros((0, 1)), zero_intensity(model.region), model, np.inf)
        assert scan.problem.n_tracks == 2
        assert scan.problem.n_measurements == 0
        for row in scan.hyps:
            assert set(row) == {MISS}
        np.testing.assert_allclose(scan.problem.miss_weight, [0.75, 0.6])

    def test_one_track_one_measurement_layout(self):
        model = _world(pd=0.5, clutter=2.0)
        grid = GridIntensity(model.region, np.full(20, 0.1))
        t = _track(0.5, [10.0], [[1.0]])
        z = np.array([[10.4]])
        scan = build_association_problem([t], z, grid, model, np.inf)
        p = scan.problem
        assert p.n_tracks == 2 and p.n_existing == 1
        assert p.miss_weight[0] == pytest.approx(0.75)
        assert p.miss_weight[1] == 1.0
        det = update_detected_hypothesis(t, model.sensor, z[0], 0)
        assert p.det_weight[0, 0] == pytest.approx(det.weight, rel=1e-12)
        assert p.det_weight[1, 0] == pytest.approx(scan.new_weights[0], rel=1e-12)
        assert scan.new_weights[0] > model.clutter_density  # grid adds mass
        assert 0.0 < scan.new_existence[0] < 1.0

    def test_full_gating_counts(self):
        rng = np.random.default_rng(42)
        model = _world()
        grid = GridIntensity(model.region, np.full(20, 0.05))
        tracks = [
            _track(0.5, [float(rng.uniform(5, 15))], [[1.0]], track_id=k) for k in range(3)
        ]
        z = rng.uniform(5, 15, size=(4, 1))
        scan = build_association_problem(tracks, z, grid, model, np.inf)
        assert scan.problem.n_tracks == 3 + 4
        for row in scan.hyps[:3]:
            assert len(row) == 5      # MISS plus every measurement
        for j, row in enumerate(scan.hyps[3:]):
            assert set(row) == {MISS, j}

    def test_det_existence_matrix(self):
        model = _world()
        grid = GridIntensity(model.region, np.full(20, 0.05))
        t = _track(0.5, [10.0], [[1.0]])
        scan = build_association_problem([t], np.array([[10.0]]), grid, model, np.inf)
        de = scan.det_existence()
        assert de.shape == (2, 1)
        assert de[0, 0] == 1.0
        assert de[1, 0] == pytest.approx(scan.new_existence[0])


class TestCollapse:
    def test_single_sure_hypothesis_identity(self):
        pdf = GaussianMixture(np.array([1.0]), [GaussianDensity(np.array([2.0]), np.eye(1))])
        hyps = {MISS: Hypothesis(MISS, 1.0, 0.4, pdf)}
        q, out, flagged = collapse_track(hyps, 1.0, np.zeros(0))
        assert q == pytest.approx(0.4)
        assert not flagged
        np.testing.assert_allclose(out.components[0].mean, [2.0])

    def test_weighted_existence_average(self):
        pdf = GaussianMixture(np.array([1.0]), [GaussianDensity(np.zeros(1), np.eye(1))])
        hyps = {
            MISS: Hypothesis(MISS, 1.0, 0.2, pdf),
            0: Hypothesis(0, 1.0, 1.0, pdf),
        }
        q, _, _ = collapse_track(hyps, 0.5, np.array([0.5]))
        assert q == pytest.approx(0.6)

    def test_first_moment_conserved(self):
        """q * mean of the collapsed track equals the marginal-weighted sum
        of per-hypothesis q * mean."""
        rng = np.random.default_rng(42)
        for _ in range(50):
            m = int(rng.integers(1, 4))
            hyps = {}
            p_det = rng.uniform(0.1, 1.0, size=m)
            p_miss = float(rng.uniform(0.1, 1.0))
            total = p_miss + p_det.sum()
            p_miss /= total
            p_det /= total
            per_hyp = []
            for a in [MISS] + list(range(m)):
                mean = rng.normal(size=2)
                qa = float(rng.uniform(0.1, 1.0)) if a == MISS else 1.0
                pdf = GaussianMixture(np.array([1.0]), [GaussianDensity(mean, np.eye(2))])
                hyps[a] = Hypothesis(a, 1.0, qa, pdf)
                per_hyp.append((a, qa, mean))
            q, mixture, _ = collapse_track(hyps, p_miss, p_det)
            moment = q * mixture_moments(mixture)[0]
            expect = sum(
                (p_miss if a == MISS else p_det[a]) * qa * mean for a, qa, mean in per_hyp
            )
            np.testing.assert_allclose(moment, expect, atol=1e-9)

    def test_negative_marginal_rejected(self):
        pdf = GaussianMixture(np.array([1.0]), [GaussianDensity(np.zeros(1), np.eye(1))])
        hyps = {MISS: Hypothesis(MISS, 1.0, 0.5, pdf)}
        with pytest.raises(DomainError):
            collapse_track(hyps, -0.5, np.zeros(0))

    def test_zero_existence_flagged_with_miss_pdf(self):
        pdf = GaussianMixture(np.array([1.0]), [GaussianDensity(np.array([7.0]), np.eye(1))])
        hyps = {MISS: Hypothesis(MISS, 1.0, 0.0, pdf)}
        q, out, flagged = collapse_track(hyps, 1.0, np.zeros(0))
        assert q == 0.0
        assert flagged
        np.testing.assert_allclose(out.components[0].mean, [7.0])


class TestSingleTargetEquivalence:
    """One existing track, zero grid: expand/solve/collapse equals the
    independently coded single-target Bernoulli measurement update."""

    def _compare(self, q, mean, var, pd, clutter_rate, zs):
        model = _world(pd=pd, clutter=clutter_rate)
        t = _track(q, [mean], [[var]])
        scan = build_association_problem(
            [t], np.asarray(zs, dtype=float).reshape(-1, 1),
            zero_intensity(model.region), model, np.inf,
        )
        marg = exact_marginals(scan.problem)
        q_out, pdf, _ = collapse_track(scan.hyps[0], marg.track_miss[0], marg.track_det[0])

        oracle = JottOracle(
            transition=np.eye(1), process_noise=np.zeros((1, 1)),
            obs=np.eye(1), obs_noise=np.eye(1),
            pd=pd, survival=1.0, clutter_density=model.clutter_density,
            existence=q, mean=np.array([mean]), cov=np.array([[var]]),
        )
        q_ref, mean_ref, cov_ref = oracle.step(np.asarray(zs, dtype=float).reshape(-1, 1))
        assert q_out == pytest.approx(q_ref, abs=1e-12)
        got_mean, got_cov = mixture_moments(pdf)
        np.testing.assert_allclose(got_mean, mean_ref, atol=1e-10)
        np.testing.assert_allclose(got_cov, cov_ref, atol=1e-10)

    def test_no_measurements(self):
        self._compare(0.7, 10.0, 2.0, 0.6, 3.0, np.zeros((0, 1)))

    def test_one_measurement(self):
        self._compare(0.7, 10.0, 2.0, 0.6, 3.0, [[10.8]])

    def test_three_measurements(self):
        self._compare(0.55, 10.0, 1.5, 0.8, 4.0, [[9.1], [10.6], [12.0]])

    def test_random_battery(self):
        rng = np.random.default_rng(42)
        for _ in range(25):
            q = float(rng.uniform(0.05, 0.95))
            mean = float(rng.uniform(5, 15))
            var = float(rng.uniform(0.5, 3.0))
            pd = float(rng.uniform(0.1, 0.9))
            m = int(rng.integers(0, 4))
            zs = rng.uniform(5, 15, size=(m, 1))
            self._compare(q, mean, var, pd, 3.0, zs)
