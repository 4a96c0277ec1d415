"""Scenario model declarations: region geometry, motion and sensor factories,
birth distributions, and the structural validator."""

import numpy as np
import pytest

from bpmtf.errors import ConfigurationError
from bpmtf.models import (
    ModelBundle,
    MotionModel,
    Region,
    SensorModel,
    diffusion_covariance,
    make_cv_motion,
    make_position_sensor,
    make_static_motion,
    sensor_measures_position,
    uniform_birth,
    validate_model,
)


def _bundle(pd=0.9, clutter=5.0, survival=0.99):
    region = Region([-10.0, -10.0], [10.0, 10.0], (20, 20))
    motion = make_cv_motion(2, 1.0, 0.3, survival)
    sensor = make_position_sensor(4, 2, 1.0, pd, clutter)
    birth = uniform_birth(region, 0.2, 0.25 * np.eye(2))
    return ModelBundle(region, motion, sensor, birth)


class TestRegion:
    def test_geometry(self):
        r = Region([-10.0, -10.0], [10.0, 10.0], (20, 40))
        assert r.dim == 2
        np.testing.assert_allclose(r.cell_widths, [1.0, 0.5])
        assert r.cell_volume == pytest.approx(0.5)
        assert r.volume == pytest.approx(400.0)

    def test_edges_and_centers(self):
        r = Region([0.0], [4.0], (4,))
        np.testing.assert_allclose(r.axis_edges(0), [0, 1, 2, 3, 4])
        np.testing.assert_allclose(r.axis_centers(0), [0.5, 1.5, 2.5, 3.5])
        centers = r.cell_centers()
        assert centers.shape == (4, 1)

    def test_cell_centers_lattice(self):
        r = Region([0.0, 0.0], [2.0, 3.0], (2, 3))
        centers = r.cell_centers()
        assert centers.shape == (6, 2)
        # row-major over axes: first axis varies slowest
        np.testing.assert_allclose(centers[0], [0.5, 0.5])
        np.testing.assert_allclose(centers[1], [0.5, 1.5])
        np.testing.assert_allclose(centers[-1], [1.5, 2.5])

    def test_contains(self):
        r = Region([0.0, 0.0], [1.0, 1.0], (2, 2))
        inside = r.contains(np.array([[0.5, 0.5], [2.0, 0.5]]))
        np.testing.assert_array_equal(inside, [True, False])

    def test_degenerate_bounds_rejected(self):
        with pytest.raises(ConfigurationError):
            Region([0.0], [0.0], (4,))
        with pytest.raises(ConfigurationError):
            Region([0.0], [1.0], (0,))


class TestFactories:
    def test_cv_blocks(self):
        m = make_cv_motion(2, 0.5, 0.4, 0.97)
        assert m.state_dim == 4
        assert m.survival == pytest.approx(0.97)
        np.testing.assert_allclose(m.trans[:2, 2:], 0.5 * np.eye(2))
        np.testing.assert_allclose(m.trans[2:, :2], np.zeros((2, 2)))
        q = 0.4 ** 2
        np.testing.assert_allclose(m.noise[:2, :2], q * 0.5 ** 4 / 4 * np.eye(2))
        np.testing.assert_allclose(m.noise[:2, 2:], q * 0.5 ** 3 / 2 * np.eye(2))
        np.testing.assert_allclose(m.noise[2:, 2:], q * 0.5 ** 2 * np.eye(2))

    def test_static_motion(self):
        m = make_static_motion(2, 0.3, 1.0)
        np.testing.assert_allclose(m.trans, np.eye(2))
        np.testing.assert_allclose(m.noise, 0.09 * np.eye(2))
        assert m.position_dim == 2

    def test_position_sensor(self):
        s = make_position_sensor(4, 2, 2.0, 0.8, 3.0)
        assert s.meas_dim == 2
        np.testing.assert_allclose(s.obs, [[1, 0, 0, 0], [0, 1, 0, 0]])
        np.testing.assert_allclose(s.noise, 4.0 * np.eye(2))
        assert sensor_measures_position(s, 2)
        assert not sensor_measures_position(SensorModel(np.array([[0.0, 1.0]]), np.eye(1), 0.5, 1.0), 1)

    def test_uniform_birth_mass(self):
        region = Region([-10.0, -10.0], [10.0, 10.0], (20, 20))
        b = uniform_birth(region, 0.4, 0.25 * np.eye(2))
        assert b.cells.shape == (20, 20)
        assert b.total_rate == pytest.approx(0.4, rel=1e-12)
        # uniform: every cell carries the same share
        assert np.ptp(b.cells) == 0.0

    def test_motion_validation(self):
        with pytest.raises(ConfigurationError):
            MotionModel(np.eye(2), np.array([[1.0, 0.5], [0.4, 1.0]]), 0.9, position_dim=2)
        with pytest.raises(ConfigurationError):
            MotionModel(np.eye(2), np.eye(2), 1.5, position_dim=2)

    def test_diffusion_covariance(self):
        """Position-block covariance after one step from a point with the
        configured velocity scatter."""
        motion = make_cv_motion(2, 1.0, 0.2, 1.0)
        vp = 0.25 * np.eye(2)
        out = diffusion_covariance(motion, vp)
        full = np.zeros((4, 4))
        full[2:, 2:] = vp
        expect = (motion.trans @ full @ motion.trans.T + motion.noise)[:2, :2]
        np.testing.assert_allclose(out, expect, atol=1e-12)
        np.testing.assert_allclose(out, out.T, atol=1e-15)


class TestBundle:
    def test_clutter_density(self):
        b = _bundle(clutter=8.0)
        assert b.clutter_density == pytest.approx(8.0 / 400.0)

    def test_embed_position(self):
        b = _bundle()
        out = b.embed_position(np.array([[1.0, 2.0]]))
        np.testing.assert_allclose(out, [[1.0, 2.0, 0.0, 0.0]])

    def test_validate_ok(self):
        assert validate_model(_bundle()) == []

    def test_sure_detection_rejected(self):
        """detection probability exactly 1 breaks the missed-detection
        weights, so the validator refuses it outright."""
        with pytest.raises(ConfigurationError) as err:
            validate_model(_bundle(pd=1.0))
        assert "sensor.detectionProb" in str(err.value)

    def test_zero_clutter_warns(self):
        warnings = validate_model(_bundle(clutter=0.0))
        assert len(warnings) == 1
        assert "clutterRate" in warnings[0]

    def test_sure_survival_warns(self):
        warnings = validate_model(_bundle(survival=1.0))
        assert any("survival" in w for w in warnings)

    def test_mismatched_region_dim(self):
        region = Region([-10.0], [10.0], (20,))
        motion = make_cv_motion(2, 1.0, 0.3, 0.99)
        sensor = make_position_sensor(4, 2, 1.0, 0.9, 5.0)
        birth = uniform_birth(region, 0.2, 0.25 * np.eye(2))
        with pytest.raises(ConfigurationError):
            validate_model(ModelBundle(region, motion, sensor, birth))

    def test_validate_idempotent(self):
        b = _bundle(clutter=0.0)
        first = list(validate_model(b))
        second = list(validate_model(b))
        assert first == second
