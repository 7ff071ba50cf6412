"""Unit tests for synthetic sliding scenarios and their ground truth."""

import numpy as np
import pytest

from analyzers.metrics import re_ssd
from engines.groupoid_engine import act_on_image, min_side_jacobian
from generators.scenario_generator import gen_bump_pair, gen_noise_pair, gen_rectangle, gen_wheel
from utils.errors import ConfigError


class TestRectangle:
    @pytest.fixture(scope="class")
    def scenario(self):
        return gen_rectangle(64, 0.1)

    def test_interface_is_the_midline(self, scenario):
        assert scenario.truth_interface.length == pytest.approx(1.0, rel=0.01)
        points = scenario.truth_interface.samples.points
        np.testing.assert_allclose(points[:, 1], 0.5, atol=1e-12)

    def test_truth_warp_reproduces_fixed(self, scenario):
        warped = act_on_image(scenario.truth_element, scenario.moving)
        assert re_ssd(scenario.moving, scenario.fixed, warped) <= 5.0

    def test_images_differ_before_registration(self, scenario):
        assert np.max(np.abs(scenario.moving.values - scenario.fixed.values)) > 0.3

    def test_intensity_range(self, scenario):
        assert scenario.moving.values.min() >= 0.0
        assert scenario.moving.values.max() <= 1.0

    def test_interior_is_not_shift_invariant(self, scenario):
        X, Y = scenario.moving.grid.coordinates
        interior = (Y > 0.55) & (Y < 0.75) & (X > 0.4) & (X < 0.7)
        gap = np.abs(scenario.moving.values - scenario.fixed.values)[interior]
        assert gap.min() > 0.05

    def test_interior_brightness_increases_left_to_right(self, scenario):
        row = scenario.moving.values[scenario.moving.grid.ny // 2]
        X, _ = scenario.moving.grid.coordinates
        inside = (X[0] > 0.3) & (X[0] < 0.7)
        assert np.all(np.diff(row[inside]) > 0)

    def test_shift_is_bounded(self):
        with pytest.raises(ConfigError, match="shift"):
            gen_rectangle(32, 0.3)


class TestWheel:
    @pytest.fixture(scope="class")
    def scenario(self):
        return gen_wheel(64, 5.0)

    def test_interface_is_the_circle(self, scenario):
        assert scenario.truth_interface.length == pytest.approx(2.0 * np.pi * 0.25, rel=0.01)

    def test_truth_warp_reproduces_fixed(self, scenario):
        warped = act_on_image(scenario.truth_element, scenario.moving)
        assert re_ssd(scenario.moving, scenario.fixed, warped) <= 5.0

    def test_truth_is_rigid_per_side(self, scenario):
        assert min_side_jacobian(scenario.truth_element) == pytest.approx(1.0, abs=1e-6)

    def test_angle_is_bounded(self):
        with pytest.raises(ConfigError, match="degrees"):
            gen_wheel(32, 20.0)


def test_bump_pair_is_translated():
    moving, fixed = gen_bump_pair(64, (0.1, 0.0))
    X, _ = moving.grid.coordinates
    peak_moving = X.ravel()[np.argmax(moving.values)]
    peak_fixed = X.ravel()[np.argmax(fixed.values)]
    assert peak_fixed - peak_moving == pytest.approx(0.1, abs=moving.grid.hx)


def test_noise_pair_is_seeded():
    a1, b1 = gen_noise_pair(16, seed=3)
    a2, b2 = gen_noise_pair(16, seed=3)
    a3, _ = gen_noise_pair(16, seed=4)
    np.testing.assert_array_equal(a1.values, a2.values)
    np.testing.assert_array_equal(b1.values, b2.values)
    assert not np.array_equal(a1.values, a3.values)
    assert not np.array_equal(a1.values, b1.values)
