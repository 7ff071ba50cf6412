"""Unit tests for interface geometry, one-sided extension and two-sided calculus."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from engines.interface_engine import (advect_interface, anchor, boundary_integral, build_interface, check_cfl,
                                      extend_boundary_values, jump, level_set_from_labels, masks,
                                      normal_jump, normal_traces, one_sided_extend, project_normal_continuity,
                                      reg_curl2, reg_grad, reextend, tangential_jump)
from models.field_models import ScalarField, VectorField, make_grid
from models.interface_models import BoundaryFunction, PiecewiseScalar, PiecewiseVector
from utils.errors import InterfaceError, NumericalError


def _two_sided(interface, plus, minus):
    grid = interface.grid
    return PiecewiseVector(interface, VectorField.constant(grid, plus), VectorField.constant(grid, minus))


class TestBuildInterface:
    """Level-set construction and boundary samples."""

    def test_straight_line_length(self, horizontal64):
        assert horizontal64.length == pytest.approx(1.0, rel=0.01)

    def test_circle_length(self, circle64):
        assert circle64.length == pytest.approx(2.0 * np.pi * 0.25, rel=0.01)

    def test_constant_level_set_is_empty(self, grid32):
        with pytest.raises(InterfaceError, match="empty interface"):
            build_interface(ScalarField.constant(grid32, 1.0))

    def test_normals_point_into_plus_side(self, horizontal64, circle64):
        np.testing.assert_allclose(horizontal64.samples.normals[:, 1], 1.0, atol=1e-12)
        # inner disk is D+, so normals point toward the center
        radial = circle64.samples.points - 0.5
        assert np.all(np.sum(radial * circle64.samples.normals, axis=1) < 0.0)

    def test_signed_distance_is_eikonal_on_band(self, circle64):
        grid = circle64.grid
        gx, gy = np.gradient(circle64.sdf.values, grid.hy, grid.hx)[::-1]
        band = circle64.band
        band[[0, -1], :] = False
        band[:, [0, -1]] = False
        assert np.max(np.abs(np.hypot(gx, gy)[band] - 1.0)) <= 0.1

    def test_band_reaching_past_the_centre_of_a_small_circle(self, grid32):
        # the default band (4 cells) covers the kink of the distance at the centre
        X, Y = grid32.coordinates
        radius = 0.15234375
        interface = build_interface(ScalarField(grid32, radius - np.hypot(X - 0.5, Y - 0.5)))
        assert interface.band_width > radius - 2.0 * grid32.max_spacing
        assert interface.length == pytest.approx(2.0 * np.pi * radius, rel=0.02)
        region = masks(interface)
        np.testing.assert_array_equal(region.chi_plus.values + region.chi_minus.values, 1.0)

    def test_label_image_round_trip(self, grid64):
        _, Y = grid64.coordinates
        labels = Y > 0.5
        interface = build_interface(level_set_from_labels(labels, grid64))
        assert np.array_equal(interface.plus_mask, labels)
        assert np.mean(interface.samples.points[:, 1]) == pytest.approx(0.5, abs=grid64.hy)


class TestMasksAndExtension:
    """Partition of nodes and nearest-inside-node extension."""

    def test_horizontal_partition_counts(self, horizontal64):
        region = masks(horizontal64)
        assert int(region.plus.sum()) == 2048
        assert int(region.minus.sum()) == 2048

    def test_circle_area(self, circle64):
        grid = circle64.grid
        area = masks(circle64).plus.sum() * grid.hx * grid.hy
        assert abs(area - np.pi * 0.25 ** 2) <= 2.0 * grid.max_spacing

    @settings(max_examples=15, deadline=None)
    @given(radius=st.floats(0.15, 0.35), cx=st.floats(0.4, 0.6))
    def test_masks_partition(self, radius, cx):
        grid = make_grid(32, 32)
        X, Y = grid.coordinates
        region = masks(build_interface(ScalarField(grid, radius - np.hypot(X - cx, Y - 0.5))))
        np.testing.assert_array_equal(region.chi_plus.values + region.chi_minus.values, 1.0)

    def test_constant_extends_to_constant(self, horizontal32):
        grid = horizontal32.grid
        region = masks(horizontal32)
        field = ScalarField(grid, np.where(region.plus, 3.0, -7.0))
        np.testing.assert_array_equal(one_sided_extend(field, region, "plus").values, 3.0)

    def test_extension_keeps_side_values_and_is_idempotent(self, horizontal32, rng):
        grid = horizontal32.grid
        region = masks(horizontal32)
        field = ScalarField(grid, rng.standard_normal(grid.shape))
        once = one_sided_extend(field, region, "minus")
        twice = one_sided_extend(once, region, "minus")
        np.testing.assert_array_equal(once.values[region.minus], field.values[region.minus])
        np.testing.assert_array_equal(once.values, twice.values)

    def test_affine_trace_extension_near_interface(self, horizontal32):
        grid = horizontal32.grid
        X, _ = grid.coordinates
        region = masks(horizontal32)
        ext = one_sided_extend(ScalarField(grid, X), region, "plus")
        below = horizontal32.band & region.minus
        np.testing.assert_allclose(ext.values[below], X[below], atol=grid.max_spacing)

    def test_reextend_is_idempotent(self, horizontal32, rng):
        grid = horizontal32.grid
        v = PiecewiseVector(horizontal32, VectorField(grid, *rng.standard_normal((2,) + grid.shape)),
                            VectorField(grid, *rng.standard_normal((2,) + grid.shape)))
        once = reextend(v, horizontal32)
        twice = reextend(once, horizontal32)
        np.testing.assert_array_equal(once.plus_part.vx, twice.plus_part.vx)
        np.testing.assert_array_equal(once.minus_part.vy, twice.minus_part.vy)

    def test_empty_side_rejected(self, grid32):
        X, _ = grid32.coordinates
        region = masks(None, grid32)
        with pytest.raises(InterfaceError):
            one_sided_extend(ScalarField(grid32, X), region, "minus")


class TestJumpAndDerivatives:
    """Traces, jumps and per-side derivatives."""

    def test_continuous_field_has_no_jump(self, horizontal32):
        grid = horizontal32.grid
        X, Y = grid.coordinates
        f = ScalarField(grid, X * Y)
        np.testing.assert_array_equal(jump(PiecewiseScalar(horizontal32, f, f)).values, 0.0)

    def test_indicator_jump(self, horizontal32):
        grid = horizontal32.grid
        f = PiecewiseScalar(horizontal32, ScalarField.constant(grid, 1.0), ScalarField.zeros(grid))
        np.testing.assert_allclose(jump(f).values, 1.0, atol=1e-6)

    def test_affine_jump(self, horizontal32):
        grid = horizontal32.grid
        X, _ = grid.coordinates
        f = PiecewiseScalar(horizontal32, ScalarField(grid, X + 1.0), ScalarField(grid, X))
        np.testing.assert_allclose(jump(f).values, 1.0, atol=2.0 * grid.max_spacing)

    def test_piecewise_constant_has_no_gradient_spike(self, horizontal32):
        grid = horizontal32.grid
        f = PiecewiseScalar(horizontal32, ScalarField.constant(grid, 1.0), ScalarField.zeros(grid))
        g = reg_grad(f).composite()
        np.testing.assert_allclose(g.vx, 0.0, atol=1e-12)
        np.testing.assert_allclose(g.vy, 0.0, atol=1e-12)

    def test_smooth_field_matches_plain_gradient(self, horizontal32):
        grid = horizontal32.grid
        X, Y = grid.coordinates
        f = ScalarField(grid, np.sin(X) * Y ** 2)
        g = reg_grad(PiecewiseScalar.smooth(f)).plus_part
        np.testing.assert_allclose(g.vx[2:-2, 2:-2], (np.cos(X) * Y ** 2)[2:-2, 2:-2], atol=5e-3)

    def test_rotation_curl(self, horizontal32):
        grid = horizontal32.grid
        X, Y = grid.coordinates
        m = VectorField(grid, -Y, X)
        c = reg_curl2(PiecewiseVector(horizontal32, m, m)).composite()
        np.testing.assert_allclose(c.values, 2.0, atol=1e-10)

    def test_tangential_jump_of_sliding_field(self, horizontal32):
        v = _two_sided(horizontal32, (1.0, 0.0), (-1.0, 0.0))
        # tangent is (-n_y, n_x) = (-1, 0)
        np.testing.assert_allclose(tangential_jump(v, horizontal32).values, -2.0, atol=1e-12)
        np.testing.assert_allclose(normal_jump(v).values, 0.0, atol=1e-12)


class TestBoundaryQuadrature:
    """Boundary integrals and the anchor map."""

    def test_zero_density(self, circle64):
        grid = circle64.grid
        g = extend_boundary_values(circle64, np.zeros(circle64.samples.count))
        assert np.all(g == 0.0)
        assert boundary_integral(BoundaryFunction.zeros(circle64), VectorField.constant(grid, (1.0, 2.0))) == 0.0

    def test_circle_normal_flux(self, circle64):
        ones = BoundaryFunction(circle64, np.ones(circle64.samples.count))
        flux = boundary_integral(ones, circle64.normals)
        assert abs(flux) == pytest.approx(2.0 * np.pi * 0.25, rel=0.02)

    def test_anchor_of_sliding_field_is_zero(self, horizontal32):
        v = _two_sided(horizontal32, (0.7, 0.0), (-0.3, 0.0))
        np.testing.assert_allclose(anchor(v).values, 0.0, atol=1e-12)

    def test_anchor_of_normal_field(self, circle64):
        np.testing.assert_allclose(anchor(circle64.normals, circle64).values, 1.0, atol=0.02)

    def test_anchor_of_translation_across_vertical_line(self, grid32):
        X, _ = grid32.coordinates
        interface = build_interface(ScalarField(grid32, X - 0.5))
        v = VectorField.constant(grid32, (0.4, 0.0))
        np.testing.assert_allclose(anchor(v, interface).values, 0.4, atol=1e-12)


class TestProjection:
    """Normal-continuity projection onto admissible fields."""

    def test_admissible_field_is_fixed_point(self, horizontal32):
        v = _two_sided(horizontal32, (1.0, 0.0), (-1.0, 0.0))
        p = project_normal_continuity(v)
        np.testing.assert_allclose(p.plus_part.vx, v.plus_part.vx, atol=1e-12)
        np.testing.assert_allclose(p.minus_part.vy, v.minus_part.vy, atol=1e-12)

    def test_opposite_normal_motion_is_averaged(self, horizontal32):
        v = _two_sided(horizontal32, (0.0, 1.0), (0.0, -1.0))
        a_plus, a_minus = normal_traces(project_normal_continuity(v), horizontal32)
        np.testing.assert_allclose(a_plus, 0.0, atol=1e-3)
        np.testing.assert_allclose(a_minus, 0.0, atol=1e-3)

    def test_projection_is_idempotent(self, circle64, rng):
        grid = circle64.grid
        v = PiecewiseVector(circle64, VectorField(grid, *rng.uniform(-1, 1, (2,) + grid.shape)),
                            VectorField(grid, *rng.uniform(-1, 1, (2,) + grid.shape)))
        once = project_normal_continuity(v)
        twice = project_normal_continuity(once)
        np.testing.assert_allclose(twice.plus_part.vx, once.plus_part.vx, atol=1e-7)
        np.testing.assert_allclose(twice.minus_part.vy, once.minus_part.vy, atol=1e-7)

    def test_linear_combinations_stay_admissible(self, horizontal32, rng):
        grid = horizontal32.grid

        def admissible():
            return project_normal_continuity(PiecewiseVector(
                horizontal32, VectorField(grid, *rng.uniform(-1, 1, (2,) + grid.shape)),
                VectorField(grid, *rng.uniform(-1, 1, (2,) + grid.shape))))

        a, b = admissible(), admissible()
        combined = a.axpy(-0.7, b) * 2.5
        assert type(combined) is type(a)
        assert np.max(np.abs(normal_jump(combined).values)) <= 1e-3 * (1.0 + combined.max_norm())

    def test_random_jump_is_removed_on_straight_line(self, horizontal32, rng):
        grid = horizontal32.grid
        v = PiecewiseVector(horizontal32, VectorField(grid, *rng.uniform(-1, 1, (2,) + grid.shape)),
                            VectorField(grid, *rng.uniform(-1, 1, (2,) + grid.shape)))
        p = project_normal_continuity(v)
        assert np.max(np.abs(normal_jump(p).values)) <= 1e-3 * (1.0 + v.max_norm())
        np.testing.assert_allclose(tangential_jump(p, horizontal32).values,
                                   tangential_jump(v, horizontal32).values, atol=1e-10)


class TestAdvection:
    """Semi-Lagrangian level-set transport."""

    def test_zero_velocity_keeps_interface(self, horizontal32):
        moved = advect_interface(horizontal32, VectorField.zeros(horizontal32.grid), 0.1)
        np.testing.assert_allclose(moved.sdf.values, horizontal32.sdf.values, atol=1e-12)

    def test_uniform_translation(self, horizontal64):
        moved = advect_interface(horizontal64, VectorField.constant(horizontal64.grid, (0.0, 0.1)), 0.1)
        assert np.mean(moved.samples.points[:, 1]) == pytest.approx(0.51, abs=horizontal64.grid.max_spacing)

    def test_sliding_keeps_interface(self, horizontal64):
        v = _two_sided(horizontal64, (0.1, 0.0), (-0.1, 0.0))
        moved = advect_interface(horizontal64, v, 0.1)
        assert np.max(np.abs(moved.samples.points[:, 1] - 0.5)) <= 0.5 * horizontal64.grid.max_spacing

    def test_forward_then_backward(self, circle64):
        grid = circle64.grid
        v = VectorField.constant(grid, (0.05, 0.02))
        back = advect_interface(advect_interface(circle64, v, 0.2), -v, 0.2)
        band = circle64.band
        assert np.max(np.abs(back.sdf.values - circle64.sdf.values)[band]) <= 2.0 * grid.max_spacing

    def test_cfl_violation(self, grid32):
        with pytest.raises(NumericalError, match="CFL"):
            check_cfl(VectorField.constant(grid32, (1.0, 0.0)), 0.5, grid32)
