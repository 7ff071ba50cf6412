"""Unit tests for arrows of the deformation groupoid."""

import numpy as np
import pytest

from analyzers.property_suite import sliding_arrow
from engines.groupoid_engine import (act_on_image, compose, compose_maps, identity_element, inverse,
                                     invert_position_map, jacobian_determinant, jacobian_determinants,
                                     map_distance, min_side_jacobian, side_landing_fraction)
from engines.interface_engine import build_interface
from models.field_models import ScalarField, VectorField
from models.groupoid_models import GroupoidElement
from tests.conftest import envelope
from utils.errors import CompositionError, GridError, NumericalError


def _translation(grid, dx, dy):
    X, Y = grid.coordinates
    return VectorField(grid, X + dx, Y + dy)


@pytest.fixture
def smooth_shift(grid32):
    return GroupoidElement(grid32, None, None, _translation(grid32, 0.1, 0.0), _translation(grid32, 0.1, 0.0),
                           _translation(grid32, -0.1, 0.0), _translation(grid32, -0.1, 0.0))


class TestPositionMaps:
    """Composition and inversion of single position maps."""

    def test_identity_is_neutral(self, grid32):
        X, Y = grid32.coordinates
        env = envelope(grid32)
        phi = VectorField(grid32, X + 0.05 * env, Y - 0.04 * env)
        ident = VectorField.identity_map(grid32)
        for composed in (compose_maps(ident, phi), compose_maps(phi, ident)):
            np.testing.assert_allclose(composed.vx, phi.vx, atol=1e-12)
            np.testing.assert_allclose(composed.vy, phi.vy, atol=1e-12)

    def test_translations_add(self, grid32):
        composed = compose_maps(_translation(grid32, 0.1, 0.0), _translation(grid32, 0.0, -0.2))
        X, Y = grid32.coordinates
        np.testing.assert_allclose(composed.vx, X + 0.1, atol=1e-12)
        np.testing.assert_allclose(composed.vy, Y - 0.2, atol=1e-12)

    def test_inverse_of_smooth_map(self, grid32):
        X, Y = grid32.coordinates
        env = envelope(grid32)
        phi = VectorField(grid32, X + 0.05 * env, Y + 0.03 * env)
        psi = invert_position_map(phi)
        back = compose_maps(phi, psi)
        assert np.max(np.hypot(back.vx - X, back.vy - Y)) <= 1e-5

    def test_inversion_iterations_exhausted(self, grid32):
        X, Y = grid32.coordinates
        phi = VectorField(grid32, X + 0.05 * envelope(grid32), Y)
        with pytest.raises(NumericalError, match="did not converge"):
            invert_position_map(phi, max_iter=0)

    def test_jacobian_of_linear_map(self, grid32):
        X, Y = grid32.coordinates
        np.testing.assert_allclose(jacobian_determinant(VectorField(grid32, 2.0 * X, 3.0 * Y)), 6.0, atol=1e-10)
        np.testing.assert_allclose(jacobian_determinant(VectorField.identity_map(grid32)), 1.0, atol=1e-12)


class TestGroupoidLaws:
    """Identity, inverse and composability of piecewise arrows."""

    def test_element_needs_both_interfaces(self, horizontal32):
        ident = VectorField.identity_map(horizontal32.grid)
        with pytest.raises(GridError):
            GroupoidElement(horizontal32.grid, horizontal32, None, ident, ident, ident, ident)

    def test_identity_laws(self, horizontal32, rng):
        g = sliding_arrow(horizontal32, rng)
        e = identity_element(horizontal32)
        assert map_distance(compose(e, g), g) <= 1e-12
        assert map_distance(compose(g, e), g) <= 1e-12

    def test_inverse_law(self, horizontal64, rng):
        g = sliding_arrow(horizontal64, rng)
        e = identity_element(horizontal64)
        diam = horizontal64.grid.diameter
        assert map_distance(compose(inverse(g), g), e) <= 5e-3 * diam
        assert map_distance(compose(g, inverse(g)), e) <= 5e-3 * diam

    def test_associativity(self, horizontal64, rng):
        f, g, k = (sliding_arrow(horizontal64, rng) for _ in range(3))
        left = compose(compose(k, g), f)
        right = compose(k, compose(g, f))
        assert map_distance(left, right) <= horizontal64.grid.max_spacing ** 2

    def test_mismatched_interfaces_do_not_compose(self, grid32, horizontal32):
        _, Y = grid32.coordinates
        shifted = build_interface(ScalarField(grid32, Y - 0.7))
        with pytest.raises(CompositionError, match="non-composable"):
            compose(identity_element(shifted), identity_element(horizontal32))

    def test_smooth_and_piecewise_do_not_compose(self, grid32, horizontal32):
        with pytest.raises(CompositionError):
            compose(identity_element(None, grid32), identity_element(horizontal32))

    def test_inverse_swaps_interfaces(self, grid32, horizontal32):
        _, Y = grid32.coordinates
        shifted = build_interface(ScalarField(grid32, Y - 0.55))
        ident = VectorField.identity_map(grid32)
        g = GroupoidElement(grid32, horizontal32, shifted, ident, ident, ident, ident)
        g_inv = inverse(g)
        assert g_inv.gamma_src is shifted
        assert g_inv.gamma_trg is horizontal32


class TestDiagnostics:
    """Per-side Jacobians, landing fraction and image action."""

    def test_sliding_arrow_is_diffeomorphic(self, horizontal64, rng):
        g = sliding_arrow(horizontal64, rng)
        dets = jacobian_determinants(g)
        assert dets["plus"].size + dets["minus"].size == horizontal64.grid.size
        assert min_side_jacobian(g) > 0.0
        assert side_landing_fraction(g) >= 0.99

    def test_identity_statistics(self, horizontal32):
        e = identity_element(horizontal32)
        assert min_side_jacobian(e) == pytest.approx(1.0)
        assert side_landing_fraction(e) == 1.0

    def test_crossing_map_lands_on_wrong_side(self, horizontal32):
        grid = horizontal32.grid
        ident = VectorField.identity_map(grid)
        down = _translation(grid, 0.0, -0.3)
        g = GroupoidElement(grid, horizontal32, horizontal32, down, ident, _translation(grid, 0.0, 0.3), ident)
        assert side_landing_fraction(g) < 0.9

    def test_identity_action(self, horizontal32, rng):
        image = ScalarField(horizontal32.grid, rng.uniform(size=horizontal32.grid.shape))
        warped = act_on_image(identity_element(horizontal32), image)
        np.testing.assert_array_equal(warped.values, image.values)

    def test_translation_action(self, smooth_shift, grid32):
        X, _ = grid32.coordinates
        warped = act_on_image(smooth_shift, ScalarField(grid32, X))
        inside = X >= 0.1 + 1e-9
        np.testing.assert_allclose(warped.values[inside], X[inside] - 0.1, atol=1e-12)

    def test_sides_act_independently(self, horizontal32):
        grid = horizontal32.grid
        X, _ = grid.coordinates
        right, left = _translation(grid, 0.1, 0.0), _translation(grid, -0.1, 0.0)
        g = GroupoidElement(grid, horizontal32, horizontal32, right, left, left, right)
        warped = act_on_image(g, ScalarField(grid, X)).values
        interior = (X >= 0.1 + 1e-9) & (X <= 0.9 - 1e-9)
        plus = horizontal32.plus_mask & interior
        minus = ~horizontal32.plus_mask & interior
        np.testing.assert_allclose(warped[plus], X[plus] - 0.1, atol=1e-12)
        np.testing.assert_allclose(warped[minus], X[minus] + 0.1, atol=1e-12)
