"""Composition, identity, inverse and image action of piecewise deformations."""

from __future__ import annotations

import logging
from typing import Dict, Optional

import numpy as np

from engines.grid_engine import bilinear, gradient_array, locate
from models.field_models import Grid2, ScalarField, VectorField
from models.groupoid_models import GroupoidElement
from models.interface_models import Interface
from utils.errors import CompositionError, NumericalError

logger = logging.getLogger(__name__)

SIDES = ("plus", "minus")


def compose_maps(outer: VectorField, inner: VectorField) -> VectorField:
    """``outer o inner`` by interpolating the displacement of ``outer``."""
    grid = outer.grid
    X, Y = grid.coordinates
    s = locate(grid, inner.vx, inner.vy)
    return VectorField(grid,
                       inner.vx + bilinear(outer.vx - X, grid, None, None, s),
                       inner.vy + bilinear(outer.vy - Y, grid, None, None, s))


def invert_position_map(phi: VectorField, initial: Optional[VectorField] = None,
                        tol: Optional[float] = None, max_iter: int = 50) -> VectorField:
    """
    Inverse of a position map by fixed-point iteration on the displacement.

    Iterates ``w <- -u(x + w)`` where ``phi = id + u`` until
    ``|phi(psi(x)) - x| <= tol`` (default ``1e-6 * diameter``).
    """
    grid = phi.grid
    X, Y = grid.coordinates
    tol = 1e-6 * grid.diameter if tol is None else tol
    ux, uy = phi.vx - X, phi.vy - Y
    if initial is None:
        wx, wy = -ux, -uy
    else:
        wx, wy = initial.vx - X, initial.vy - Y
    residual = np.inf
    for iteration in range(max_iter + 1):
        s = locate(grid, X + wx, Y + wy)
        ux_at = bilinear(ux, grid, None, None, s)
        uy_at = bilinear(uy, grid, None, None, s)
        residual = float(np.max(np.hypot(wx + ux_at, wy + uy_at)))
        if residual <= tol:
            logger.debug(f"Map inversion converged after {iteration} iterations (residual {residual:.2e})")
            return VectorField(grid, X + wx, Y + wy)
        wx, wy = -ux_at, -uy_at
    raise NumericalError(f"map inversion did not converge (residual {residual:.3e})")


def identity_element(gamma: Optional[Interface], grid: Optional[Grid2] = None) -> GroupoidElement:
    grid = gamma.grid if gamma is not None else grid
    ident = VectorField.identity_map(grid)
    return GroupoidElement(grid, gamma, gamma, ident, ident, ident, ident)


def interface_mismatch(a: Interface, b: Interface) -> float:
    """Sup of the signed-distance difference over both narrow bands."""
    band = a.band | b.band
    return float(np.max(np.abs(a.sdf.values - b.sdf.values)[band]))


def compose(g2: GroupoidElement, g1: GroupoidElement) -> GroupoidElement:
    """
    ``g2 o g1``: apply ``g1`` then ``g2``, side by side.

    Raises:
        CompositionError: when ``trg(g1)`` and ``src(g2)`` differ by more than h on the band
    """
    g1.grid.require_same(g2.grid)
    if g1.smooth != g2.smooth:
        raise CompositionError("non-composable arrows: smooth and piecewise")
    if not g1.smooth:
        gap = interface_mismatch(g2.gamma_src, g1.gamma_trg)
        if gap > g1.grid.max_spacing:
            raise CompositionError(f"non-composable arrows (interface gap {gap:.3e})")
    maps = {}
    for side in SIDES:
        maps[side] = (compose_maps(g2.forward(side), g1.forward(side)),
                      compose_maps(g1.backward(side), g2.backward(side)))
    return GroupoidElement(g1.grid, g1.gamma_src, g2.gamma_trg,
                           maps["plus"][0], maps["minus"][0], maps["plus"][1], maps["minus"][1])


def inverse(g: GroupoidElement) -> GroupoidElement:
    """Swap source and target; each side's forward map is re-inverted from the cached inverse."""
    forward = {side: invert_position_map(g.forward(side), initial=g.backward(side)) for side in SIDES}
    return GroupoidElement(g.grid, g.gamma_trg, g.gamma_src,
                           forward["plus"], forward["minus"], g.phi_plus, g.phi_minus)


def act_on_image(g: GroupoidElement, image: ScalarField) -> ScalarField:
    """``I o phi^-1``, choosing the side of each node from the target interface."""
    g.grid.require_same(image.grid)
    plus = bilinear(image.values, g.grid, g.inv_phi_plus.vx, g.inv_phi_plus.vy)
    if g.smooth:
        return ScalarField(g.grid, plus)
    minus = bilinear(image.values, g.grid, g.inv_phi_minus.vx, g.inv_phi_minus.vy)
    return ScalarField(g.grid, np.where(g.gamma_trg.plus_mask, plus, minus))


def jacobian_determinant(position_map: VectorField) -> np.ndarray:
    grid = position_map.grid
    xx, xy = gradient_array(position_map.vx, grid)
    yx, yy = gradient_array(position_map.vy, grid)
    return xx * yy - xy * yx


def side_masks(gamma: Optional[Interface], grid: Grid2) -> Dict[str, np.ndarray]:
    if gamma is None:
        return {"plus": np.ones(grid.shape, dtype=bool), "minus": np.zeros(grid.shape, dtype=bool)}
    plus = gamma.plus_mask
    return {"plus": plus, "minus": ~plus}


def jacobian_determinants(g: GroupoidElement) -> Dict[str, np.ndarray]:
    """Jacobian determinant of each forward map on the source nodes of its side."""
    sides = side_masks(g.gamma_src, g.grid)
    return {side: jacobian_determinant(g.forward(side))[mask] for side, mask in sides.items() if mask.any()}


def min_side_jacobian(g: GroupoidElement) -> float:
    dets = jacobian_determinants(g)
    return float(min(d.min() for d in dets.values()))


def side_landing_fraction(g: GroupoidElement) -> float:
    """Fraction of source nodes whose image lands on the same side of the target (margin h)."""
    if g.smooth:
        return 1.0
    h = g.grid.max_spacing
    landed, total = 0, 0
    for side, mask in side_masks(g.gamma_src, g.grid).items():
        phi = g.forward(side)
        sdf = bilinear(g.gamma_trg.sdf.values, g.grid, phi.vx[mask], phi.vy[mask])
        ok = sdf >= -h if side == "plus" else sdf <= h
        landed += int(ok.sum())
        total += int(mask.sum())
    return landed / max(total, 1)


def map_distance(a: GroupoidElement, b: GroupoidElement) -> float:
    """Sup distance between the forward maps of two arrows on the source side nodes of ``a``."""
    worst = 0.0
    for side, mask in side_masks(a.gamma_src, a.grid).items():
        if not mask.any():
            continue
        pa, pb = a.forward(side), b.forward(side)
        worst = max(worst, float(np.max(np.hypot(pa.vx - pb.vx, pa.vy - pb.vy)[mask])))
    return worst
