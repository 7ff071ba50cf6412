"""Level-set geometry of the sliding interface and two-sided field calculus.

Conventions:
  * D+ is ``sdf >= 0``; interface normals point into D+.
  * Boundary integrals carry the orientation the curve has as the boundary
    of D+, so they use the outward normal of D+ (``-n``). With this sign,
    ``boundary_integral(jump(f), v)`` equals
    ``integral(v . grad^R f) + integral(div^R(v) f)``.
"""

from __future__ import annotations

import logging
import weakref
from typing import Dict, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp
from scipy import ndimage
from skimage import measure

from engines.grid_engine import (bilinear, curl2_array, divergence_array, gradient_array, locate)
from models.algebroid_models import DVectField
from models.field_models import Grid2, ScalarField, VectorField
from models.interface_models import (BoundaryFunction, BoundarySamples, Interface, PiecewiseCovector,
                                     PiecewiseScalar, PiecewiseVector, RegionMasks)
from utils.errors import InterfaceError, NumericalError

logger = logging.getLogger(__name__)

BOUNDARY_ORIENTATION = -1.0
DEFAULT_BAND_CELLS = 4.0
EIKONAL_TOLERANCE = 0.1
FOOT_COHERENCE = 0.9  # min cosine between closest-point directions of stencil neighbours
_PAIRWISE_BUDGET = 2_000_000

_masks_cache: "weakref.WeakKeyDictionary[Interface, RegionMasks]" = weakref.WeakKeyDictionary()
_extension_cache: "weakref.WeakKeyDictionary[RegionMasks, Dict[str, np.ndarray]]" = weakref.WeakKeyDictionary()
_projection_cache: "weakref.WeakKeyDictionary[Interface, dict]" = weakref.WeakKeyDictionary()


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def _zero_level_segments(values: np.ndarray, grid: Grid2) -> np.ndarray:
    """Marching-squares segments of the zero level set as ``(K, 2, 2)`` xy pairs."""
    pieces = []
    for contour in measure.find_contours(values, 0.0):
        xy = np.column_stack([grid.origin[0] + contour[:, 1] * grid.hx,
                              grid.origin[1] + contour[:, 0] * grid.hy])
        if xy.shape[0] >= 2:
            pieces.append(np.stack([xy[:-1], xy[1:]], axis=1))
    if not pieces:
        return np.zeros((0, 2, 2))
    segments = np.concatenate(pieces, axis=0)
    lengths = np.linalg.norm(segments[:, 1] - segments[:, 0], axis=1)
    return segments[lengths > 1e-12 * grid.min_spacing]


def _chunks(n_points: int, n_targets: int):
    step = max(1, _PAIRWISE_BUDGET // max(1, n_targets))
    for start in range(0, n_points, step):
        yield slice(start, min(n_points, start + step))


def _closest_points(points: np.ndarray, segments: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Distance from every point to the polyline and the foot of the closest point."""
    a = segments[:, 0]
    d = segments[:, 1] - a
    len2 = np.einsum("kc,kc->k", d, d)
    distance = np.empty(points.shape[0])
    foot = np.empty_like(points)
    for sl in _chunks(points.shape[0], a.shape[0]):
        q = points[sl]
        rel = q[:, None, :] - a[None, :, :]
        t = np.clip(np.einsum("pkc,kc->pk", rel, d) / len2[None, :], 0.0, 1.0)
        cand = a[None, :, :] + t[..., None] * d[None, :, :]
        d2 = np.sum((q[:, None, :] - cand) ** 2, axis=-1)
        k = np.argmin(d2, axis=1)
        rows = np.arange(q.shape[0])
        distance[sl] = np.sqrt(d2[rows, k])
        foot[sl] = cand[rows, k]
    return distance, foot


def _bracketing_samples(feet: np.ndarray, sample_points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """The two samples nearest each foot point and linear weights between them."""
    n, count = feet.shape[0], sample_points.shape[0]
    pairs = np.zeros((n, 2), dtype=np.int64)
    weights = np.zeros((n, 2))
    if count == 1:
        weights[:, 0] = 1.0
        return pairs, weights
    for sl in _chunks(n, count):
        d2 = np.sum((feet[sl, None, :] - sample_points[None, :, :]) ** 2, axis=-1)
        nearest = np.argpartition(d2, 1, axis=1)[:, :2]
        rows = np.arange(nearest.shape[0])[:, None]
        dist = np.sqrt(d2[rows, nearest])
        total = dist.sum(axis=1)
        safe = np.where(total > 0, total, 1.0)
        w0 = np.where(total > 0, dist[:, 1] / safe, 1.0)
        pairs[sl] = nearest
        weights[sl, 0] = w0
        weights[sl, 1] = 1.0 - w0
    return pairs, weights


def _coherent_stencils(nodes: np.ndarray, foot: np.ndarray, sign: np.ndarray, grid: Grid2) -> np.ndarray:
    """
    Interior nodes whose four difference neighbours reach the curve along nearly the same direction.

    Stencils straddling a medial-axis kink of the distance function fail this
    test, so they are left out of the eikonal check.
    """
    offset = (nodes - foot) * sign[:, None]
    length = np.linalg.norm(offset, axis=1)
    on_curve = length <= 1e-9 * grid.min_spacing
    direction = offset / np.where(on_curve, 1.0, length)[:, None]
    direction[on_curve] = 0.0
    direction = direction.reshape(grid.ny, grid.nx, 2)
    on_curve = on_curve.reshape(grid.shape)

    centre = direction[1:-1, 1:-1]
    centre_on_curve = on_curve[1:-1, 1:-1]
    agree = np.ones(centre.shape[:2], dtype=bool)
    for rows, cols in ((slice(1, -1), slice(None, -2)), (slice(1, -1), slice(2, None)),
                       (slice(None, -2), slice(1, -1)), (slice(2, None), slice(1, -1))):
        cosine = np.sum(centre * direction[rows, cols], axis=-1)
        agree &= (cosine >= FOOT_COHERENCE) | on_curve[rows, cols]
    full = np.zeros(grid.shape, dtype=bool)
    full[1:-1, 1:-1] = centre_on_curve | agree
    return full


def build_interface(level_set: ScalarField, band_width: Optional[float] = None) -> Interface:
    """
    Build an interface from the zero level set of ``level_set``.

    The level set is redistanced exactly against its marching-squares
    polyline; the sign is taken from ``level_set`` (``>= 0`` means D+).

    Args:
        level_set: Any level-set function of the curve
        band_width: Narrow-band half width; defaults to 4 * max spacing

    Returns:
        Interface with signed distance, normals and boundary samples

    Raises:
        InterfaceError: "empty interface" or "degenerate level set"
    """
    grid = level_set.grid
    values = level_set.values
    if values.min() >= 0.0 or values.max() < 0.0:
        raise InterfaceError("empty interface")
    bw = float(band_width) if band_width is not None else DEFAULT_BAND_CELLS * grid.max_spacing

    segments = _zero_level_segments(values, grid)
    if segments.shape[0] == 0:
        raise InterfaceError("empty interface")

    X, Y = grid.coordinates
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    distance, foot = _closest_points(nodes, segments)
    sign = np.where(values.ravel() >= 0.0, 1.0, -1.0)
    sdf = (sign * distance).reshape(grid.shape)

    gx, gy = gradient_array(sdf, grid)
    norm = np.hypot(gx, gy)
    check = _coherent_stencils(nodes, foot, sign, grid) & (np.abs(sdf) <= bw)
    residual = float(np.max(np.abs(norm[check] - 1.0))) if check.any() else 0.0
    if residual > EIKONAL_TOLERANCE:
        raise InterfaceError(f"degenerate level set (eikonal residual {residual:.3f})")
    safe = np.where(norm > 1e-12, norm, 1.0)
    normals = VectorField(grid, gx / safe, gy / safe)

    mid = 0.5 * (segments[:, 0] + segments[:, 1])
    tangent = segments[:, 1] - segments[:, 0]
    lengths = np.linalg.norm(tangent, axis=1)
    perp = np.column_stack([-tangent[:, 1], tangent[:, 0]]) / lengths[:, None]
    stencil = locate(grid, mid[:, 0], mid[:, 1])
    orient = (perp[:, 0] * bilinear(normals.vx, grid, None, None, stencil)
              + perp[:, 1] * bilinear(normals.vy, grid, None, None, stencil))
    perp = np.where((orient < 0)[:, None], -perp, perp)
    samples = BoundarySamples(points=mid, weights=lengths, normals=perp)

    pairs, pair_weights = _bracketing_samples(foot, mid)
    logger.debug(f"Built interface: {samples.count} samples, length {samples.total_length:.4f}, "
                 f"eikonal residual {residual:.2e}")
    return Interface(
        sdf=ScalarField(grid, sdf),
        normals=normals,
        band_width=bw,
        samples=samples,
        foot_points=foot.reshape(grid.ny, grid.nx, 2),
        sample_pairs=pairs.reshape(grid.ny, grid.nx, 2),
        pair_weights=pair_weights.reshape(grid.ny, grid.nx, 2),
        segments=segments,
    )


def level_set_from_labels(labels: np.ndarray, grid: Grid2) -> ScalarField:
    """Level set whose zero contour separates ``labels > 0`` (D+) from the rest."""
    plus = np.asarray(labels) > 0
    if plus.shape != grid.shape:
        raise InterfaceError(f"label image shape {plus.shape} does not match grid {grid.shape}")
    sampling = (grid.hy, grid.hx)
    inside = ndimage.distance_transform_edt(plus, sampling=sampling)
    outside = ndimage.distance_transform_edt(~plus, sampling=sampling)
    return ScalarField(grid, inside - outside)


# ---------------------------------------------------------------------------
# masks and extension
# ---------------------------------------------------------------------------

def masks(interface: Optional[Interface], grid: Optional[Grid2] = None) -> RegionMasks:
    """Indicator functions of D+ (``sdf >= 0``) and D-."""
    if interface is None:
        return RegionMasks.whole(grid)
    cached = _masks_cache.get(interface)
    if cached is None:
        plus = interface.plus_mask.astype(np.float64)
        cached = RegionMasks(ScalarField(interface.grid, plus), ScalarField(interface.grid, 1.0 - plus))
        _masks_cache[interface] = cached
    return cached


def extension_indices(region: RegionMasks, side: str) -> np.ndarray:
    """Flat index of the nearest node of ``side`` for every grid node."""
    per_mask = _extension_cache.setdefault(region, {})
    if side not in per_mask:
        inside = region.side(side)
        if not inside.any():
            raise InterfaceError(f"side {side!r} contains no nodes")
        grid = region.chi_plus.grid
        jj, ii = ndimage.distance_transform_edt(~inside, sampling=(grid.hy, grid.hx),
                                                return_distances=False, return_indices=True)
        per_mask[side] = jj * grid.nx + ii
    return per_mask[side]


def extend_array(values: np.ndarray, region: RegionMasks, side: str) -> np.ndarray:
    return np.ravel(values)[extension_indices(region, side)]


def extend_array_transpose(values: np.ndarray, region: RegionMasks, side: str) -> np.ndarray:
    """Adjoint of ``extend_array``: fold every node's value back onto its source node."""
    idx = extension_indices(region, side)
    return np.bincount(idx.ravel(), weights=np.ravel(values), minlength=idx.size).reshape(idx.shape)


def one_sided_extend(field: Union[ScalarField, VectorField], region: RegionMasks, side: str):
    """
    Copy each opposite-side node's value from the nearest node of ``side``.

    Values on ``side`` are kept exactly, so the extension is idempotent.
    """
    if isinstance(field, ScalarField):
        return ScalarField(field.grid, extend_array(field.values, region, side))
    return VectorField(field.grid, extend_array(field.vx, region, side), extend_array(field.vy, region, side))


def piecewise_from_composite(field: VectorField, interface: Optional[Interface],
                             cls=PiecewiseVector) -> PiecewiseVector:
    """Split a composite field into two one-sided extensions."""
    if interface is None:
        return cls(None, field, field)
    region = masks(interface)
    return cls(interface, one_sided_extend(field, region, "plus"), one_sided_extend(field, region, "minus"))


def reextend(v: PiecewiseVector, interface: Optional[Interface]) -> PiecewiseVector:
    """Re-attach a two-sided field to (possibly moved) masks, re-extending each part."""
    if interface is None:
        return type(v)(None, v.plus_part, v.plus_part)
    region = masks(interface)
    return type(v)(interface, one_sided_extend(v.plus_part, region, "plus"),
                   one_sided_extend(v.minus_part, region, "minus"))


def extend_boundary_values(interface: Interface, values: np.ndarray) -> np.ndarray:
    """Constant-normal extension of boundary-sample values onto every node."""
    vals = np.asarray(values, dtype=np.float64)
    return np.sum(vals[interface.sample_pairs] * interface.pair_weights, axis=-1)


# ---------------------------------------------------------------------------
# traces, jump and regularized derivatives
# ---------------------------------------------------------------------------

def _sample_stencil(interface: Interface):
    pts = interface.samples.points
    return locate(interface.grid, pts[:, 0], pts[:, 1])


def _trace(values: np.ndarray, interface: Interface) -> np.ndarray:
    return bilinear(values, interface.grid, None, None, _sample_stencil(interface))


def normal_traces(v: Union[VectorField, PiecewiseVector], interface: Interface) -> Tuple[np.ndarray, np.ndarray]:
    """Normal components of the plus and minus traces at every boundary sample."""
    n = interface.samples.normals
    if isinstance(v, VectorField):
        plus = minus = v
    else:
        plus, minus = v.plus_part, v.minus_part
    a_plus = _trace(plus.vx, interface) * n[:, 0] + _trace(plus.vy, interface) * n[:, 1]
    if minus is plus:
        return a_plus, a_plus
    a_minus = _trace(minus.vx, interface) * n[:, 0] + _trace(minus.vy, interface) * n[:, 1]
    return a_plus, a_minus


def jump(f: PiecewiseScalar) -> BoundaryFunction:
    """``f+ - f-`` at every boundary sample."""
    interface = f.interface
    if interface is None:
        raise InterfaceError("jump needs an interface")
    return BoundaryFunction(interface, _trace(f.plus_part.values, interface) - _trace(f.minus_part.values, interface))


def normal_jump(v: PiecewiseVector) -> BoundaryFunction:
    a_plus, a_minus = normal_traces(v, v.interface)
    return BoundaryFunction(v.interface, a_plus - a_minus)


def tangential_jump(v: Union[VectorField, PiecewiseVector], interface: Interface) -> BoundaryFunction:
    """Jump of the tangential trace ``t . (v+ - v-)`` with ``t = (-n_y, n_x)``."""
    n = interface.samples.normals
    if isinstance(v, VectorField) or v.interface is None:
        return BoundaryFunction.zeros(interface)
    t = np.column_stack([-n[:, 1], n[:, 0]])
    d_x = _trace(v.plus_part.vx, interface) - _trace(v.minus_part.vx, interface)
    d_y = _trace(v.plus_part.vy, interface) - _trace(v.minus_part.vy, interface)
    return BoundaryFunction(interface, t[:, 0] * d_x + t[:, 1] * d_y)


def reg_grad(f: PiecewiseScalar) -> PiecewiseVector:
    grid = f.grid
    plus = VectorField(grid, *gradient_array(f.plus_part.values, grid))
    if f.interface is None:
        return PiecewiseVector(None, plus, plus)
    minus = VectorField(grid, *gradient_array(f.minus_part.values, grid))
    return PiecewiseVector(f.interface, plus, minus)


def reg_div(v: PiecewiseVector) -> PiecewiseScalar:
    grid = v.grid
    plus = ScalarField(grid, divergence_array(v.plus_part.vx, v.plus_part.vy, grid))
    if v.interface is None:
        return PiecewiseScalar(None, plus, plus)
    minus = ScalarField(grid, divergence_array(v.minus_part.vx, v.minus_part.vy, grid))
    return PiecewiseScalar(v.interface, plus, minus)


def reg_curl2(m: PiecewiseVector) -> PiecewiseScalar:
    grid = m.grid
    plus = ScalarField(grid, curl2_array(m.plus_part.vx, m.plus_part.vy, grid))
    if m.interface is None:
        return PiecewiseScalar(None, plus, plus)
    minus = ScalarField(grid, curl2_array(m.minus_part.vx, m.minus_part.vy, grid))
    return PiecewiseScalar(m.interface, plus, minus)


# ---------------------------------------------------------------------------
# boundary quadrature and anchor
# ---------------------------------------------------------------------------

def boundary_integral(g: BoundaryFunction, v: Union[VectorField, PiecewiseVector]) -> float:
    """Integral over the curve of ``g * i_v mu`` (normal flux out of D+, weighted by ``g``)."""
    a_plus, a_minus = normal_traces(v, g.interface)
    flux = 0.5 * (a_plus + a_minus)
    return BOUNDARY_ORIENTATION * float(np.sum(g.values * flux * g.interface.samples.weights))


def boundary_pairing(g: BoundaryFunction, rate: BoundaryFunction) -> float:
    """Pairing of a boundary covector with a normal interface rate, consistent with ``boundary_integral``."""
    return BOUNDARY_ORIENTATION * float(np.sum(g.values * rate.values * g.interface.samples.weights))


def anchor(v: Union[VectorField, PiecewiseVector], interface: Optional[Interface] = None) -> BoundaryFunction:
    """Normal velocity of the interface: the averaged normal trace ``v . n``."""
    interface = interface if interface is not None else v.interface
    a_plus, a_minus = normal_traces(v, interface)
    return BoundaryFunction(interface, 0.5 * (a_plus + a_minus))


# ---------------------------------------------------------------------------
# projection onto admissible fields
# ---------------------------------------------------------------------------

def _taper(interface: Interface) -> np.ndarray:
    bw = interface.band_width
    full = 1.5 * interface.grid.max_spacing
    dist = np.abs(interface.sdf.values)
    if bw <= full:
        return (dist <= bw).astype(np.float64)
    return np.clip((bw - dist) / (bw - full), 0.0, 1.0)


def _projection_operators(interface: Interface) -> dict:
    cached = _projection_cache.get(interface)
    if cached is not None:
        return cached
    grid = interface.grid
    taper = _taper(interface).ravel()
    band = np.flatnonzero(taper > 0.0)
    count = interface.samples.count
    nx_ = interface.normals.vx.ravel()
    ny_ = interface.normals.vy.ravel()

    # extension of sample coefficients onto band nodes, tapered
    pairs = interface.sample_pairs.reshape(-1, 2)[band]
    pw = interface.pair_weights.reshape(-1, 2)[band]
    rows = np.repeat(np.arange(band.size), 2)
    spread = sp.csr_matrix(((pw * taper[band][:, None]).ravel(), (rows, pairs.ravel())),
                           shape=(band.size, count))

    # trace of a normal correction field at each sample
    s = _sample_stencil(interface)
    n = interface.samples.normals
    corner_j = np.stack([s.j0, s.j0, s.j0 + 1, s.j0 + 1], axis=1)
    corner_i = np.stack([s.i0, s.i0 + 1, s.i0, s.i0 + 1], axis=1)
    corner_w = np.stack([(1 - s.tx) * (1 - s.ty), s.tx * (1 - s.ty), (1 - s.tx) * s.ty, s.tx * s.ty], axis=1)
    flat = corner_j * grid.nx + corner_i
    position = np.full(grid.size, -1, dtype=np.int64)
    position[band] = np.arange(band.size)
    local = position[flat]
    alignment = nx_[flat] * n[:, 0:1] + ny_[flat] * n[:, 1:2]
    keep = local >= 0
    trace = sp.csr_matrix(((corner_w * alignment)[keep], (np.repeat(np.arange(count), 4).reshape(count, 4)[keep],
                                                          local[keep])), shape=(count, band.size))
    response = (trace @ spread).toarray()
    cached = {
        "band": band,
        "spread": spread,
        "solve": np.linalg.pinv(response, rcond=1e-8),
    }
    _projection_cache[interface] = cached
    return cached


def project_normal_continuity(v: PiecewiseVector) -> DVectField:
    """
    Make the normal traces of both sides agree, leaving tangential jumps alone.

    Each side's normal component is shifted by half the normal jump, spread
    into the band with a linear taper. The correction is the least-squares
    solution of a fixed linear system per interface, so the map is linear and
    idempotent.
    """
    interface = v.interface
    if interface is None:
        return DVectField(None, v.plus_part, v.plus_part)
    ops = _projection_operators(interface)
    a_plus, a_minus = normal_traces(v, interface)
    beta = -ops["solve"] @ (a_plus - a_minus)
    band = ops["band"]
    c = np.zeros(interface.grid.size)
    c[band] = ops["spread"] @ beta
    c = 0.5 * c.reshape(interface.grid.shape)
    nx_, ny_ = interface.normals.vx, interface.normals.vy
    grid = interface.grid
    plus = VectorField(grid, v.plus_part.vx + c * nx_, v.plus_part.vy + c * ny_)
    minus = VectorField(grid, v.minus_part.vx - c * nx_, v.minus_part.vy - c * ny_)
    return DVectField(interface, plus, minus)


# ---------------------------------------------------------------------------
# advection
# ---------------------------------------------------------------------------

def check_cfl(v: Union[VectorField, PiecewiseVector], dt: float, grid: Grid2) -> None:
    speed = v.max_norm()
    if dt * speed > grid.min_spacing * (1.0 + 1e-9):
        raise NumericalError(f"CFL violation: dt*max|v| = {dt * speed:.4g} > h = {grid.min_spacing:.4g}")


def interface_velocity(v: Union[VectorField, PiecewiseVector]) -> VectorField:
    """Single-valued velocity consistent with the normal traces: the side average."""
    if isinstance(v, VectorField):
        return v
    if v.interface is None:
        return v.plus_part
    return (v.plus_part + v.minus_part) * 0.5


def advect_interface(interface: Interface, v: Union[VectorField, PiecewiseVector], dt: float) -> Interface:
    """One semi-Lagrangian level-set step followed by redistancing."""
    grid = interface.grid
    check_cfl(v, dt, grid)
    w = interface_velocity(v)
    X, Y = grid.coordinates
    moved = bilinear(interface.sdf.values, grid, X - dt * w.vx, Y - dt * w.vy)
    return build_interface(ScalarField(grid, moved), interface.band_width)
