"""Metric layer on two-sided velocities: pairing, inertia, bracket, T and dual anchor."""

from __future__ import annotations

import logging
import weakref
from functools import lru_cache
from typing import Dict, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import fft

from engines.grid_engine import divergence_transpose, gradient_array, graph_laplacian, integrate
from engines.interface_engine import (extend_array, extend_boundary_values, masks,
                                      project_normal_continuity)
from models.algebroid_models import DVectField, InertiaOperator, OneFormDensity
from models.field_models import Grid2, ScalarField, VectorField
from models.interface_models import (BoundaryFunction, Interface, PiecewiseCovector, PiecewiseScalar,
                                     PiecewiseVector, RegionMasks)
from utils.errors import SolverError

logger = logging.getLogger(__name__)

_NORMALIZER_FLOOR = 1e-12
_helmholtz_cache: "weakref.WeakKeyDictionary[RegionMasks, Dict]" = weakref.WeakKeyDictionary()


def _sides(interface: Optional[Interface]) -> Tuple[str, ...]:
    return ("plus",) if interface is None else ("plus", "minus")


def _composite(field: Union[VectorField, PiecewiseVector]) -> VectorField:
    return field if isinstance(field, VectorField) else field.composite()


# ---------------------------------------------------------------------------
# pairing
# ---------------------------------------------------------------------------

def pairing(mt: OneFormDensity, v: Union[VectorField, PiecewiseVector]) -> float:
    """``<m (x) mu, v> = integral of m(v) mu`` over the composite fields."""
    m = mt.m.composite()
    u = _composite(v)
    m.grid.require_same(u.grid)
    return integrate(m.dot(u) * mt.density_weight.values, m.grid)


# ---------------------------------------------------------------------------
# Gaussian inertia
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _axis_symbol(n: int, sigma_px: float) -> np.ndarray:
    """Gaussian transfer function at the DCT-II frequencies ``pi k / n`` (mirror boundaries)."""
    return np.exp(-0.5 * (np.pi * sigma_px * np.arange(n) / n) ** 2)


def _kernel_symbol(inertia: InertiaOperator, grid: Grid2) -> np.ndarray:
    sy, sx = inertia.kernel_pixels(grid)
    return np.outer(_axis_symbol(grid.ny, float(sy)), _axis_symbol(grid.nx, float(sx))) + inertia.nugget


def _kernel(values: np.ndarray, inertia: InertiaOperator, grid: Grid2, inverse: bool = False) -> np.ndarray:
    """``K = G + nugget * Id`` or its inverse; both are diagonal in the DCT-II basis."""
    symbol = _kernel_symbol(inertia, grid)
    coeffs = fft.dctn(values, type=2, norm="ortho")
    coeffs = coeffs / symbol if inverse else coeffs * symbol
    return fft.idctn(coeffs, type=2, norm="ortho")


def _side_scaling(inertia: InertiaOperator, region: RegionMasks, side: str) -> np.ndarray:
    """``chi / sqrt(K(w chi))``, zero off the side; makes the masked smoother symmetric."""
    grid = region.chi_plus.grid
    chi = region.side(side).astype(np.float64)
    norm = _kernel(grid.relative_weights * chi, inertia, grid)
    return chi / np.sqrt(np.maximum(norm, _NORMALIZER_FLOOR))


def _gaussian_smoother(inertia: InertiaOperator, grid: Grid2, scaling: Optional[np.ndarray]):
    """``x -> r K(w r x)``, or ``x -> K(w x)`` in smooth mode."""
    w = grid.relative_weights
    if scaling is None:
        return lambda x: _kernel(w * x, inertia, grid)
    return lambda x: scaling * _kernel(w * scaling * x, inertia, grid)


def _gaussian_invert(inertia: InertiaOperator, mt: OneFormDensity) -> PiecewiseVector:
    grid = mt.grid
    interface = mt.interface
    if interface is None or not inertia.regularized:
        smooth = _gaussian_smoother(inertia, grid, None)
        m = mt.m.composite()
        v = VectorField(grid, smooth(m.vx), smooth(m.vy))
        return PiecewiseVector(interface, v, v)
    region = masks(interface)
    parts = {}
    for side in _sides(interface):
        smooth = _gaussian_smoother(inertia, grid, _side_scaling(inertia, region, side))
        m = mt.m.part(side)
        parts[side] = VectorField(grid, extend_array(smooth(m.vx), region, side),
                                  extend_array(smooth(m.vy), region, side))
    return PiecewiseVector(interface, parts["plus"], parts["minus"])


def _cg_solve(apply_fn, rhs: np.ndarray, diagonal: np.ndarray, inertia: InertiaOperator, label: str) -> np.ndarray:
    """Jacobi-preconditioned CG on a symmetric positive definite operator."""
    n = rhs.size
    if not np.any(rhs):
        return np.zeros_like(rhs)
    op = spla.LinearOperator((n, n), matvec=apply_fn, dtype=np.float64)
    jacobi = spla.LinearOperator((n, n), matvec=lambda r: r / diagonal, dtype=np.float64)
    x, info = spla.cg(op, rhs, rtol=inertia.cg_tol, atol=0.0, maxiter=inertia.cg_maxiter, M=jacobi)
    residual = float(np.linalg.norm(rhs - apply_fn(x)) / np.linalg.norm(rhs))
    if info != 0 and residual > 10.0 * inertia.cg_tol:
        raise SolverError(f"inertia CG did not converge on {label}", residual)
    logger.debug(f"Inertia CG on {label}: residual {residual:.2e}")
    return x


def _gaussian_apply(inertia: InertiaOperator, v: PiecewiseVector) -> OneFormDensity:
    grid = v.grid
    interface = v.interface
    w = grid.relative_weights
    if interface is None or not inertia.regularized:
        u = _composite(v)
        comps = [_kernel(comp, inertia, grid, inverse=True) / w for comp in (u.vx, u.vy)]
        m = VectorField(grid, comps[0], comps[1])
        return OneFormDensity(PiecewiseCovector(interface, m, m))

    root_w = np.sqrt(w)
    region = masks(interface)
    parts = {}
    for side in _sides(interface):
        inside = region.side(side)
        scaling = _side_scaling(inertia, region, side)
        smooth = _gaussian_smoother(inertia, grid, scaling)
        diagonal = (w * scaling ** 2)[inside]

        def matvec(z, inside=inside, smooth=smooth):
            full = np.zeros(grid.shape)
            full[inside] = z / root_w[inside]
            return (root_w * smooth(full))[inside]

        comps = []
        for comp in v.part(side).components:
            z = _cg_solve(matvec, root_w[inside] * comp[inside], diagonal, inertia, f"side {side}")
            full = np.zeros(grid.shape)
            full[inside] = z / root_w[inside]
            comps.append(extend_array(full, region, side))
        parts[side] = VectorField(grid, comps[0], comps[1])
    return OneFormDensity(PiecewiseCovector(interface, parts["plus"], parts["minus"]))


# ---------------------------------------------------------------------------
# Helmholtz inertia
# ---------------------------------------------------------------------------

def _helmholtz_matrix(inertia: InertiaOperator, grid: Grid2, mask: Optional[np.ndarray]):
    """``gamma I + alpha W^-1 G`` restricted to ``mask`` nodes, with its LU factors."""
    g = graph_laplacian(grid, mask)
    idx = np.arange(grid.size) if mask is None else np.flatnonzero(mask.ravel())
    g = g[idx][:, idx]
    inv_w = sp.diags(1.0 / grid.quadrature_weights.ravel()[idx])
    a = (inertia.gamma * sp.identity(idx.size) + inertia.alpha * (inv_w @ g)).tocsc()
    return idx, a, spla.splu(a)


@lru_cache(maxsize=16)
def _smooth_helmholtz(inertia: InertiaOperator, grid: Grid2):
    return _helmholtz_matrix(inertia, grid, None)


def _side_helmholtz(inertia: InertiaOperator, region: RegionMasks, side: str):
    per_mask = _helmholtz_cache.setdefault(region, {})
    key = (inertia, side)
    if key not in per_mask:
        per_mask[key] = _helmholtz_matrix(inertia, region.chi_plus.grid, region.side(side))
    return per_mask[key]


def _helmholtz_map(inertia: InertiaOperator, field: PiecewiseVector, inverse: bool) -> Dict[str, VectorField]:
    grid = field.grid
    interface = field.interface
    region = None if interface is None or not inertia.regularized else masks(interface)
    parts = {}
    for side in _sides(interface if region is not None else None):
        if region is None:
            idx, a, lu = _smooth_helmholtz(inertia, grid)
            source = _composite(field)
        else:
            idx, a, lu = _side_helmholtz(inertia, region, side)
            source = field.part(side)
        comps = []
        for comp in source.components:
            x = comp.ravel()[idx]
            for _ in range(inertia.order):
                x = lu.solve(x) if inverse else a @ x
            full = np.zeros(grid.size)
            full[idx] = x
            full = full.reshape(grid.shape)
            comps.append(full if region is None else extend_array(full, region, side))
        parts[side] = VectorField(grid, comps[0], comps[1])
    parts.setdefault("minus", parts["plus"])
    return parts


# ---------------------------------------------------------------------------
# public inertia operations
# ---------------------------------------------------------------------------

def apply_inertia(inertia: InertiaOperator, v: PiecewiseVector) -> OneFormDensity:
    """
    Momentum of a velocity, ``m = I v``.

    Helmholtz applies ``(gamma - alpha Laplacian)^k`` per side. The Gaussian
    kind inverts the smoother: exactly in the DCT basis in smooth mode, by
    preconditioned conjugate gradients per side otherwise.
    """
    if isinstance(v, VectorField):
        v = PiecewiseVector(None, v, v)
    if inertia.kind == "helmholtz":
        parts = _helmholtz_map(inertia, v, inverse=False)
        return OneFormDensity(PiecewiseCovector(v.interface, parts["plus"], parts["minus"]))
    return _gaussian_apply(inertia, v)


def invert_inertia(inertia: InertiaOperator, mt: OneFormDensity) -> DVectField:
    """Velocity of a momentum, ``v = I^-1 m``, projected onto admissible fields."""
    if inertia.kind == "helmholtz":
        parts = _helmholtz_map(inertia, mt.m, inverse=True)
        v = PiecewiseVector(mt.interface, parts["plus"], parts["minus"])
    else:
        v = _gaussian_invert(inertia, mt)
    return project_normal_continuity(v)


def metric(u: PiecewiseVector, v: PiecewiseVector, inertia: InertiaOperator) -> float:
    return pairing(apply_inertia(inertia, u), v)


def kinetic_energy(v: PiecewiseVector, inertia: InertiaOperator) -> float:
    return 0.5 * metric(v, v, inertia)


# ---------------------------------------------------------------------------
# bracket, T and dual anchor
# ---------------------------------------------------------------------------

def lie_bracket(a: VectorField, b: VectorField) -> VectorField:
    """``[a, b] = (a . grad) b - (b . grad) a``."""
    grid = a.grid
    bxx, bxy = gradient_array(b.vx, grid)
    byx, byy = gradient_array(b.vy, grid)
    axx, axy = gradient_array(a.vx, grid)
    ayx, ayy = gradient_array(a.vy, grid)
    cx = (a.vx * bxx + a.vy * bxy) - (b.vx * axx + b.vy * axy)
    cy = (a.vx * byx + a.vy * byy) - (b.vx * ayx + b.vy * ayy)
    return VectorField(grid, cx, cy)


def reg_bracket(u: PiecewiseVector, v: PiecewiseVector) -> PiecewiseVector:
    """Per-side Lie bracket, reassembled on the shared interface."""
    plus = lie_bracket(u.plus_part, v.plus_part)
    if u.interface is None:
        return PiecewiseVector(None, plus, plus)
    return PiecewiseVector(u.interface, plus, lie_bracket(u.minus_part, v.minus_part))


def t_operator(f: PiecewiseScalar) -> OneFormDensity:
    """
    Covector ``T f`` with ``<T f, v> = integral(div(v) f)`` for every grid field ``v``.

    It is the pairing adjoint of the divergence stencil, applied to the
    composite of ``f``. For smooth ``f`` it approximates ``-df``; across a
    jump it concentrates the jump on the nodes next to the interface.
    """
    grid = f.grid
    w = grid.quadrature_weights
    tx, ty = divergence_transpose(w * f.composite().values, grid)
    t = VectorField(grid, tx / w, ty / w)
    return OneFormDensity(PiecewiseCovector(f.interface, t, t))


def dual_anchor(n: BoundaryFunction) -> OneFormDensity:
    """
    ``#* n = (d^R h + T h) (x) mu`` for the symmetric step ``h = +-ext(n)/2``.

    Pairs with admissible velocities like ``boundary_integral(n, v)``.
    """
    interface = n.interface
    grid = interface.grid
    ext = 0.5 * extend_boundary_values(interface, n.values)
    h = PiecewiseScalar(interface, ScalarField(grid, ext), ScalarField(grid, -ext))
    return dual_anchor_from_step(h)


def dual_anchor_from_step(h: PiecewiseScalar) -> OneFormDensity:
    """``(d^R h + T h) (x) mu`` for an explicit two-sided step ``h``."""
    grid = h.grid
    t = t_operator(h).m.plus_part
    gp = gradient_array(h.plus_part.values, grid)
    gm = gradient_array(h.minus_part.values, grid)
    plus = VectorField(grid, gp[0] + t.vx, gp[1] + t.vy)
    minus = VectorField(grid, gm[0] + t.vx, gm[1] + t.vy)
    return OneFormDensity(PiecewiseCovector(h.interface, plus, minus))
