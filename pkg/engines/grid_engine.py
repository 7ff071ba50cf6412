"""Differential stencils, interpolation and quadrature on regular grids.

Stencils are assembled once per grid as sparse matrices so the same
operator can be applied and transposed; interpolation shares one locator
between value, point-gradient and adjoint (scatter) evaluation so that the
adjoint is exact.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp

from models.field_models import Grid2, ScalarField, VectorField

logger = logging.getLogger(__name__)

_SNAP = 1e-9


def _difference_1d(n: int, h: float) -> sp.csr_matrix:
    """Central differences inside, one-sided second order at both ends."""
    rows, cols, vals = [], [], []
    for i in range(1, n - 1):
        rows += [i, i]
        cols += [i - 1, i + 1]
        vals += [-0.5 / h, 0.5 / h]
    rows += [0, 0, 0, n - 1, n - 1, n - 1]
    cols += [0, 1, 2, n - 1, n - 2, n - 3]
    vals += [-1.5 / h, 2.0 / h, -0.5 / h, 1.5 / h, -2.0 / h, 0.5 / h]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


@lru_cache(maxsize=32)
def difference_operators(grid: Grid2) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """Sparse ``(Dx, Dy)`` acting on row-major flattened node values."""
    dx = sp.kron(sp.identity(grid.ny, format="csr"), _difference_1d(grid.nx, grid.hx), format="csr")
    dy = sp.kron(_difference_1d(grid.ny, grid.hy), sp.identity(grid.nx, format="csr"), format="csr")
    return dx, dy


def gradient_array(values: np.ndarray, grid: Grid2) -> Tuple[np.ndarray, np.ndarray]:
    dx, dy = difference_operators(grid)
    flat = np.asarray(values, dtype=np.float64).ravel()
    return (dx @ flat).reshape(grid.shape), (dy @ flat).reshape(grid.shape)


def divergence_array(vx: np.ndarray, vy: np.ndarray, grid: Grid2) -> np.ndarray:
    dx, dy = difference_operators(grid)
    return (dx @ np.ravel(vx) + dy @ np.ravel(vy)).reshape(grid.shape)


def divergence_transpose(values: np.ndarray, grid: Grid2) -> Tuple[np.ndarray, np.ndarray]:
    """Plain matrix transpose of the divergence stencil applied to ``values``."""
    dx, dy = difference_operators(grid)
    flat = np.ravel(values)
    return (dx.T @ flat).reshape(grid.shape), (dy.T @ flat).reshape(grid.shape)


def curl2_array(mx: np.ndarray, my: np.ndarray, grid: Grid2) -> np.ndarray:
    """Scalar curl ``d/dx m_y - d/dy m_x`` of a covector field."""
    dx, dy = difference_operators(grid)
    return (dx @ np.ravel(my) - dy @ np.ravel(mx)).reshape(grid.shape)


def gradient(f: ScalarField) -> VectorField:
    gx, gy = gradient_array(f.values, f.grid)
    return VectorField(f.grid, gx, gy)


def divergence(v: VectorField) -> ScalarField:
    return ScalarField(v.grid, divergence_array(v.vx, v.vy, v.grid))


def curl2(m: VectorField) -> ScalarField:
    return ScalarField(m.grid, curl2_array(m.vx, m.vy, m.grid))


def integrate(f: Union[ScalarField, np.ndarray], grid: Optional[Grid2] = None) -> float:
    """Trapezoid-rule integral over the grid rectangle."""
    if isinstance(f, ScalarField):
        grid, values = f.grid, f.values
    else:
        values = f
    return float(np.sum(values * grid.quadrature_weights))


@lru_cache(maxsize=32)
def _edge_conductances(grid: Grid2) -> Tuple[np.ndarray, np.ndarray]:
    wx = np.ones(grid.nx)
    wx[[0, -1]] = 0.5
    wy = np.ones(grid.ny)
    wy[[0, -1]] = 0.5
    # horizontal edges (j, i)-(j, i+1) carry the dual-cell height; vertical ones the width
    horizontal = np.repeat((grid.hy * wy / grid.hx)[:, None], grid.nx - 1, axis=1)
    vertical = np.repeat((grid.hx * wx / grid.hy)[None, :], grid.ny - 1, axis=0)
    return horizontal, vertical


def graph_laplacian(grid: Grid2, mask: Optional[np.ndarray] = None) -> sp.csr_matrix:
    """
    Positive semi-definite finite-volume graph Laplacian ``G``.

    ``-W^{-1} G`` is the Neumann Laplacian. When ``mask`` is given only edges
    joining two masked nodes are kept, which decouples the two subdomains.
    """
    horizontal, vertical = _edge_conductances(grid)
    index = np.arange(grid.size).reshape(grid.shape)
    a_h, b_h, c_h = index[:, :-1], index[:, 1:], horizontal
    a_v, b_v, c_v = index[:-1, :], index[1:, :], vertical
    if mask is not None:
        keep_h = mask[:, :-1] & mask[:, 1:]
        keep_v = mask[:-1, :] & mask[1:, :]
        a_h, b_h, c_h = a_h[keep_h], b_h[keep_h], c_h[keep_h]
        a_v, b_v, c_v = a_v[keep_v], b_v[keep_v], c_v[keep_v]
    a = np.concatenate([np.ravel(a_h), np.ravel(a_v)])
    b = np.concatenate([np.ravel(b_h), np.ravel(b_v)])
    c = np.concatenate([np.ravel(c_h), np.ravel(c_v)])
    off = sp.coo_matrix((np.concatenate([-c, -c]), (np.concatenate([a, b]), np.concatenate([b, a]))),
                        shape=(grid.size, grid.size))
    degree = np.bincount(a, weights=c, minlength=grid.size) + np.bincount(b, weights=c, minlength=grid.size)
    return (off + sp.diags(degree)).tocsr()


def laplacian(f: ScalarField) -> ScalarField:
    """Five-point Neumann Laplacian (finite-volume form)."""
    g = graph_laplacian(f.grid)
    return ScalarField(f.grid, -(g @ f.values.ravel()).reshape(f.grid.shape) / f.grid.quadrature_weights)


@dataclass(frozen=True)
class BilinearStencil:
    """Cell indices, fractional offsets and derivative gates for a batch of points."""

    i0: np.ndarray
    j0: np.ndarray
    tx: np.ndarray
    ty: np.ndarray
    inside_x: np.ndarray
    inside_y: np.ndarray


def locate(grid: Grid2, px: np.ndarray, py: np.ndarray) -> BilinearStencil:
    fx = (np.asarray(px, dtype=np.float64) - grid.origin[0]) / grid.hx
    fy = (np.asarray(py, dtype=np.float64) - grid.origin[1]) / grid.hy
    inside_x = (fx > 0) & (fx < grid.nx - 1)
    inside_y = (fy > 0) & (fy < grid.ny - 1)
    fx = np.clip(fx, 0.0, grid.nx - 1)
    fy = np.clip(fy, 0.0, grid.ny - 1)
    # snap round-off so node positions reproduce stored values exactly
    rx, ry = np.rint(fx), np.rint(fy)
    fx = np.where(np.abs(fx - rx) < _SNAP, rx, fx)
    fy = np.where(np.abs(fy - ry) < _SNAP, ry, fy)
    i0 = np.minimum(np.floor(fx).astype(np.int64), grid.nx - 2)
    j0 = np.minimum(np.floor(fy).astype(np.int64), grid.ny - 2)
    return BilinearStencil(i0, j0, fx - i0, fy - j0, inside_x, inside_y)


def bilinear(values: np.ndarray, grid: Grid2, px, py, stencil: Optional[BilinearStencil] = None) -> np.ndarray:
    s = stencil if stencil is not None else locate(grid, px, py)
    f = values
    f00 = f[s.j0, s.i0]
    f10 = f[s.j0, s.i0 + 1]
    f01 = f[s.j0 + 1, s.i0]
    f11 = f[s.j0 + 1, s.i0 + 1]
    return (1 - s.ty) * ((1 - s.tx) * f00 + s.tx * f10) + s.ty * ((1 - s.tx) * f01 + s.tx * f11)


def bilinear_with_gradient(values: np.ndarray, grid: Grid2, px, py,
                           stencil: Optional[BilinearStencil] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Interpolated value and its derivatives with respect to the query point."""
    s = stencil if stencil is not None else locate(grid, px, py)
    f = values
    f00 = f[s.j0, s.i0]
    f10 = f[s.j0, s.i0 + 1]
    f01 = f[s.j0 + 1, s.i0]
    f11 = f[s.j0 + 1, s.i0 + 1]
    value = (1 - s.ty) * ((1 - s.tx) * f00 + s.tx * f10) + s.ty * ((1 - s.tx) * f01 + s.tx * f11)
    dvdx = ((1 - s.ty) * (f10 - f00) + s.ty * (f11 - f01)) / grid.hx * s.inside_x
    dvdy = ((1 - s.tx) * (f01 - f00) + s.tx * (f11 - f10)) / grid.hy * s.inside_y
    return value, dvdx, dvdy


def bilinear_adjoint(weights: np.ndarray, grid: Grid2, px, py,
                     stencil: Optional[BilinearStencil] = None) -> np.ndarray:
    """Transpose of ``bilinear``: scatter per-point weights back onto the nodes."""
    s = stencil if stencil is not None else locate(grid, px, py)
    w = np.asarray(weights, dtype=np.float64)
    base = s.j0 * grid.nx + s.i0
    out = np.bincount(np.ravel(base), weights=np.ravel((1 - s.tx) * (1 - s.ty) * w), minlength=grid.size)
    out += np.bincount(np.ravel(base + 1), weights=np.ravel(s.tx * (1 - s.ty) * w), minlength=grid.size)
    out += np.bincount(np.ravel(base + grid.nx), weights=np.ravel((1 - s.tx) * s.ty * w), minlength=grid.size)
    out += np.bincount(np.ravel(base + grid.nx + 1), weights=np.ravel(s.tx * s.ty * w), minlength=grid.size)
    return out.reshape(grid.shape)


def interp(field: Union[ScalarField, VectorField], points) -> np.ndarray:
    """
    Bilinear interpolation with clamped-to-edge coordinates.

    Args:
        field: Scalar or vector field
        points: Array of shape ``(..., 2)`` holding ``(x, y)`` pairs

    Returns:
        Values of shape ``points.shape[:-1]`` for scalars, ``(..., 2)`` for vectors
    """
    pts = np.asarray(points, dtype=np.float64)
    px, py = pts[..., 0], pts[..., 1]
    stencil = locate(field.grid, px, py)
    if isinstance(field, ScalarField):
        return bilinear(field.values, field.grid, px, py, stencil)
    return np.stack([bilinear(field.vx, field.grid, px, py, stencil),
                     bilinear(field.vy, field.grid, px, py, stencil)], axis=-1)
