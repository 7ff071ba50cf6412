"""
Image similarity terms and their derivatives with respect to the warped image.

Gradients are raw derivatives: ``d E / d a[j, i]`` for every node value of
``a``, so they already carry the quadrature weights.
"""

import logging
from typing import Tuple

import numpy as np
from scipy import ndimage

from engines.grid_engine import integrate
from models.field_models import ScalarField
from utils.errors import ConfigError

logger = logging.getLogger(__name__)

LNCC_EPSILON = 1e-5


def ssd(a: ScalarField, b: ScalarField) -> float:
    """Integrated squared difference ``integral((a - b)^2)``."""
    a.grid.require_same(b.grid)
    return integrate((a.values - b.values) ** 2, a.grid)


def ssd_gradient(a: ScalarField, b: ScalarField) -> Tuple[float, np.ndarray]:
    a.grid.require_same(b.grid)
    diff = a.values - b.values
    return integrate(diff ** 2, a.grid), 2.0 * a.grid.quadrature_weights * diff


class _Window:
    """Gaussian window of std ``pixels`` with border-normalized local means."""

    def __init__(self, shape, pixels: float):
        self.pixels = float(pixels)
        self.norm = self.blur(np.ones(shape))

    def blur(self, x: np.ndarray) -> np.ndarray:
        return ndimage.gaussian_filter(x, sigma=self.pixels, mode="constant", truncate=4.0)

    def mean(self, x: np.ndarray) -> np.ndarray:
        return self.blur(x) / self.norm


def _local_statistics(a: np.ndarray, b: np.ndarray, window: _Window):
    mu_a = window.mean(a)
    mu_b = window.mean(b)
    var_a = window.mean(a * a) - mu_a * mu_a
    var_b = window.mean(b * b) - mu_b * mu_b
    cov = window.mean(a * b) - mu_a * mu_b
    return mu_a, mu_b, var_a, var_b, cov


def lncc(a: ScalarField, b: ScalarField, window: float = 5.0) -> float:
    """
    Local normalized cross-correlation loss ``1 - mean(cc)``.

    Args:
        a: Warped (or first) image
        b: Fixed (or second) image
        window: Gaussian window standard deviation in pixels

    Returns:
        Loss near 0 for locally affinely related images, near 1 for unrelated ones
    """
    a.grid.require_same(b.grid)
    win = _Window(a.grid.shape, window)
    _, _, var_a, var_b, cov = _local_statistics(a.values, b.values, win)
    cc = cov / np.sqrt(var_a * var_b + LNCC_EPSILON)
    return float(1.0 - cc.mean())


def lncc_gradient(a: ScalarField, b: ScalarField, window: float = 5.0) -> Tuple[float, np.ndarray]:
    """LNCC loss and its derivative with respect to the node values of ``a``."""
    a.grid.require_same(b.grid)
    av, bv = a.values, b.values
    win = _Window(a.grid.shape, window)
    mu_a, mu_b, var_a, var_b, cov = _local_statistics(av, bv, win)
    denom = np.sqrt(var_a * var_b + LNCC_EPSILON)
    cc = cov / denom
    count = av.size
    # loss = -(1/n) sum cc; coefficients of d(cov) and d(var_a)
    p = -1.0 / (count * denom)
    q = cov * var_b / (2.0 * count * denom ** 3)
    p_n = p / win.norm
    q_n = q / win.norm
    grad = bv * win.blur(p_n) + 2.0 * av * win.blur(q_n) - win.blur(p_n * mu_b + 2.0 * q_n * mu_a)
    return float(1.0 - cc.mean()), grad


def similarity(kind: str, a: ScalarField, b: ScalarField, window: float = 5.0) -> float:
    if kind == "ssd":
        return ssd(a, b)
    if kind == "lncc":
        return lncc(a, b, window)
    raise ConfigError(f"unknown similarity {kind!r}")


def similarity_gradient(kind: str, a: ScalarField, b: ScalarField, window: float = 5.0) -> Tuple[float, np.ndarray]:
    if kind == "ssd":
        return ssd_gradient(a, b)
    if kind == "lncc":
        return lncc_gradient(a, b, window)
    raise ConfigError(f"unknown similarity {kind!r}")
