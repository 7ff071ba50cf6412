"""
Evaluation metrics for registration results.
"""

import logging

import numpy as np
from skimage.metrics import structural_similarity

from analyzers.similarity import ssd
from models.field_models import ScalarField
from utils.errors import NumericalError

logger = logging.getLogger(__name__)

SSIM_SIGMA = 1.5


def re_ssd(moving: ScalarField, fixed: ScalarField, warped: ScalarField) -> float:
    """
    Relative sum of squared differences in percent.

    ``100 * ssd(warped, fixed) / ssd(moving, fixed)``; 100 means no improvement.

    Raises:
        NumericalError: When moving equals fixed ("undefined normalization")
    """
    moving.grid.require_same(warped.grid)
    before = ssd(moving, fixed)
    if before == 0.0:
        raise NumericalError("undefined normalization: moving and fixed images are identical")
    return 100.0 * (ssd(warped, fixed) / before)


def ncc_metric(fixed: ScalarField, warped: ScalarField) -> float:
    """Global normalized correlation coefficient (centered cosine similarity)."""
    fixed.grid.require_same(warped.grid)
    if np.array_equal(fixed.values, warped.values) and np.ptp(fixed.values) > 0:
        return 1.0
    a = fixed.values - fixed.values.mean()
    b = warped.values - warped.values.mean()
    na = float(np.sqrt(np.sum(a * a)))
    nb = float(np.sqrt(np.sum(b * b)))
    if na == 0.0 or nb == 0.0:
        raise NumericalError("NCC undefined for a constant image")
    return float(np.sum(a * b) / (na * nb))


def _structural_similarity(fixed: ScalarField, warped: ScalarField, full: bool):
    fixed.grid.require_same(warped.grid)
    return structural_similarity(
        fixed.values,
        warped.values,
        data_range=1.0,
        gaussian_weights=True,
        sigma=SSIM_SIGMA,
        use_sample_covariance=False,
        K1=0.01,
        K2=0.03,
        full=full,
    )


def ssim(fixed: ScalarField, warped: ScalarField) -> float:
    """
    Mean structural similarity with a Gaussian window (std 1.5 px) and data range 1.

    scikit-image truncates the window at 3.5 std, so its support is the
    centred 11x11 box rather than an 8x8 one; even windows have no centre
    node and the weights beyond 4 px are under 3% of the peak. The mean
    skips the 5 px border where the window would leave the image.
    Identical images give exactly 1.
    """
    if np.array_equal(fixed.values, warped.values):
        fixed.grid.require_same(warped.grid)
        return 1.0
    return float(_structural_similarity(fixed, warped, full=False))


def ssim_map(fixed: ScalarField, warped: ScalarField) -> ScalarField:
    """Local structural similarity at every node, on the window ``ssim`` averages."""
    _, local = _structural_similarity(fixed, warped, full=True)
    return ScalarField(fixed.grid, local)
