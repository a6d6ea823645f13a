"""Full-reference quality metrics: windowed SSIM and PSNR."""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, ParameterError
from .imagecore import as_image

C1 = 0.01 ** 2
C2 = 0.03 ** 2


def _window_sums(a: np.ndarray, window: int) -> np.ndarray:
    return sliding_window_view(a, (window, window)).sum(axis=(-2, -1))


def ssim_map(a, b, window: int = 8, c1: float = C1, c2: float = C2) -> np.ndarray:
    """SSIM of every ``window x window`` patch (stride 1, unbiased moments)."""
    a = as_image(a)
    b = as_image(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    if window < 2:
        raise ParameterError("window must be >= 2")
    if window > min(a.shape):
        raise DimensionError(f"window {window} larger than image {a.shape}")
    t = window * window
    sa = _window_sums(a, window)
    sb = _window_sums(b, window)
    mu_a = sa / t
    mu_b = sb / t

    def cov(x, y, sx, sy):
        return (_window_sums(x * y, window) - sx * sy / t) / (t - 1)

    var_a = cov(a, a, sa, sa)
    var_b = cov(b, b, sb, sb)
    cov_ab = cov(a, b, sa, sb)
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov_ab + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return num / den


def compute_ssim(a, b, window: int = 8, c1: float = C1, c2: float = C2) -> float:
    return float(np.mean(ssim_map(a, b, window, c1, c2)))


def psnr(reference, test, peak: float = 1.0) -> float:
    ref = as_image(reference)
    tst = as_image(test)
    if ref.shape != tst.shape:
        raise DimensionError(f"shape mismatch {ref.shape} vs {tst.shape}")
    mse = float(np.mean((ref - tst) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak ** 2 / mse)
