"""No-reference quality features from natural-scene statistics.

The image is locally normalized (MSCN coefficients).  A generalized
Gaussian is fitted to the coefficients and asymmetric generalized
Gaussians to products of adjacent coefficients along four orientations.  Fits use L-moments instead of ordinary moments: they are
linear in the order statistics, so a few extreme pixels cannot dominate.
The fitted parameters at full and half resolution give 36 numbers.

Distribution conventions follow ``scipy.stats.gennorm``: density
proportional to exp(-|x / s| ** shape), variance s^2 G(3/shape) / G(1/shape).
"""

from __future__ import annotations

import csv
import io
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.special import gammainccinv, gammaln

from .errors import DegenerateDistributionError, DimensionError, FormatError, ParameterError
from .imagecore import as_image
from .persist import atomic_write_text

FEATURE_LENGTH = 36
MSCN_SIGMA = 7.0 / 6.0
MSCN_RADIUS = 3                       # 7x7 window
MSCN_C = 1.0 / 255.0
SHAPE_RANGE = (0.2, 10.0)
ORIENTATIONS = ("horizontal", "vertical", "diagonal", "antidiagonal")


def mscn(image, window_sigma: float = MSCN_SIGMA, c: float = MSCN_C) -> np.ndarray:
    """(I - mu) / (sigma + c) with Gaussian-weighted local mean and deviation."""
    img = as_image(image)
    if min(img.shape) < 16:
        raise DimensionError(f"MSCN needs at least 16x16 pixels, got {img.shape}")
    trunc = MSCN_RADIUS / window_sigma
    mu = gaussian_filter(img, window_sigma, mode="nearest", truncate=trunc)
    var = gaussian_filter(img * img, window_sigma, mode="nearest", truncate=trunc) - mu * mu
    sigma = np.sqrt(np.maximum(var, 0.0))
    return (img - mu) / (sigma + c)


def sample_lmoments(samples) -> np.ndarray:
    """Unbiased sample L-moments (l1, l2, l3, l4)."""
    x = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    n = x.size
    if n < 4:
        raise DegenerateDistributionError("need at least 4 samples for L-moments")
    i = np.arange(n, dtype=np.float64)
    b0 = x.mean()
    b1 = np.sum(i * x) / (n * (n - 1))
    b2 = np.sum(i * (i - 1) * x) / (n * (n - 1) * (n - 2))
    b3 = np.sum(i * (i - 1) * (i - 2) * x) / (n * (n - 1) * (n - 2) * (n - 3))
    return np.array([
        b0,
        2 * b1 - b0,
        6 * b2 - 6 * b1 + b0,
        20 * b3 - 30 * b2 + 12 * b1 - b0,
    ])


@lru_cache(maxsize=1)
def _tables():
    """Population L-moments on a log-spaced grid of shapes, unit scale.

    Returns (shapes, l2, tau4) of the symmetric GGD and (l1, l2 / l1) of the
    half-GGD (absolute value of a GGD).  Every entry is an integral of the
    half-GGD quantile Q(v) against a polynomial in v.  Substituting
    v = 1 - exp(-s) turns them into Gauss-Laguerre integrals, which handle
    the heavy tails of small shapes well.
    """
    shapes = np.geomspace(SHAPE_RANGE[0], SHAPE_RANGE[1], 160)
    s, w = np.polynomial.laguerre.laggauss(120)
    v = -np.expm1(-s)
    a = 1.0 / shapes[:, None]
    q = gammainccinv(a, np.exp(-s)[None, :]) ** a
    u = 0.5 * (1.0 + v)                 # symmetric-GGD probability for |x| quantile v
    l2 = q @ (w * v)
    l4 = q @ (w * (20 * u ** 3 - 30 * u ** 2 + 12 * u - 1))
    h1 = np.exp(gammaln(2 / shapes) - gammaln(1 / shapes))
    h2 = q @ (w * (2 * v - 1))
    return shapes, l2, l4 / l2, h1, h2 / h1


def _invert(ratio: float, shapes: np.ndarray, table: np.ndarray) -> float:
    # the ratios decrease as the shape grows; np.interp needs increasing x
    order = np.argsort(table)
    return float(np.exp(np.interp(ratio, table[order], np.log(shapes[order]))))


def ggd_variance(shape: float, scale: float) -> float:
    return scale ** 2 * float(np.exp(gammaln(3 / shape) - gammaln(1 / shape)))


def fit_ggd_lmoments(samples) -> tuple[float, float]:
    """Zero-centered GGD (shape, scale) from the sample L-kurtosis and l2."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 100:
        raise ParameterError(f"need at least 100 samples, got {x.size}")
    l1, l2, _, l4 = sample_lmoments(x)
    if not l2 > 1e-12 * max(1.0, abs(l1)):
        raise DegenerateDistributionError("samples have no spread")
    shapes, unit_l2, tau4, _, _ = _tables()
    shape = _invert(l4 / l2, shapes, tau4)
    scale = l2 / float(np.interp(np.log(shape), np.log(shapes), unit_l2))
    return shape, scale


def fit_aggd_lmoments(samples) -> tuple[float, float, float]:
    """Asymmetric GGD (shape, left scale, right scale) about zero.

    Each side, reflected to positive values, is a half-GGD with the common
    shape.  Dividing each side by its own mean puts both on the same
    footing, and the L-CV (l2 / l1) of the pooled, normalized magnitudes
    depends on the shape alone.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    left = -x[x < 0]
    right = x[x > 0]
    if left.size < 4 or right.size < 4:
        raise DegenerateDistributionError("AGGD fit needs samples on both sides of zero")
    ml, mr = left.mean(), right.mean()
    if not (ml > 0 and mr > 0):
        raise DegenerateDistributionError("samples have no spread")
    pooled = np.concatenate([left / ml, right / mr])
    l1, l2 = sample_lmoments(pooled)[:2]
    shapes, _, _, half_l1, half_cv = _tables()
    shape = _invert(l2 / l1, shapes, half_cv)
    h1 = float(np.exp(gammaln(2 / shape) - gammaln(1 / shape)))
    return shape, ml / h1, mr / h1


def _aggd_features(shape: float, left: float, right: float) -> list:
    r = float(np.exp(gammaln(2 / shape) - gammaln(1 / shape)))
    return [shape, (right - left) * r, ggd_variance(shape, left), ggd_variance(shape, right)]


def _pair_products(m: np.ndarray) -> dict:
    return {
        "horizontal": m[:, :-1] * m[:, 1:],
        "vertical": m[:-1, :] * m[1:, :],
        "diagonal": m[:-1, :-1] * m[1:, 1:],
        "antidiagonal": m[:-1, 1:] * m[1:, :-1],
    }


def downsample2(image: np.ndarray) -> np.ndarray:
    h, w = image.shape
    h2, w2 = h // 2, w // 2
    return image[:2 * h2, :2 * w2].reshape(h2, 2, w2, 2).mean(axis=(1, 3))


def _scale_features(img: np.ndarray, scale: int) -> list:
    m = mscn(img)
    try:
        shape, s = fit_ggd_lmoments(m)
    except DegenerateDistributionError as exc:
        raise DegenerateDistributionError(f"scale {scale}, MSCN: {exc}") from exc
    out = [shape, ggd_variance(shape, s)]
    for name, prod in _pair_products(m).items():
        try:
            out += _aggd_features(*fit_aggd_lmoments(prod))
        except DegenerateDistributionError as exc:
            raise DegenerateDistributionError(f"scale {scale}, {name} products: {exc}") from exc
    return out


def extract_feature(image) -> np.ndarray:
    img = as_image(image)
    if min(img.shape) < 32:
        raise DimensionError(f"feature extraction needs at least 32x32 pixels, got {img.shape}")
    feat = _scale_features(img, 1) + _scale_features(downsample2(img), 2)
    return np.array(feat, dtype=np.float64)


def write_feature_csv(path, features, labels=None) -> None:
    """One row per feature vector (36 columns), plus a ``score`` column if labeled."""
    feats = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if feats.shape[1] != FEATURE_LENGTH:
        raise DimensionError(f"features must have {FEATURE_LENGTH} columns")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = [f"w{k + 1}" for k in range(FEATURE_LENGTH)]
    if labels is not None:
        header.append("score")
    writer.writerow(header)
    for k, row in enumerate(feats):
        cells = [repr(float(v)) for v in row]
        if labels is not None:
            cells.append(repr(float(labels[k])))
        writer.writerow(cells)
    atomic_write_text(path, buf.getvalue())


def read_feature_csv(path) -> tuple[np.ndarray, np.ndarray | None]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty feature file")
    header, body = rows[0], rows[1:]
    labeled = header[-1] == "score"
    ncols = FEATURE_LENGTH + int(labeled)
    if len(header) != ncols:
        raise FormatError(f"{path}: expected {ncols} columns, found {len(header)}")
    try:
        data = np.array([[float(v) for v in r] for r in body], dtype=np.float64).reshape(-1, ncols)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if labeled:
        return data[:, :FEATURE_LENGTH], data[:, FEATURE_LENGTH]
    return data, None
