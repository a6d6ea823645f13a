"""Dense image / kernel primitives.

Images and kernels are plain 2-D ``float64`` numpy arrays. Images hold
grayscale intensities in [0, 1]; a kernel is a valid PSF when it is
nonnegative and sums to one.  Everything here is a pure function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from numpy.fft import fft2, ifft2
from PIL import Image as PILImage

from .errors import DimensionError, InvalidPSFError, ParameterError

BLUR_KINDS = ("gaussian", "motion", "combined", "shake")
CONV_MODES = ("same_circular", "same_replicate")

# Seeds of the two shipped camera-shake kernels ("TYPE I" / "TYPE II").
SHAKE_TYPE_I = 1
SHAKE_TYPE_II = 2

LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class BlurSpec:
    kind: str
    sigma: float = 2.0
    length: float = 15.0
    angle: float = 0.0
    snr_db: float = 30.0
    shake_path: Optional[tuple] = None
    shake_seed: int = SHAKE_TYPE_I
    shake_extent: float = 15.0

    def __post_init__(self):
        if self.kind not in BLUR_KINDS:
            raise ParameterError(f"unsupported blur kind {self.kind!r}")
        if self.kind in ("gaussian", "combined") and not self.sigma > 0:
            raise ParameterError("sigma must be > 0")
        if self.kind in ("motion", "combined") and not self.length >= 1:
            raise ParameterError("motion length must be >= 1")
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise ParameterError("snr_db must be finite or +inf")

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "sigma": self.sigma,
            "length": self.length,
            "angle": self.angle,
            "snr_db": self.snr_db,
        }
        if self.kind == "shake":
            d["shake_seed"] = self.shake_seed
            d["shake_extent"] = self.shake_extent
            if self.shake_path is not None:
                d["shake_path"] = [list(p) for p in self.shake_path]
        return d


def as_image(data) -> np.ndarray:
    img = np.asarray(data, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] < 1:
        raise DimensionError(f"expected a non-empty 2-D image, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ParameterError("image contains non-finite values")
    return img


def check_psf(kernel, tol: float = 1e-9) -> np.ndarray:
    """Return ``kernel`` as float array, raising if it is not a valid PSF."""
    k = as_image(kernel)
    if k.min() < 0:
        raise InvalidPSFError(f"PSF has negative tap {k.min():.3e}")
    if abs(k.sum() - 1.0) > tol:
        raise InvalidPSFError(f"PSF sums to {k.sum():.12f}, expected 1")
    return k


def is_valid_psf(kernel, tol: float = 1e-9) -> bool:
    try:
        check_psf(kernel, tol)
    except (InvalidPSFError, DimensionError, ParameterError):
        return False
    return True


def pad_kernel(kernel: np.ndarray, shape: tuple) -> np.ndarray:
    """Zero-pad ``kernel`` to ``shape`` with its center moved to index (0, 0)."""
    kh, kw = kernel.shape
    if kh > shape[0] or kw > shape[1]:
        raise DimensionError(f"kernel {kernel.shape} larger than image {shape}")
    out = np.zeros(shape)
    out[:kh, :kw] = kernel
    return np.roll(out, (-(kh // 2), -(kw // 2)), axis=(0, 1))


def kernel_otf(kernel: np.ndarray, shape: tuple) -> np.ndarray:
    return fft2(pad_kernel(kernel, shape))


def _circular(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    return np.real(ifft2(fft2(image) * kernel_otf(kernel, image.shape)))


def replicate_pad(image: np.ndarray, kernel_shape: tuple) -> tuple[np.ndarray, tuple]:
    """Edge-pad an image enough that circular wrap-around cannot reach it."""
    ph, pw = kernel_shape[0], kernel_shape[1]
    return np.pad(image, ((ph, ph), (pw, pw)), mode="edge"), (ph, pw)


def convolve(image, kernel, mode: str = "same_circular") -> np.ndarray:
    """2-D convolution of ``image`` with a centered ``kernel``.

    ``same_circular`` treats the image as periodic (exact under the DFT);
    ``same_replicate`` extends it by edge replication before convolving.
    Output has the image's shape in both modes.
    """
    img = as_image(image)
    k = as_image(kernel)
    if k.shape[0] > img.shape[0] or k.shape[1] > img.shape[1]:
        raise DimensionError(f"kernel {k.shape} larger than image {img.shape}")
    if mode == "same_circular":
        return _circular(img, k)
    if mode == "same_replicate":
        padded, (ph, pw) = replicate_pad(img, k.shape)
        out = _circular(padded, k)
        return out[ph:ph + img.shape[0], pw:pw + img.shape[1]]
    raise ParameterError(f"unsupported convolution mode {mode!r}")


def gaussian_kernel(sigma: float) -> np.ndarray:
    half = int(math.ceil(3.0 * sigma))
    r = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(r ** 2) / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def _splat(points: np.ndarray, weights: np.ndarray, half: int) -> np.ndarray:
    """Bilinearly deposit (row, col) points, given relative to the center."""
    size = 2 * half + 1
    k = np.zeros((size, size))
    rows = points[:, 0] + half
    cols = points[:, 1] + half
    r0 = np.floor(rows).astype(int)
    c0 = np.floor(cols).astype(int)
    fr = rows - r0
    fc = cols - c0
    for dr, dc, w in (
        (0, 0, (1 - fr) * (1 - fc)),
        (0, 1, (1 - fr) * fc),
        (1, 0, fr * (1 - fc)),
        (1, 1, fr * fc),
    ):
        np.add.at(k, (r0 + dr, c0 + dc), w * weights)
    return k


def motion_kernel(length: float, angle: float) -> np.ndarray:
    """Anti-aliased straight motion streak of ``length`` pixels.

    ``angle`` is measured from the +column axis towards +row, so pi/4 runs
    along the main diagonal and the kernel equals its transpose.
    """
    c, s = math.cos(angle), math.sin(angle)
    # cos/sin of the canonical angles differ in the last ulp
    c, s = round(c, 14), round(s, 14)
    n = max(int(math.ceil(length * 32)), 2)
    t = (np.arange(n) + 0.5) / n * length - length / 2.0
    pts = np.stack([t * s, t * c], axis=1)
    half = int(math.ceil(length / 2.0 * max(abs(c), abs(s)))) + 1
    k = _splat(pts, np.ones(n), half)
    k[k < 1e-15] = 0.0
    return k / k.sum()


def shake_path(seed: int, extent: float = 15.0, steps: int = 40) -> np.ndarray:
    """Random smooth camera trajectory, returned as (row, col) vertices."""
    rng = np.random.default_rng(seed)
    vel = np.zeros(2)
    pos = np.zeros(2)
    path = [pos.copy()]
    for _ in range(steps):
        vel = 0.8 * vel + rng.normal(scale=1.0, size=2)
        pos = pos + vel
        path.append(pos.copy())
    path = np.asarray(path)
    path -= path.mean(axis=0)
    span = np.abs(path).max()
    if span > 0:
        path *= (extent / 2.0) / span
    return path


def polyline_kernel(path) -> np.ndarray:
    path = np.asarray(path, dtype=np.float64)
    if path.ndim != 2 or path.shape[1] != 2 or len(path) < 2:
        raise ParameterError("shake path must be a polyline with >= 2 (row, col) vertices")
    pts, wts = [], []
    for a, b in zip(path[:-1], path[1:]):
        seg = np.linalg.norm(b - a)
        n = max(int(math.ceil(seg * 32)), 1)
        t = (np.arange(n) + 0.5) / n
        pts.append(a + t[:, None] * (b - a))
        wts.append(np.full(n, seg / n))
    pts = np.concatenate(pts)
    wts = np.concatenate(wts)
    if wts.sum() <= 0:
        raise ParameterError("shake path has zero length")
    half = int(math.ceil(np.abs(pts).max())) + 1
    k = _splat(pts, wts, half)
    k[k < 1e-15] = 0.0
    return k / k.sum()


def make_kernel(spec: BlurSpec) -> np.ndarray:
    if spec.kind == "gaussian":
        return gaussian_kernel(spec.sigma)
    if spec.kind == "motion":
        return motion_kernel(spec.length, spec.angle)
    if spec.kind == "combined":
        from scipy.signal import convolve2d

        k = convolve2d(motion_kernel(spec.length, spec.angle), gaussian_kernel(spec.sigma))
        return k / k.sum()
    if spec.kind == "shake":
        path = spec.shake_path
        if path is None:
            path = shake_path(spec.shake_seed, spec.shake_extent)
        return polyline_kernel(path)
    raise ParameterError(f"unsupported blur kind {spec.kind!r}")


def add_noise(image, snr_db: float, seed: int) -> np.ndarray:
    """Add white Gaussian noise at ``snr_db`` relative to the input's power.

    ``snr_db = inf`` disables noise. The result is not clipped, so a noisy
    image may leave [0, 1] by a few noise standard deviations.
    """
    img = as_image(image)
    if snr_db == math.inf:
        return img.copy()
    if not math.isfinite(snr_db):
        raise ParameterError("snr_db must be finite or +inf")
    power = np.mean(img ** 2)
    std = math.sqrt(power / 10.0 ** (snr_db / 10.0))
    rng = np.random.default_rng(seed)
    return img + rng.normal(scale=std, size=img.shape)


def measured_snr_db(clean, noisy) -> float:
    clean = np.asarray(clean, dtype=np.float64)
    noise = np.asarray(noisy, dtype=np.float64) - clean
    return 10.0 * math.log10(np.sum(clean ** 2) / np.sum(noise ** 2))


def blur(image, spec: BlurSpec, seed: int = 0, mode: str = "same_circular") -> np.ndarray:
    """Synthesize an observed image: convolve with the BlurSpec kernel, then add noise."""
    return add_noise(convolve(image, make_kernel(spec), mode), spec.snr_db, seed)


def fft_magnitude(image) -> np.ndarray:
    return np.abs(fft2(as_image(image)))


def tapered_magnitude(image) -> np.ndarray:
    """|F| of the mean-removed image under a separable Hann window.

    The window suppresses the cross-shaped leakage that periodic wrap-around
    edges add along the frequency axes.
    """
    img = as_image(image)
    win = np.outer(np.hanning(img.shape[0]), np.hanning(img.shape[1]))
    return np.abs(fft2((img - img.mean()) * win))


def to_gray(arr: np.ndarray) -> np.ndarray:
    if arr.ndim == 3:
        return arr[..., :3] @ LUMA
    return arr


def read_image(path) -> np.ndarray:
    """Read a PGM/PNG (8- or 16-bit, gray or color) into a [0, 1] array."""
    with PILImage.open(path) as im:
        mode = im.mode
        if mode in ("RGB", "RGBA", "P", "LA"):
            arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
            return to_gray(arr)
        arr = np.asarray(im, dtype=np.float64)
    if mode == "L":
        return arr / 255.0
    if mode in ("I;16", "I;16B", "I;16L", "I"):
        return arr / 65535.0
    if mode == "1":
        return arr
    if mode == "F":
        return arr
    raise ParameterError(f"unsupported image mode {mode!r} in {path}")


def write_image(path, image, bits: int = 8) -> None:
    img = np.clip(as_image(image), 0.0, 1.0)
    if bits == 8:
        im = PILImage.fromarray(np.round(img * 255.0).astype(np.uint8), mode="L")
    elif bits == 16:
        im = PILImage.fromarray(np.round(img * 65535.0).astype(np.uint16))
    else:
        raise ParameterError("bits must be 8 or 16")
    im.save(Path(path))


def crop_center(arr: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    h, w = arr.shape
    th, tw = shape
    r0 = (h - th) // 2
    c0 = (w - tw) // 2
    return arr[r0:r0 + th, c0:c0 + tw]


def embed_center(kernel: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    """Place ``kernel`` centered inside a zero array of ``shape`` (or crop it)."""
    out = np.zeros(tuple(shape))
    kh, kw = kernel.shape
    th, tw = shape
    # center index convention k//2 must be preserved
    src_r0 = max(kh // 2 - th // 2, 0)
    src_c0 = max(kw // 2 - tw // 2, 0)
    dst_r0 = max(th // 2 - kh // 2, 0)
    dst_c0 = max(tw // 2 - kw // 2, 0)
    nh = min(kh - src_r0, th - dst_r0)
    nw = min(kw - src_c0, tw - dst_c0)
    out[dst_r0:dst_r0 + nh, dst_c0:dst_c0 + nw] = kernel[src_r0:src_r0 + nh, src_c0:src_c0 + nw]
    return out
