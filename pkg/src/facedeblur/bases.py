"""Orthogonal basis families for faces and PSFs.

Face bases are the leading left singular vectors of the matrix whose
columns are vectorized training images.  PSF bases are products of sines
``sin(m*pi*x/a) * sin(n*pi*y/b)`` sampled on a grid that includes the
domain edges, so each function vanishes on the border of the kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import persist
from .errors import DimensionError, ParameterError
from .imagecore import as_image, tapered_magnitude

FAMILIES = ("full", "symmetric_axis", "symmetric_diag")
DEFAULT_GRID = (21, 21)
DEFAULT_DOMAIN = (1.0, 1.0)


@dataclass(frozen=True)
class FaceBasisSet:
    vectors: np.ndarray            # (count, pixels), rows are unit-norm v_i
    singular_values: np.ndarray    # (count,), nonincreasing
    image_shape: tuple
    # singular values of the mean-centered training matrix (PCA spectrum)
    centered_values: np.ndarray | None = None
    # mean tapered magnitude spectrum of the training images
    mean_spectrum: np.ndarray | None = None

    def __len__(self):
        return self.vectors.shape[0]

    def image(self, i: int) -> np.ndarray:
        return self.vectors[i].reshape(self.image_shape)

    def truncated(self, count: int) -> "FaceBasisSet":
        return FaceBasisSet(self.vectors[:count], self.singular_values[:count], self.image_shape,
                            self.centered_values, self.mean_spectrum)

    def save(self, path) -> None:
        arrays = {"vectors": self.vectors, "singular_values": self.singular_values}
        for name in ("centered_values", "mean_spectrum"):
            if getattr(self, name) is not None:
                arrays[name] = getattr(self, name)
        persist.save(path, "face_bases", arrays, {"image_shape": list(self.image_shape)})

    @classmethod
    def load(cls, path) -> "FaceBasisSet":
        arrays, meta = persist.load(path, "face_bases")
        return cls(arrays["vectors"], arrays["singular_values"], tuple(meta["image_shape"]),
                   arrays.get("centered_values"), arrays.get("mean_spectrum"))


@dataclass(frozen=True)
class FunctionBasisSet:
    kernels: np.ndarray            # (count, rows, cols)
    indices: tuple                 # ((m, n), ...)
    domain: tuple                  # (a, b)
    family: str
    integrals: np.ndarray = field(repr=False)   # discrete integral of each kernel over the domain

    def __len__(self):
        return self.kernels.shape[0]

    @property
    def grid(self) -> tuple:
        return self.kernels.shape[1:]

    @property
    def cell_area(self) -> float:
        return grid_cell_area(self.domain, self.grid)

    def gram(self) -> np.ndarray:
        flat = self.kernels.reshape(len(self), -1)
        return flat @ flat.T * self.cell_area

    def save(self, path) -> None:
        persist.save(
            path,
            "function_bases",
            {"kernels": self.kernels, "integrals": self.integrals},
            {
                "indices": [list(ix) for ix in self.indices],
                "domain": list(self.domain),
                "family": self.family,
            },
        )

    @classmethod
    def load(cls, path) -> "FunctionBasisSet":
        arrays, meta = persist.load(path, "function_bases")
        return cls(
            arrays["kernels"],
            tuple(tuple(ix) for ix in meta["indices"]),
            tuple(meta["domain"]),
            meta["family"],
            arrays["integrals"],
        )


def _fix_signs(u: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs


def build_face_bases(training_images, max_count: int | None = None) -> FaceBasisSet:
    images = [as_image(im) for im in training_images]
    if not images:
        raise ParameterError("need at least one training image")
    shape = images[0].shape
    for k, im in enumerate(images):
        if im.shape != shape:
            raise DimensionError(f"training image {k} has shape {im.shape}, expected {shape}")
    D = np.stack([im.ravel() for im in images], axis=1)
    limit = min(D.shape)
    if max_count is None:
        max_count = limit
    if not 1 <= max_count <= limit:
        raise ParameterError(f"max_count must be in [1, {limit}], got {max_count}")
    u, s, _ = np.linalg.svd(D, full_matrices=False)
    u = _fix_signs(u[:, :max_count])
    centered = np.linalg.svd(D - D.mean(axis=1, keepdims=True), compute_uv=False)
    spectrum = np.mean([tapered_magnitude(im) for im in images], axis=0)
    return FaceBasisSet(np.ascontiguousarray(u.T), s[:max_count].copy(), shape, centered, spectrum)


def _first_reaching(values: np.ndarray, fraction: float) -> int:
    energy = np.cumsum(values ** 2)
    total = energy[-1] if energy.size else 0.0
    if total <= 0:
        return 0
    return int(np.searchsorted(energy / total, fraction, side="left")) + 1


def truncation_for_energy(bases: FaceBasisSet, fraction: float, spectrum: str = "singular") -> int:
    """Number of face bases M needed to hold ``fraction`` of the energy.

    ``spectrum="singular"`` counts the leading squared singular values of the
    raw training matrix.  Those are dominated by the first vector (the mean
    face direction carries well over 90% of the energy), so
    ``spectrum="centered"`` instead counts PCA eigenvalues of the
    mean-centered images and adds one for the mean direction.
    """
    if not 0.0 < fraction <= 1.0:
        raise ParameterError(f"fraction must be in (0, 1], got {fraction}")
    if spectrum == "singular":
        m = _first_reaching(bases.singular_values, fraction)
    elif spectrum == "centered":
        if bases.centered_values is None:
            raise ParameterError("face bases carry no centered spectrum")
        m = 1 + _first_reaching(bases.centered_values, fraction)
    else:
        raise ParameterError(f"unknown spectrum {spectrum!r}")
    return max(1, min(m, len(bases)))


def project(image, bases: FaceBasisSet, count: int | None = None) -> np.ndarray:
    img = as_image(image)
    if img.shape != tuple(bases.image_shape):
        raise DimensionError(f"image shape {img.shape} does not match bases {bases.image_shape}")
    if count is None:
        count = len(bases)
    if count > len(bases):
        raise ParameterError(f"count {count} exceeds basis size {len(bases)}")
    return bases.vectors[:count] @ img.ravel()


def reconstruct(alpha, bases: FaceBasisSet) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=np.float64)
    return (alpha @ bases.vectors[:len(alpha)]).reshape(bases.image_shape)


def grid_cell_area(domain, grid) -> float:
    a, b = domain
    rows, cols = grid
    return (a / (cols - 1)) * (b / (rows - 1))


def grid_coordinates(domain, grid) -> tuple[np.ndarray, np.ndarray]:
    """(x, y) sample coordinates; x runs along columns, y along rows."""
    a, b = domain
    rows, cols = grid
    x = np.linspace(0.0, a, cols)
    y = np.linspace(0.0, b, rows)
    return np.meshgrid(x, y)


def sine_product(m: int, n: int, x, y, domain) -> np.ndarray:
    a, b = domain
    return np.sin(m * np.pi * x / a) * np.sin(n * np.pi * y / b)


def family_indices(family: str, order: int) -> list:
    """(m, n) pairs in the order phi_{m + (n-1)K}: m varies fastest.

    ``order`` is the number of indices per axis, so every family holds
    ``order**2`` functions; the symmetric families use the first ``order``
    odd integers.
    """
    if order < 1:
        raise ParameterError("order must be >= 1")
    if family == "full":
        vals = list(range(1, order + 1))
    elif family in ("symmetric_axis", "symmetric_diag"):
        vals = list(range(1, 2 * order, 2))
    else:
        raise ParameterError(f"unsupported basis family {family!r}")
    return [(m, n) for n in vals for m in vals]


def rotated_sine_products(indices, domain, grid, angle: float) -> np.ndarray:
    """Evaluate each sine product on coordinates rotated by ``angle`` about the center.

    Samples whose rotated position falls outside the domain are zero.
    """
    a, b = domain
    x, y = grid_coordinates(domain, grid)
    cx, cy = a / 2.0, b / 2.0
    c, s = np.cos(angle), np.sin(angle)
    xr = cx + c * (x - cx) - s * (y - cy)
    yr = cy + s * (x - cx) + c * (y - cy)
    inside = (xr >= 0) & (xr <= a) & (yr >= 0) & (yr <= b)
    out = np.empty((len(indices),) + tuple(grid))
    for k, (m, n) in enumerate(indices):
        out[k] = np.where(inside, sine_product(m, n, xr, yr, domain), 0.0)
    return out


def gram_schmidt(kernels: np.ndarray, cell_area: float) -> np.ndarray:
    """Modified Gram-Schmidt in the discrete inner product; norms are kept."""
    out = kernels.copy()
    flat = out.reshape(len(out), -1)
    norms = np.sqrt(np.sum(kernels.reshape(len(kernels), -1) ** 2, axis=1))
    for j in range(len(flat)):
        for i in range(j):
            flat[j] -= (flat[j] @ flat[i]) / (flat[i] @ flat[i]) * flat[i]
        nj = np.linalg.norm(flat[j])
        if nj > 0:
            flat[j] *= norms[j] / nj
    return out


def max_offdiag(gram: np.ndarray) -> float:
    """Largest off-diagonal Gram entry relative to sqrt(g_ii g_jj)."""
    d = np.sqrt(np.abs(np.diag(gram)))
    scale = np.outer(d, d)
    scale[scale == 0] = 1.0
    rel = np.abs(gram) / scale
    np.fill_diagonal(rel, 0.0)
    return float(rel.max()) if rel.size > 1 else 0.0


def build_function_bases(
    domain=DEFAULT_DOMAIN,
    grid=DEFAULT_GRID,
    family: str = "symmetric_axis",
    order: int = 3,
    orthogonalize: bool = True,
) -> FunctionBasisSet:
    rows, cols = grid
    if rows < 3 or cols < 3:
        raise ParameterError("function-basis grid must be at least 3x3")
    indices = family_indices(family, order)
    angle = np.pi / 4 if family == "symmetric_diag" else 0.0
    kernels = rotated_sine_products(indices, domain, grid, angle)
    area = grid_cell_area(domain, grid)
    if orthogonalize and family == "symmetric_diag":
        flat = kernels.reshape(len(kernels), -1)
        if max_offdiag(flat @ flat.T) > 1e-6:
            kernels = gram_schmidt(kernels, area)
    flat = kernels.reshape(len(kernels), -1)
    worst = max_offdiag(flat @ flat.T)
    if worst > 1e-8:
        # the grid aliases the highest sine indices onto lower ones
        raise ParameterError(f"{rows}x{cols} grid cannot resolve {family} order {order} "
                             f"(off-diagonal Gram {worst:.1e}); use a finer grid")
    integrals = flat.sum(axis=1) * area
    return FunctionBasisSet(kernels, tuple(indices), tuple(domain), family, integrals)
