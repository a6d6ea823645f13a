"""Coupled linear regression for image and PSF coefficients.

The observed image is modelled as ``I = (sum_i alpha_i v_i) * (sum_j beta_j phi_j)``.
Writing ``x[i*N + j] = alpha_i * beta_j`` turns this into the linear system
``A x = vec(I)`` whose columns are the pairwise convolutions ``v_i * phi_j``.
After solving for ``x`` it is factored back into ``(alpha, beta)`` with the
PSF constrained to unit integral and pointwise nonnegativity.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.fft import fft2, ifft2

from .bases import FaceBasisSet, FunctionBasisSet
from .errors import (
    ConvergenceError,
    DimensionError,
    IllConditionedError,
    InvalidPSFError,
    ParameterError,
)
from .imagecore import as_image, kernel_otf

log = logging.getLogger(__name__)

SOLVE_METHODS = ("normal_equations", "conjugate_gradient")
INIT_METHODS = ("svd_rank1", "ones")
# Above this the normal matrix A^T A is never formed.
MAX_DENSE_COLUMNS = 4000
MAX_CONDITION = 1e12


@dataclass(frozen=True)
class Dictionary:
    columns: np.ndarray      # (pixels, m_faces * n_funcs)
    m_faces: int
    n_funcs: int
    image_shape: tuple
    provenance: dict = field(default_factory=dict)

    def column(self, i: int, j: int) -> np.ndarray:
        """Column for face basis ``i`` and function basis ``j`` (0-based)."""
        return self.columns[:, i * self.n_funcs + j]

    def truncated(self, m: int) -> "Dictionary":
        if not 1 <= m <= self.m_faces:
            raise ParameterError(f"m must be in [1, {self.m_faces}]")
        prov = dict(self.provenance, m_faces=m)
        return Dictionary(self.columns[:, :m * self.n_funcs], m, self.n_funcs, self.image_shape, prov)


def build_dictionary(faces: FaceBasisSet, funcs: FunctionBasisSet, m: int | None = None) -> Dictionary:
    """Columns ``vec(v_i * (dA phi_j))`` under circular convolution.

    Function bases are scaled by the grid cell area so that the PSF taps
    ``dA * sum_j beta_j phi_j`` sum to ``sum_j beta_j * integral(phi_j)``.
    """
    if m is None:
        m = len(faces)
    if not 1 <= m <= len(faces):
        raise ParameterError(f"m must be in [1, {len(faces)}], got {m}")
    shape = tuple(faces.image_shape)
    if funcs.grid[0] > shape[0] or funcs.grid[1] > shape[1]:
        raise DimensionError(f"function-basis grid {funcs.grid} larger than image {shape}")
    n = len(funcs)
    area = funcs.cell_area
    otfs = np.stack([kernel_otf(k * area, shape) for k in funcs.kernels])
    cols = np.empty((shape[0] * shape[1], m * n))
    for i in range(m):
        fv = fft2(faces.vectors[i].reshape(shape))
        conv = np.real(ifft2(fv[None, :, :] * otfs))
        cols[:, i * n:(i + 1) * n] = conv.reshape(n, -1).T
    prov = {"m_faces": m, "n_funcs": n, "family": funcs.family, "grid": list(funcs.grid)}
    return Dictionary(cols, m, n, shape, prov)


def _cgls(A: np.ndarray, b: np.ndarray, tol: float, max_iter: int) -> tuple[np.ndarray, int]:
    x = np.zeros(A.shape[1])
    r = b.copy()
    s = A.T @ r
    norm0 = np.linalg.norm(s)
    if norm0 == 0.0:
        return x, 0
    p = s.copy()
    gamma = s @ s
    for it in range(1, max_iter + 1):
        q = A @ p
        qq = q @ q
        if qq == 0.0:
            return x, it
        step = gamma / qq
        x += step * p
        r -= step * q
        s = A.T @ r
        gamma_new = s @ s
        if np.sqrt(gamma_new) <= tol * norm0:
            return x, it
        p = s + (gamma_new / gamma) * p
        gamma = gamma_new
    log.debug("CGLS hit max_iter=%d, relative normal residual %.3e", max_iter, np.sqrt(gamma) / norm0)
    return x, max_iter


def solve_coefficients(
    dictionary: Dictionary,
    observed,
    method: str = "normal_equations",
    tol: float = 1e-10,
    max_iter: int = 1000,
) -> np.ndarray:
    """Least-squares coefficients ``argmin ||I - A x||^2`` without regularization."""
    img = as_image(observed)
    if img.shape != tuple(dictionary.image_shape):
        raise DimensionError(f"observed shape {img.shape} does not match dictionary {dictionary.image_shape}")
    A = dictionary.columns
    b = img.ravel()
    if method == "normal_equations":
        if A.shape[1] > MAX_DENSE_COLUMNS:
            raise ParameterError("too many columns for normal equations; use conjugate_gradient")
        AtA = A.T @ A
        cond = np.linalg.cond(AtA)
        if not np.isfinite(cond) or cond > MAX_CONDITION:
            raise IllConditionedError("normal matrix A^T A is numerically singular", cond)
        return np.linalg.solve(AtA, A.T @ b)
    if method == "conjugate_gradient":
        x, _ = _cgls(A, b, tol, max_iter)
        return x
    raise ParameterError(f"unsupported solve method {method!r}")


@dataclass(frozen=True)
class AugLagParams:
    penalty0: float = 1.0
    growth: float = 10.0
    max_outer: int = 50
    inner_tol: float = 1e-8
    max_inner: int = 500
    feas_tol: float = 1e-10
    max_penalty: float = 1e12


@dataclass
class Factorization:
    alpha: np.ndarray
    beta: np.ndarray
    residual: float
    eq_violation: float
    min_psf: float
    outer_iterations: int = 0
    converged: bool = True
    initial_objective: float = float("nan")
    # augmented objective after every inner block update, one list per outer iteration
    history: list = field(default_factory=list, repr=False)

    def to_json(self) -> str:
        return json.dumps(
            {
                "alpha": self.alpha.tolist(),
                "beta": self.beta.tolist(),
                "residual": self.residual,
                "eq_violation": self.eq_violation,
                "min_psf": self.min_psf,
                "outer_iterations": self.outer_iterations,
                "converged": self.converged,
                "initial_objective": self.initial_objective,
            },
            indent=2,
        )


class _Problem:
    """Objective and block solvers for the constrained (alpha, beta) factorization."""

    def __init__(self, X: np.ndarray, funcs: FunctionBasisSet, proj1: float):
        self.X = X
        self.proj1 = float(proj1)
        self.c = np.asarray(funcs.integrals, dtype=np.float64)
        self.Phi = funcs.kernels.reshape(len(funcs), -1)      # (N, G)
        # constraints on identically-zero samples (the grid border) are vacuous
        keep = np.abs(self.Phi).max(axis=0) > 1e-14 * np.abs(self.Phi).max()
        self.Phi = self.Phi[:, keep]
        try:
            self.dome = funcs.indices.index((1, 1))
        except ValueError:
            self.dome = 0

    def objective(self, alpha, beta) -> float:
        R = self.X - np.outer(alpha, beta)
        return float(np.sum(R ** 2) + (self.proj1 - alpha[0]) ** 2)

    def alpha_step(self, beta) -> np.ndarray:
        bb = beta @ beta
        if bb == 0.0:
            alpha = np.zeros(self.X.shape[0])
            alpha[0] = self.proj1
            return alpha
        alpha = self.X @ beta / bb
        alpha[0] = (self.X[0] @ beta + self.proj1) / (bb + 1.0)
        return alpha

    def eq(self, beta) -> float:
        return float(self.c @ beta - 1.0)

    def samples(self, beta) -> np.ndarray:
        return beta @ self.Phi

    def augmented(self, alpha, beta, lam, mu, rho) -> float:
        h = self.eq(beta)
        g = self.samples(beta)
        ineq = np.maximum(0.0, mu - rho * g)
        return (
            self.objective(alpha, beta)
            + lam * h
            + 0.5 * rho * h * h
            + (np.sum(ineq ** 2) - np.sum(mu ** 2)) / (2.0 * rho)
        )

    def beta_step(self, alpha, beta, lam, mu, rho, tol=1e-13, max_iter=100) -> np.ndarray:
        """Minimize the augmented Lagrangian over beta (convex, piecewise quadratic)."""
        aa = alpha @ alpha
        Xa = self.X.T @ alpha
        n = len(beta)

        def value(b):
            h = self.c @ b - 1.0
            ineq = np.maximum(0.0, mu - rho * (b @ self.Phi))
            return aa * (b @ b) - 2.0 * (b @ Xa) + lam * h + 0.5 * rho * h * h + np.sum(ineq ** 2) / (2.0 * rho)

        cur = value(beta)
        for _ in range(max_iter):
            h = self.c @ beta - 1.0
            ineq = mu - rho * (beta @ self.Phi)
            active = ineq > 0
            Pa = self.Phi[:, active]
            grad = 2.0 * aa * beta - 2.0 * Xa + (lam + rho * h) * self.c - Pa @ ineq[active]
            H = 2.0 * aa * np.eye(n) + rho * np.outer(self.c, self.c) + rho * (Pa @ Pa.T)
            H += 1e-12 * max(np.trace(H) / n, 1.0) * np.eye(n)
            d = -np.linalg.solve(H, grad)
            slope = grad @ d
            if slope >= 0:
                break
            t = 1.0
            while True:
                trial = beta + t * d
                val = value(trial)
                if val <= cur + 1e-4 * t * slope:
                    break
                t *= 0.5
                if t < 1e-12:
                    return beta
            beta = trial
            done = abs(cur - val) <= tol * max(abs(cur), 1.0) and t == 1.0
            cur = val
            if done or np.linalg.norm(t * d) <= 1e-15 * max(np.linalg.norm(beta), 1.0):
                break
        return beta

    def make_feasible(self, beta) -> np.ndarray:
        """Rescale onto the unit-integral plane, then blend towards the dome basis
        until every PSF sample is nonnegative."""
        s = self.c @ beta
        if not np.isfinite(s) or s <= 1e-12 * max(np.linalg.norm(beta) * np.linalg.norm(self.c), 1e-300):
            beta = np.zeros_like(beta)
            beta[self.dome] = 1.0
            s = self.c @ beta
        beta = beta / s
        g = self.samples(beta)
        if g.min() < 0:
            safe = np.zeros_like(beta)
            safe[self.dome] = 1.0 / self.c[self.dome]
            gs = self.samples(safe)
            bad = g < 0
            t = np.max(-g[bad] / (gs[bad] - g[bad]))
            t = min(1.0, t * (1.0 + 1e-12) + 1e-15)
            beta = (1.0 - t) * beta + t * safe
        return beta


def _initial_beta(X: np.ndarray, init: str) -> np.ndarray:
    if init == "svd_rank1":
        u, s, vt = np.linalg.svd(X, full_matrices=False)
        return vt[0] * s[0] * np.sign(u[np.argmax(np.abs(u[:, 0])), 0] or 1.0)
    if init == "ones":
        return np.ones(X.shape[1])
    raise ParameterError(f"unsupported init {init!r}")


def factor_coefficients(
    x,
    funcs: FunctionBasisSet,
    proj1: float,
    init: str = "svd_rank1",
    penalties: AugLagParams | None = None,
) -> Factorization:
    """Factor ``x`` into ``(alpha, beta)`` by an augmented-Lagrangian method.

    Minimizes ``sum_ij (x_ij - alpha_i beta_j)^2 + (proj1 - alpha_1)^2``
    subject to ``sum_j beta_j integral(phi_j) = 1`` and
    ``sum_j beta_j phi_j >= 0`` at every grid sample.
    """
    params = penalties or AugLagParams()
    x = np.asarray(x, dtype=np.float64)
    n = len(funcs)
    if x.ndim != 1 or n == 0 or x.size % n != 0:
        raise DimensionError(f"coefficient vector of length {x.size} is not a multiple of {n}")
    X = x.reshape(-1, n)
    prob = _Problem(X, funcs, proj1)

    beta = _initial_beta(X, init)
    if init == "svd_rank1" and prob.c @ beta < 0:
        beta = -beta
    beta = prob.make_feasible(beta)
    alpha = prob.alpha_step(beta)
    f0 = prob.objective(alpha, beta)
    best = (alpha.copy(), beta.copy(), f0)

    lam = 0.0
    mu = np.zeros(prob.Phi.shape[1])
    rho = params.penalty0
    history = []
    prev_viol = np.inf
    converged = False
    outer = 0
    for outer in range(1, params.max_outer + 1):
        trace = [prob.augmented(alpha, beta, lam, mu, rho)]
        for _ in range(params.max_inner):
            beta = prob.beta_step(alpha, beta, lam, mu, rho)
            trace.append(prob.augmented(alpha, beta, lam, mu, rho))
            alpha = prob.alpha_step(beta)
            trace.append(prob.augmented(alpha, beta, lam, mu, rho))
            if abs(trace[-3] - trace[-1]) <= params.inner_tol * max(abs(trace[-1]), 1.0):
                break
        history.append(trace)

        h = prob.eq(beta)
        g = prob.samples(beta)
        viol = max(abs(h), float(np.max(np.abs(np.minimum(g, mu / rho)))))
        lam += rho * h
        mu = np.maximum(0.0, mu - rho * g)
        if viol <= params.feas_tol:
            converged = True
            break
        if viol > 0.25 * prev_viol:
            rho = min(rho * params.growth, params.max_penalty)
        prev_viol = viol

    raw_eq = abs(prob.eq(beta))
    raw_min = float(prob.samples(beta).min())
    if not converged and (raw_eq > 1e-6 or raw_min < -1e-6):
        raise ConvergenceError(
            "augmented Lagrangian did not reach feasibility",
            best=(alpha, beta),
            diagnostics={"eq_violation": raw_eq, "min_psf": raw_min, "outer_iterations": outer},
        )

    beta = prob.make_feasible(beta)
    alpha = prob.alpha_step(beta)
    f = prob.objective(alpha, beta)
    if f > best[2]:
        alpha, beta, f = best
    return Factorization(
        alpha=alpha,
        beta=beta,
        residual=f,
        eq_violation=abs(prob.eq(beta)),
        min_psf=float(prob.samples(beta).min()),
        outer_iterations=outer,
        converged=converged,
        initial_objective=f0,
        history=history,
    )


def psf_field(beta, funcs: FunctionBasisSet) -> np.ndarray:
    """Sampled ``sum_j beta_j phi_j`` on the basis grid (no cell-area scaling)."""
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (len(funcs),):
        raise DimensionError(f"beta has shape {beta.shape}, expected ({len(funcs)},)")
    return np.tensordot(beta, funcs.kernels, axes=1)


def psf_from_beta(beta, funcs: FunctionBasisSet, neg_tol: float = 1e-8) -> np.ndarray:
    field_ = psf_field(beta, funcs)
    if field_.min() < -neg_tol:
        raise InvalidPSFError(f"PSF has negative sample {field_.min():.3e}")
    k = np.where(field_ < 0, 0.0, field_)
    total = k.sum()
    if not total > 0:
        raise InvalidPSFError("PSF has no positive mass")
    return k / total
