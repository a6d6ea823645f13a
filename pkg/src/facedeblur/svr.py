"""Multiple-kernel epsilon-SVR trained by sequential minimal optimization.

The regression function is ``f(w) = sum_k d_k sum_h beta_h G_k(w_h, w) + b``
over 15 radial kernels: five bandwidths on each half of the 36-dim
feature and five on the whole vector.  With ``beta = a+ - a-`` the dual is

    max  s'beta - eps |beta|_1 - (1 / 8 lam) (sum_k T_k^q)^(2/q)
    s.t. sum(beta) = 0,  -C <= beta <= C,  T_k = beta' G_k beta

which is concave.  Its gradient is ``s - eps sign(beta) - K_d beta`` with
``K_d = sum_k d_k G_k`` and ``d_k = ||T||_q^(2-q) T_k^(q-1) / (2 lam)``, so
the kernel weights follow beta in closed form.  Each SMO step moves one
coefficient up and another down by the same amount (keeping the sum at
zero) and maximizes the dual exactly along that line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import persist
from .errors import ConvergenceError, DimensionError, ParameterError

FEATURE_LENGTH = 36
BANDWIDTHS = tuple(2.0 ** e for e in range(-2, 3))
RANGES = ((0, 18), (18, 36), (0, 36))        # half-open, zero-based


@dataclass(frozen=True)
class KernelBank:
    definitions: tuple = tuple((r, s) for r in RANGES for s in BANDWIDTHS)

    def __post_init__(self):
        if len(self.definitions) == 0:
            raise ParameterError("kernel bank is empty")
        for (lo, hi), s in self.definitions:
            if not (0 <= lo < hi) or not s > 0:
                raise ParameterError(f"bad kernel definition {((lo, hi), s)}")

    def __len__(self):
        return len(self.definitions)

    def gram(self, k: int, X: np.ndarray, Y: np.ndarray | None = None) -> np.ndarray:
        (lo, hi), s = self.definitions[k]
        a = X[:, lo:hi]
        b = a if Y is None else Y[:, lo:hi]
        d2 = np.sum(a * a, 1)[:, None] + np.sum(b * b, 1)[None, :] - 2.0 * a @ b.T
        out = np.exp(-np.maximum(d2, 0.0) / (s * s))
        if Y is None:
            out = 0.5 * (out + out.T)
            np.fill_diagonal(out, 1.0)
        return out


DEFAULT_BANK = KernelBank()


def kernel_eval(bank: KernelBank, k: int, w1, w2) -> float:
    """Value of kernel ``k`` (1-based, as G_1..G_15) between two feature vectors."""
    if not 1 <= k <= len(bank):
        raise ParameterError(f"kernel index must be in 1..{len(bank)}, got {k}")
    (lo, hi), s = bank.definitions[k - 1]
    d = np.asarray(w1, dtype=np.float64)[lo:hi] - np.asarray(w2, dtype=np.float64)[lo:hi]
    return math.exp(-float(d @ d) / (s * s))


@dataclass(frozen=True)
class SvrParams:
    C: float = 10.0
    lam: float = 1.0
    p: float = 2.0
    epsilon: float = 0.1
    tol: float = 1e-3
    max_iter: int = 200_000
    standardize: bool = True

    def __post_init__(self):
        for name in ("C", "lam", "epsilon", "tol"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be > 0")
        if not self.p > 1:
            raise ParameterError("p must be > 1")
        if self.max_iter < 1:
            raise ParameterError("max_iter must be >= 1")

    @property
    def q(self) -> float:
        return self.p / (self.p - 1.0)


@dataclass(frozen=True, eq=False)
class SvrModel:
    beta: np.ndarray                 # a+ - a- per training sample
    bias: float
    kernel_weights: np.ndarray       # d_k
    params: SvrParams
    features: np.ndarray             # training features after standardization
    offset: np.ndarray               # standardization: (w - offset) / scale
    scale: np.ndarray
    bank: KernelBank = DEFAULT_BANK
    history: list = field(default_factory=list, compare=False, repr=False)
    iterations: int = 0

    @property
    def a_plus(self) -> np.ndarray:
        return np.maximum(self.beta, 0.0)

    @property
    def a_minus(self) -> np.ndarray:
        return np.maximum(-self.beta, 0.0)

    def transform(self, features) -> np.ndarray:
        W = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if W.shape[1] != self.features.shape[1]:
            raise DimensionError(f"expected {self.features.shape[1]} features, got {W.shape[1]}")
        return (W - self.offset) / self.scale

    def predict_many(self, features) -> np.ndarray:
        W = self.transform(features)
        sv = np.flatnonzero(self.beta)
        out = np.full(W.shape[0], self.bias)
        for k, d in enumerate(self.kernel_weights):
            if d > 0 and sv.size:
                out += d * (self.bank.gram(k, W, self.features[sv]) @ self.beta[sv])
        return out

    def save(self, path) -> None:
        p = self.params
        persist.save(
            path,
            "svr_model",
            {
                "beta": self.beta,
                "bias": np.array([self.bias]),
                "kernel_weights": self.kernel_weights,
                "features": self.features,
                "offset": self.offset,
                "scale": self.scale,
            },
            {
                "params": {"C": p.C, "lam": p.lam, "p": p.p, "epsilon": p.epsilon, "tol": p.tol,
                           "max_iter": p.max_iter, "standardize": p.standardize},
                "bank": [[list(r), s] for r, s in self.bank.definitions],
                "iterations": self.iterations,
            },
        )

    @classmethod
    def load(cls, path) -> "SvrModel":
        arrays, meta = persist.load(path, "svr_model")
        bank = KernelBank(tuple((tuple(r), float(s)) for r, s in meta["bank"]))
        return cls(
            beta=arrays["beta"],
            bias=float(arrays["bias"][0]),
            kernel_weights=arrays["kernel_weights"],
            params=SvrParams(**meta["params"]),
            features=arrays["features"],
            offset=arrays["offset"],
            scale=arrays["scale"],
            bank=bank,
            iterations=int(meta["iterations"]),
        )


def predict(model: SvrModel, feature) -> float:
    return float(model.predict_many(feature)[0])


class _Dual:
    """Dual objective bookkeeping; keeps g_k = G_k beta up to date."""

    def __init__(self, grams: np.ndarray, s: np.ndarray, params: SvrParams):
        self.G = grams                          # (K, n, n)
        self.s = s
        self.C = params.C
        self.eps = params.epsilon
        self.lam = params.lam
        self.q = params.q
        n = s.size
        self.beta = np.zeros(n)
        self.g = np.zeros((grams.shape[0], n))
        self.diag = np.einsum("kii->ki", grams)

    def norm_q(self, T) -> float:
        T = np.maximum(T, 0.0)
        if not T.any():
            return 0.0
        return float(np.sum(T ** self.q) ** (1.0 / self.q))

    def value(self) -> float:
        T = self.g @ self.beta
        return float(self.s @ self.beta - self.eps * np.abs(self.beta).sum()
                     - self.norm_q(T) ** 2 / (8.0 * self.lam))

    def weights(self) -> np.ndarray:
        T = np.maximum(self.g @ self.beta, 0.0)
        nq = self.norm_q(T)
        if nq == 0.0:
            return np.zeros_like(T)
        return nq ** (2.0 - self.q) * T ** (self.q - 1.0) / (2.0 * self.lam)

    def line(self, i: int, j: int):
        """Dual value along beta_i += t, beta_j -= t as a function of t."""
        T = self.g @ self.beta
        c = self.g[:, i] - self.g[:, j]
        e = np.maximum(self.diag[:, i] + self.diag[:, j] - 2.0 * self.G[:, i, j], 0.0)
        bi, bj = self.beta[i], self.beta[j]
        ds = self.s[i] - self.s[j]

        def phi(t):
            Tt = T + 2.0 * t * c + t * t * e
            return (ds * t - self.eps * (abs(bi + t) + abs(bj - t))
                    - self.norm_q(Tt) ** 2 / (8.0 * self.lam))

        return phi, T, c, e

    def step(self, i: int, j: int) -> float:
        bi, bj = self.beta[i], self.beta[j]
        hi = min(self.C - bi, bj + self.C)
        if hi <= 0:
            return 0.0
        phi, T, c, e = self.line(i, j)
        knots = sorted({0.0, hi, *[k for k in (-bi, bj) if 0.0 < k < hi]})
        cands = list(knots)
        for a, b in zip(knots[:-1], knots[1:]):
            mid = 0.5 * (a + b)
            if self.q == 2.0:
                # smooth part derivative: ds - eps*(sgn) - (1/2lam) sum_k T_k(t)(c_k + t e_k)
                lin = (self.s[i] - self.s[j]
                       - self.eps * (np.sign(bi + mid) - np.sign(bj - mid)))
                coef = np.array([np.sum(e * e), 3.0 * np.sum(c * e),
                                 np.sum(T * e + 2.0 * c * c), np.sum(T * c)])
                coef = coef / (2.0 * self.lam)
                coef[3] -= lin
                for r in np.roots(coef):
                    if abs(r.imag) < 1e-12 and a < r.real < b:
                        cands.append(float(r.real))
            else:
                res = minimize_scalar(lambda t: -phi(t), bounds=(a, b), method="bounded",
                                      options={"xatol": 1e-13 * max(1.0, b)})
                cands.append(float(res.x))
        vals = [phi(t) for t in cands]
        best = int(np.argmax(vals))
        t = cands[best]
        if vals[best] <= phi(0.0):
            return 0.0
        self.beta[i] = bi + t
        self.beta[j] = bj - t
        # snap to the box edges to keep the bounds exact
        for k in (i, j):
            if abs(self.beta[k] - self.C) < 1e-12 * self.C:
                self.beta[k] = self.C
            elif abs(self.beta[k] + self.C) < 1e-12 * self.C:
                self.beta[k] = -self.C
        self.g += t * (self.G[:, :, i] - self.G[:, :, j])
        return t

    def directional(self):
        """Best ascent rates for raising and for lowering each coefficient."""
        grad = self.s - self.weights() @ self.g
        up_sign = np.where(self.beta >= 0, 1.0, -1.0)
        down_sign = np.where(self.beta <= 0, 1.0, -1.0)
        up = grad - self.eps * up_sign
        down = -grad - self.eps * down_sign
        up[self.beta >= self.C] = -np.inf
        down[self.beta <= -self.C] = -np.inf
        return up, down, grad

    def bias(self, grad) -> float:
        free = (np.abs(self.beta) > 1e-12 * self.C) & (np.abs(self.beta) < self.C * (1 - 1e-12))
        if free.any():
            return float(np.mean(grad[free] - self.eps * np.sign(self.beta[free])))
        # no free vectors: midpoint of the interval the KKT conditions allow
        zero = self.beta == 0
        top = self.beta >= self.C
        bottom = self.beta <= -self.C
        lo = max(np.max(grad - self.eps, where=zero, initial=-np.inf),
                 np.max(grad + self.eps, where=bottom, initial=-np.inf))
        hi = min(np.min(grad + self.eps, where=zero, initial=np.inf),
                 np.min(grad - self.eps, where=top, initial=np.inf))
        if np.isfinite(lo) and np.isfinite(hi):
            return float(0.5 * (lo + hi))
        return float(lo if np.isfinite(lo) else hi)


def _standardizer(X: np.ndarray, enabled: bool):
    if not enabled:
        return np.zeros(X.shape[1]), np.ones(X.shape[1])
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd < 1e-12] = 1.0
    return mu, sd


def train(features, scores, params: SvrParams | None = None, bank: KernelBank = DEFAULT_BANK) -> SvrModel:
    params = params or SvrParams()
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    s = np.asarray(scores, dtype=np.float64).ravel()
    if X.shape[0] != s.size:
        raise DimensionError(f"{X.shape[0]} feature rows but {s.size} scores")
    if s.size < 2:
        raise ParameterError("need at least 2 training samples")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(s))):
        raise ParameterError("training data must be finite")
    for (lo, hi), _ in bank.definitions:
        if hi > X.shape[1]:
            raise DimensionError(f"kernel range {lo}:{hi} exceeds feature length {X.shape[1]}")
    offset, scale = _standardizer(X, params.standardize)
    Z = (X - offset) / scale
    grams = np.stack([bank.gram(k, Z) for k in range(len(bank))])
    dual = _Dual(grams, s, params)

    history = [dual.value()]
    it = 0
    converged = False
    for it in range(1, params.max_iter + 1):
        up, down, grad = dual.directional()
        i = int(np.argmax(up))
        j = int(np.argmax(down))
        if i == j:
            up2 = up.copy()
            up2[i] = -np.inf
            down2 = down.copy()
            down2[j] = -np.inf
            i2, j2 = int(np.argmax(up2)), int(np.argmax(down2))
            if up2[i2] + down[j] >= up[i] + down2[j2]:
                i = i2
            else:
                j = j2
        if up[i] + down[j] < params.tol:
            converged = True
            break
        if dual.step(i, j) == 0.0:
            converged = up[i] + down[j] < 10 * params.tol
            break
        history.append(dual.value())
    _, _, grad = dual.directional()
    if not converged:
        raise ConvergenceError(
            f"SMO did not reach KKT tolerance {params.tol} in {it} iterations",
            best=dual.beta.copy(),
            diagnostics={"iterations": it, "violation": float(up[i] + down[j]),
                         "dual": history[-1]},
        )
    return SvrModel(
        beta=dual.beta.copy(),
        bias=dual.bias(grad),
        kernel_weights=dual.weights(),
        params=params,
        features=Z,
        offset=offset,
        scale=scale,
        bank=bank,
        history=history,
        iterations=it,
    )
