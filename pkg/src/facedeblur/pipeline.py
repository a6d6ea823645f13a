"""Blind deblurring and recognition built from the other modules.

For one observed image (OB) the pipeline

1. estimates the blur direction and picks the matching PSF basis family
   (axis-symmetric sines for 0 and pi/2, the rotated set for the diagonals);
2. sweeps the number of face bases M over energy fractions, and for each M
   solves the coupled system, factors the coefficients into (alpha, beta),
   samples the PSF and deconvolves the OB;
3. scores every candidate with the quality regressor and keeps the best,
   retrying once with the other basis family when even the best looks bad.

Recognition runs step 2-3 against every identity's own face bases and
assigns the identity whose best candidate scores highest.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import bases as B
from .biqa import extract_feature
from .coupled import (
    Dictionary,
    build_dictionary,
    factor_coefficients,
    psf_from_beta,
    solve_coefficients,
)
from .deconv import DeconvParams, tv_deconvolve
from .direction import estimate_direction
from .errors import (
    ConvergenceError,
    DegenerateDistributionError,
    DimensionError,
    EmptyCandidatesError,
    IllConditionedError,
    InvalidPSFError,
    ParameterError,
)
from .imagecore import BlurSpec, as_image, blur
from .metrics import compute_ssim
from .svr import SvrModel, SvrParams, train

log = logging.getLogger(__name__)

DEFAULT_FRACTIONS = (0.6, 0.7, 0.8, 0.9, 0.91, 0.92, 0.93, 0.94, 0.95)
FAILURE_SCORE = -2.0
SOURCES = ("deconvolved", "reconstructed")


@dataclass
class CandidateResult:
    m_used: int
    psf: np.ndarray
    image: np.ndarray
    source: str = "deconvolved"
    score: float = math.nan
    family: str = ""
    residual: float = math.nan
    alpha: np.ndarray | None = field(default=None, repr=False)

    def summary(self) -> dict:
        return {
            "m_used": self.m_used,
            "source": self.source,
            "family": self.family,
            "score": self.score,
            "residual": self.residual,
            "psf_shape": list(self.psf.shape),
        }


@dataclass
class IdentityGallery:
    identity_id: str
    images: list
    face_bases: B.FaceBasisSet | None = None
    dictionaries: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.images:
            raise ParameterError(f"identity {self.identity_id!r} has no images")
        shape = as_image(self.images[0]).shape
        if any(as_image(im).shape != shape for im in self.images):
            raise DimensionError(f"identity {self.identity_id!r} has images of different sizes")
        if self.face_bases is None:
            self.face_bases = B.build_face_bases(self.images)


@dataclass(frozen=True)
class DeblurConfig:
    energy_fractions: tuple = DEFAULT_FRACTIONS
    order: int = 3
    grid: tuple = B.DEFAULT_GRID
    domain: tuple = B.DEFAULT_DOMAIN
    symmetric: bool = True
    full_order: int = 6
    regroup_threshold: float = 0.0
    include_reconstruction: bool = True
    spectrum: str = "centered"
    solve_method: str = "normal_equations"
    whiten_direction: bool = True
    deconv: DeconvParams = DeconvParams()

    def __post_init__(self):
        fr = tuple(float(f) for f in self.energy_fractions)
        if not fr:
            raise ParameterError("energy_fractions is empty")
        if any(not 0.0 < f <= 1.0 for f in fr):
            raise ParameterError("energy fractions must lie in (0, 1]")
        if any(b <= a for a, b in zip(fr, fr[1:])):
            raise ParameterError("energy fractions must be sorted and unique")
        object.__setattr__(self, "energy_fractions", fr)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "deconv"}
        d["energy_fractions"] = list(self.energy_fractions)
        d["grid"] = list(self.grid)
        d["domain"] = list(self.domain)
        d["deconv"] = {k: getattr(self.deconv, k) for k in self.deconv.__dataclass_fields__}
        return d


@dataclass
class DeblurReport:
    best: CandidateResult
    all_candidates: list
    direction: float | None
    family: str
    regrouped: bool

    def to_dict(self) -> dict:
        return {
            "best": self.best.summary(),
            "direction": self.direction,
            "family": self.family,
            "regrouped": self.regrouped,
            "candidates": [c.summary() for c in self.all_candidates],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@lru_cache(maxsize=32)
def function_bases(family: str, order: int, grid: tuple, domain: tuple) -> B.FunctionBasisSet:
    return B.build_function_bases(domain=tuple(domain), grid=tuple(grid), family=family, order=order)


def _family_bases(family: str, config: DeblurConfig) -> B.FunctionBasisSet:
    order = config.full_order if family == "full" else config.order
    return function_bases(family, order, tuple(config.grid), tuple(config.domain))


def family_for_direction(angle: float) -> str:
    k = int(round(angle / (math.pi / 4))) % 4
    return "symmetric_axis" if k % 2 == 0 else "symmetric_diag"


def _m_values(faces: B.FaceBasisSet, fractions, spectrum: str) -> list:
    ms = []
    for f in fractions:
        m = B.truncation_for_energy(faces, f, spectrum)
        if m not in ms:
            ms.append(m)
    return ms


def generate_candidates(
    observed,
    faces: B.FaceBasisSet,
    funcs: B.FunctionBasisSet,
    energy_fractions=DEFAULT_FRACTIONS,
    deconv_params: DeconvParams | None = None,
    *,
    spectrum: str = "centered",
    include_reconstruction: bool = True,
    solve_method: str = "normal_equations",
    dictionary: Dictionary | None = None,
) -> list:
    """One deconvolved candidate per distinct M, plus the face reconstruction."""
    ob = as_image(observed)
    fr = DeblurConfig(energy_fractions=tuple(energy_fractions)).energy_fractions
    ms = _m_values(faces, fr, spectrum)
    if dictionary is None or dictionary.m_faces < max(ms):
        dictionary = build_dictionary(faces, funcs, max(ms))
    proj1 = float(B.project(ob, faces, 1)[0])

    out = []
    for m in ms:
        d = dictionary.truncated(m)
        try:
            try:
                x = solve_coefficients(d, ob, solve_method)
            except IllConditionedError:
                x = solve_coefficients(d, ob, "conjugate_gradient")
            fz = factor_coefficients(x, funcs, proj1)
            psf = psf_from_beta(fz.beta, funcs)
        except (ConvergenceError, InvalidPSFError, IllConditionedError) as exc:
            log.info("M=%d dropped: %s", m, exc)
            continue
        img = tv_deconvolve(ob, psf, deconv_params)
        out.append(CandidateResult(m, psf, img, "deconvolved", family=funcs.family,
                                   residual=fz.residual, alpha=fz.alpha))
    if not out:
        raise EmptyCandidatesError(f"every candidate failed ({funcs.family} family)")
    if include_reconstruction:
        top = out[-1]
        rec = np.clip(B.reconstruct(top.alpha, faces), 0.0, 1.0)
        out.append(CandidateResult(top.m_used, top.psf, rec, "reconstructed", family=funcs.family,
                                   residual=top.residual, alpha=top.alpha))
    return out


def score_image(model: SvrModel, image) -> float:
    try:
        return float(model.predict_many(extract_feature(image))[0])
    except DegenerateDistributionError as exc:
        log.info("feature extraction failed, scored as failure: %s", exc)
        return FAILURE_SCORE


def _rank_key(c: CandidateResult):
    return (-c.score, c.m_used, SOURCES.index(c.source))


def select_best(candidates, model: SvrModel) -> CandidateResult:
    """Score every candidate; highest score wins, ties go to the smaller M."""
    if not candidates:
        raise EmptyCandidatesError("no candidates to select from")
    for c in candidates:
        c.score = score_image(model, c.image)
    return min(candidates, key=_rank_key)


def _gallery_parts(gallery):
    if isinstance(gallery, IdentityGallery):
        return gallery.face_bases, gallery.dictionaries
    return gallery, {}


def _attempt(ob, faces, family, model, config, cache):
    funcs = _family_bases(family, config)
    need = max(_m_values(faces, config.energy_fractions, config.spectrum))
    if family not in cache or cache[family].m_faces < need:
        cache[family] = build_dictionary(faces, funcs, need)
    cands = generate_candidates(
        ob, faces, funcs, config.energy_fractions, config.deconv,
        spectrum=config.spectrum,
        include_reconstruction=config.include_reconstruction,
        solve_method=config.solve_method,
        dictionary=cache[family],
    )
    select_best(cands, model)
    return cands


def deblur(observed, gallery, model: SvrModel, config: DeblurConfig | None = None) -> DeblurReport:
    config = config or DeblurConfig()
    ob = as_image(observed)
    faces, cache = _gallery_parts(gallery)
    if ob.shape != tuple(faces.image_shape):
        raise DimensionError(f"observed shape {ob.shape} does not match gallery {faces.image_shape}")

    if config.symmetric:
        ref = faces.mean_spectrum if config.whiten_direction else None
        angle = estimate_direction(ob, reference=ref)
        families = [family_for_direction(angle)]
        families.append("symmetric_diag" if families[0] == "symmetric_axis" else "symmetric_axis")
    else:
        angle = None
        families = ["full"]

    candidates = []
    regrouped = False
    failure = None
    for k, family in enumerate(families):
        if k > 0:
            best_so_far = min(candidates, key=_rank_key) if candidates else None
            if best_so_far is not None and best_so_far.score >= config.regroup_threshold:
                break
            regrouped = True
            log.info("regrouping into the %s family", family)
        try:
            candidates += _attempt(ob, faces, family, model, config, cache)
        except EmptyCandidatesError as exc:
            failure = exc
    if not candidates:
        raise EmptyCandidatesError(f"no candidates in any basis family: {failure}")
    best = min(candidates, key=_rank_key)
    return DeblurReport(best, candidates, angle, best.family, regrouped)


def recognize(observed, galleries, model: SvrModel, config: DeblurConfig | None = None):
    """Identity whose bases give the best-scoring restoration, plus the score table.

    Returns ``(identity_id, scores, reports)``; ties go to the
    lexicographically smallest identity id.
    """
    if len(galleries) < 2:
        raise ParameterError("recognition needs at least 2 galleries")
    ids = [g.identity_id for g in galleries]
    if len(set(ids)) != len(ids):
        raise ParameterError("identity ids must be unique")
    scores, reports = {}, {}
    for g in sorted(galleries, key=lambda g: g.identity_id):
        try:
            rep = deblur(observed, g, model, config)
        except EmptyCandidatesError as exc:
            log.info("identity %s produced no candidates: %s", g.identity_id, exc)
            scores[g.identity_id] = -math.inf
            continue
        reports[g.identity_id] = rep
        scores[g.identity_id] = rep.best.score
    winner = min(scores, key=lambda i: (-scores[i], i))
    return winner, scores, reports


def score_table_csv(rows) -> str:
    """CSV text for recognition results: one row per OB, one column per identity."""
    import csv
    import io

    rows = list(rows)
    ids = sorted({i for r in rows for i in r["scores"]})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["observed", "predicted"] + ids)
    for r in rows:
        w.writerow([r["observed"], r["predicted"]] + [repr(float(r["scores"].get(i, math.nan))) for i in ids])
    return buf.getvalue()


# synthetic supervision --------------------------------------------------------

def label_from_ssim(ssim: float) -> float:
    """Quality label on the -2..2 scale: SSIM 1 -> 2, 0.5 -> 0, <= 0 -> -2."""
    return float(np.clip(4.0 * ssim - 2.0, -2.0, 2.0))


def training_samples(sharp_images, faces: B.FaceBasisSet, specs, config: DeblurConfig | None = None,
                     seed: int = 0):
    """Features and synthetic labels from candidates of blurred training images.

    Every sharp image is blurred by every spec; all candidates, the OB itself
    and the sharp original become samples labeled by their SSIM to the
    sharp original.
    """
    config = config or DeblurConfig()
    feats, labels = [], []

    def add(img, sharp):
        try:
            f = extract_feature(img)
        except DegenerateDistributionError:
            return
        feats.append(f)
        labels.append(label_from_ssim(compute_ssim(img, sharp)))

    k = 0
    for sharp in sharp_images:
        sharp = as_image(sharp)
        add(sharp, sharp)
        for spec in specs:
            ob = blur(sharp, spec, seed=seed + k)
            k += 1
            add(ob, sharp)
            if config.symmetric:
                family = family_for_direction(spec.angle if spec.kind != "gaussian" else 0.0)
            else:
                family = "full"
            funcs = _family_bases(family, config)
            try:
                cands = generate_candidates(
                    ob, faces, funcs, config.energy_fractions, config.deconv,
                    spectrum=config.spectrum,
                    include_reconstruction=config.include_reconstruction,
                    solve_method=config.solve_method,
                )
            except EmptyCandidatesError:
                continue
            for c in cands:
                add(c.image, sharp)
    return np.array(feats), np.array(labels)


def train_quality_model(sharp_images, faces: B.FaceBasisSet, specs, config: DeblurConfig | None = None,
                        params: SvrParams | None = None, seed: int = 0) -> SvrModel:
    X, y = training_samples(sharp_images, faces, specs, config, seed)
    return train(X, y, params)


DEFAULT_TRAINING_SPECS = (
    BlurSpec("gaussian", sigma=2.0),
    BlurSpec("gaussian", sigma=3.0),
    BlurSpec("motion", length=15, angle=math.pi / 4),
    BlurSpec("motion", length=11, angle=0.0),
    BlurSpec("combined", sigma=2.0, length=15, angle=math.pi / 4),
)
