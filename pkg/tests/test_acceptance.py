"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Criteria 4, 5 and 9 return a report whose content hash criterion 10
compares against a fresh rerun.
"""

import hashlib
import itertools
import json
import math
import time

import numpy as np
import pytest
from scipy.stats import gennorm

from _instances import ACCEPTANCE_LINES, canonical, feasible_beta, in_span_system, random_faces
from facedeblur import bases as B
from facedeblur import biqa, svr
from facedeblur import coupled as C
from facedeblur import direction as D
from facedeblur import pipeline as P
from facedeblur import synthetic as S
from facedeblur.imagecore import BlurSpec, blur
from facedeblur.metrics import compute_ssim

REPORTS = {}


def record(n, ok, detail):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)
    return ok


def content_hash(obj) -> str:
    h = hashlib.sha256()

    def feed(v):
        if isinstance(v, np.ndarray):
            h.update(repr((v.dtype.str, v.shape)).encode())
            h.update(np.ascontiguousarray(v).tobytes())
        elif isinstance(v, dict):
            for k in sorted(v):
                h.update(repr(k).encode())
                feed(v[k])
        elif isinstance(v, (list, tuple)):
            h.update(b"[")
            for x in v:
                feed(x)
            h.update(b"]")
        else:
            h.update(repr(v).encode())

    feed(obj)
    return h.hexdigest()


# shared workloads -------------------------------------------------------------

def train_model(faces):
    return P.train_quality_model(S.face_corpus(8, seed=2), faces, P.DEFAULT_TRAINING_SPECS)


def run_direction_sweep(faces):
    imgs = S.face_corpus(12, seed=3)
    rows = []
    for n, (d, width, sigma) in enumerate(itertools.product(range(4), [3, 5, 7, 9], [1, 3, 5])):
        spec = BlurSpec("combined", sigma=sigma, length=width, angle=D.DIRECTIONS[d], snr_db=30.0)
        ob = blur(imgs[n % len(imgs)], spec, seed=n)
        scores = D.direction_scores(ob, reference=faces.mean_spectrum)
        est = D.DIRECTIONS[int(np.argmax(scores))]
        rows.append({"truth": d, "width": width, "sigma": sigma, "estimate": est, "scores": scores})
    acc = float(np.mean([r["estimate"] == D.DIRECTIONS[r["truth"]] for r in rows]))
    return acc, rows


DEBLUR_SPECS = (
    BlurSpec("gaussian", sigma=2.0, snr_db=30.0),
    BlurSpec("gaussian", sigma=3.0, snr_db=30.0),
    BlurSpec("motion", length=15, angle=math.pi / 4, snr_db=30.0),
    BlurSpec("combined", sigma=2.0, length=15, angle=math.pi / 4, snr_db=30.0),
)


def run_deblur_suite(faces, model):
    tests = S.face_corpus(8, seed=1)
    rows = []
    for spec in DEBLUR_SPECS:
        for k, sharp in enumerate(tests):
            ob = blur(sharp, spec, seed=100 + k)
            rep = P.deblur(ob, faces, model)
            rows.append({
                "spec": spec.to_dict(),
                "ssim_ob": compute_ssim(ob, sharp),
                "ssim_ei": compute_ssim(rep.best.image, sharp),
                "report": rep.to_dict(),
                "best": rep.best.image,
            })
    rate = float(np.mean([r["ssim_ei"] > r["ssim_ob"] for r in rows]))
    return rate, rows


RECOGNITION_SPECS = (
    BlurSpec("gaussian", sigma=3.0),
    BlurSpec("motion", length=15, angle=math.pi / 4),
    BlurSpec("combined", sigma=2.0, length=15, angle=math.pi / 4),
    BlurSpec("gaussian", sigma=3.0),
    BlurSpec("motion", length=15, angle=0.0),
)


def run_recognition(model):
    ids = S.identities(10, seed=7)
    galleries = [P.IdentityGallery(i.label, S.identity_images(i, 8)) for i in ids]
    rows = []
    n = 0
    for ident in ids:
        for img, spec in zip(S.identity_images(ident, 5, start=100), RECOGNITION_SPECS):
            ob = blur(img, spec, seed=1000 + n)
            n += 1
            who, scores, _ = P.recognize(ob, galleries, model)
            rows.append({"truth": ident.label, "predicted": who, "spec": spec.to_dict(), "scores": scores})
    acc = float(np.mean([r["truth"] == r["predicted"] for r in rows]))
    return acc, rows


@pytest.fixture(scope="module")
def model(faces):
    return train_model(faces)


# criteria -----------------------------------------------------------------------

def test_criterion_01_basis_correctness(faces):
    t0 = time.time()
    rng = np.random.default_rng(1)
    face_sets = [faces, B.build_face_bases(S.face_corpus(10, seed=4)), random_faces(rng, 7, (24, 24))]
    face_sets += [P.IdentityGallery(i.label, S.identity_images(i, 8)).face_bases for i in S.identities(3, seed=7)]
    worst_face = max(B.max_offdiag(f.vectors @ f.vectors.T) for f in face_sets)
    func_sets = [B.build_function_bases(family=fam, order=o, grid=g)
                 for fam in ("symmetric_axis", "symmetric_diag")
                 for o, g in itertools.chain(((o, (21, 21)) for o in range(1, 6)), ((o, (9, 9)) for o in (1, 2, 3)))]
    func_sets += [B.build_function_bases(family="full", order=o) for o in (2, 4, 6)]
    worst_func = 0.0
    for fs in func_sets:
        K = fs.kernels.reshape(len(fs), -1)
        worst_func = max(worst_func, B.max_offdiag(K @ K.T * fs.cell_area))
    dt = time.time() - t0
    ok = worst_face < 1e-8 and worst_func < 1e-8 and dt < 10
    assert record(1, ok, f"max off-diagonal face {worst_face:.1e}, function {worst_func:.1e} "
                         f"over {len(face_sets)}+{len(func_sets)} sets; {dt:.1f}s (< 10s)")


def test_criterion_02_coupled_solve():
    t0 = time.time()
    rng = np.random.default_rng(2)
    worst_ne = worst_cg = worst_agree = 0.0
    for _ in range(20):
        m = int(rng.integers(1, 9))
        order = int(rng.integers(1, 4))
        d, x, ob = in_span_system(rng, m, family="symmetric_axis", order=order)
        assert d.m_faces <= 8 and d.n_funcs <= 9
        a = C.solve_coefficients(d, ob, "normal_equations")
        b = C.solve_coefficients(d, ob, "conjugate_gradient")
        nx = np.linalg.norm(x)
        worst_ne = max(worst_ne, np.linalg.norm(a - x) / nx)
        worst_cg = max(worst_cg, np.linalg.norm(b - x) / nx)
        worst_agree = max(worst_agree, np.linalg.norm(a - b) / np.linalg.norm(a))
    dt = time.time() - t0
    ok = worst_ne < 1e-6 and worst_cg < 1e-6 and worst_agree < 1e-6 and dt < 30
    assert record(2, ok, f"recovery error normal eq {worst_ne:.1e}, CG {worst_cg:.1e}, "
                         f"agreement {worst_agree:.1e}; {dt:.1f}s (< 30s)")


def test_criterion_03_factorization():
    rng = np.random.default_rng(3)
    funcs = B.build_function_bases(family="symmetric_axis", order=3)
    worst = worst_eq = 0.0
    worst_psf = np.inf
    monotone = True
    for _ in range(20):
        m = int(rng.integers(1, 9))
        beta = feasible_beta(rng, funcs)
        alpha = rng.normal(size=m)
        alpha[0] = abs(alpha[0]) + 1.0
        fz = C.factor_coefficients(np.outer(alpha, beta).ravel(), funcs, alpha[0])
        a, b = canonical(fz.alpha, fz.beta, funcs)
        worst = max(worst, np.linalg.norm(a - alpha) / np.linalg.norm(alpha),
                    np.linalg.norm(b - beta) / np.linalg.norm(beta))
        worst_eq = max(worst_eq, fz.eq_violation)
        worst_psf = min(worst_psf, float(C.psf_field(fz.beta, funcs).min()))
        for trace in fz.history:
            monotone &= all(y <= x + 1e-10 * max(1.0, abs(x)) for x, y in zip(trace, trace[1:]))
    ok = worst < 1e-4 and worst_eq < 1e-6 and worst_psf >= -1e-8 and monotone
    assert record(3, ok, f"recovery {worst:.1e} (< 1e-4), equality {worst_eq:.1e}, min PSF {worst_psf:.1e}, "
                         f"monotone={monotone}")


def test_criterion_04_direction(faces):
    t0 = time.time()
    acc, rows = run_direction_sweep(faces)
    dt = time.time() - t0
    REPORTS[4] = content_hash(rows)
    ok = len(rows) >= 48 and acc >= 0.90 and dt < 120
    assert record(4, ok, f"accuracy {acc:.3f} on {len(rows)} images (>= 0.90); {dt:.1f}s (< 120s)")


def test_criterion_05_end_to_end(faces):
    t0 = time.time()
    model = train_model(faces)
    t_train = time.time() - t0
    rate, rows = run_deblur_suite(faces, model)
    dt = time.time() - t0
    REPORTS[5] = content_hash([model.beta, model.bias, rows])
    by_kind = {}
    for r in rows:
        by_kind.setdefault(r["spec"]["kind"], []).append(r["ssim_ei"] > r["ssim_ob"])
    kinds = ", ".join(f"{k} {sum(v)}/{len(v)}" for k, v in by_kind.items())
    ok = len(rows) >= 30 and rate >= 0.8 and dt < 900
    assert record(5, ok, f"SSIM improved in {rate:.3f} of {len(rows)} instances (>= 0.80; {kinds}); "
                         f"{dt:.0f}s incl. {t_train:.0f}s training (< 900s)")


def test_criterion_06_ssim_oracle():
    rng = np.random.default_rng(6)
    a = rng.random((40, 33))
    same = compute_ssim(a, a)
    x, y = rng.random((8, 8)), rng.random((8, 8))
    mx, my = x.mean(), y.mean()
    sx2, sy2 = x.var(ddof=1), y.var(ddof=1)
    sxy = np.sum((x - mx) * (y - my)) / 63
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    ref = (2 * mx * my + c1) * (2 * sxy + c2) / ((mx * mx + my * my + c1) * (sx2 + sy2 + c2))
    err = abs(compute_ssim(x, y, window=8) - ref)
    ok = same == 1.0 and err < 1e-12
    assert record(6, ok, f"SSIM(a,a)={same!r}; single-window error {err:.1e} (< 1e-12)")


def test_criterion_07_svr(model, tmp_path):
    rng = np.random.default_rng(7)
    X = rng.normal(size=(50, 36))
    y = 0.5 * X[:, 0] + 0.01 * rng.normal(size=50)
    lin = svr.train(X, y, svr.SvrParams(epsilon=0.05))
    mae = float(np.mean(np.abs(lin.predict_many(X) - y)))

    def feasible(m):
        C_ = m.params.C
        return (np.all((0 <= m.a_plus) & (m.a_plus <= C_)) and np.all((0 <= m.a_minus) & (m.a_minus <= C_))
                and abs(m.a_plus.sum() - m.a_minus.sum()) < 1e-6 and np.all(m.kernel_weights >= 0)
                and all(b >= a - 1e-12 for a, b in zip(m.history, m.history[1:])))

    runs = [lin, model, svr.train(X[:20], np.full(20, 0.3))]
    feasible_all = all(feasible(m) for m in runs)
    lin.save(tmp_path / "lin.fdb")
    probe = rng.normal(size=(10, 36))
    exact = np.array_equal(svr.SvrModel.load(tmp_path / "lin.fdb").predict_many(probe), lin.predict_many(probe))
    ok = feasible_all and mae <= 0.1 and exact
    assert record(7, ok, f"dual feasible on {len(runs)} runs={feasible_all}; linear MAE {mae:.4f} (<= 0.1); "
                         f"round trip exact={exact}")


def test_criterion_08_biqa(train_faces):
    errs = {}
    for shape in (1.0, 2.0):
        x = gennorm.rvs(shape, size=100_000, random_state=int(shape * 10))
        errs[shape] = abs(biqa.fit_ggd_lmoments(x)[0] - shape) / shape
    corpus = list(train_faces) + S.face_corpus(8, seed=1) + S.face_corpus(8, seed=2)
    finite = all(f.shape == (36,) and np.all(np.isfinite(f)) for f in map(biqa.extract_feature, corpus))
    ok = max(errs.values()) < 0.1 and finite
    assert record(8, ok, f"GGD shape error {errs[1.0]:.3f} @1, {errs[2.0]:.3f} @2 (< 0.10); "
                         f"36 finite values on all {len(corpus)} corpus images={finite}")


def test_criterion_09_recognition(model):
    t0 = time.time()
    acc, rows = run_recognition(model)
    REPORTS[9] = content_hash(rows)
    wrong = [f"{r['truth']}->{r['predicted']} ({r['spec']['kind']})" for r in rows if r["truth"] != r["predicted"]]
    ok = len(rows) >= 50 and acc >= 0.8
    assert record(9, ok, f"accuracy {acc:.3f} on {len(rows)} OBs over 10 identities (>= 0.80); "
                         f"{time.time() - t0:.0f}s; misses: {', '.join(wrong) or 'none'}")


def test_criterion_10_determinism(faces):
    first = dict(REPORTS)
    if 4 not in first:
        first[4] = content_hash(run_direction_sweep(faces)[1])
    if 5 not in first or 9 not in first:
        m1 = train_model(faces)
        if 5 not in first:
            first[5] = content_hash([m1.beta, m1.bias, run_deblur_suite(faces, m1)[1]])
        if 9 not in first:
            first[9] = content_hash(run_recognition(m1)[1])
    m2 = train_model(faces)
    second = {
        4: content_hash(run_direction_sweep(faces)[1]),
        5: content_hash([m2.beta, m2.bias, run_deblur_suite(faces, m2)[1]]),
        9: content_hash(run_recognition(m2)[1]),
    }
    same = {k: first[k] == second[k] for k in (4, 5, 9)}
    ok = all(same.values())
    assert record(10, ok, "rerun hashes identical: " + ", ".join(f"c{k}={v}" for k, v in same.items()))
