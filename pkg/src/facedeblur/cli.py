"""Command-line front end.

Every command reads a JSON config file (``--config``) whose keys mirror the
long flag names (dashes or underscores); flags given on the command line
override the file.  Outputs are written atomically next to a
``manifest.json`` recording the resolved options plus SHA-256 hashes of
every input and output, so a run can be checked for reproducibility.

Exit codes: 0 success, 1 method failure (for example no usable candidate),
2 usage or I/O error.
The log level comes from ``FACEDEBLUR_LOG_LEVEL`` (default WARNING).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import bases as B
from . import pipeline as P
from .biqa import extract_feature, read_feature_csv, write_feature_csv
from .deconv import DeconvParams
from .direction import direction_label, direction_scores, DIRECTIONS
from .errors import (
    ConvergenceError,
    DegenerateDistributionError,
    DimensionError,
    EmptyCandidatesError,
    FormatError,
    IllConditionedError,
    InvalidPSFError,
    ParameterError,
)
from .imagecore import BlurSpec, blur, read_image
from .metrics import compute_ssim, psnr
from .persist import atomic_write_bytes, atomic_write_text
from .svr import SvrModel, SvrParams, train

log = logging.getLogger("facedeblur")

LOG_ENV = "FACEDEBLUR_LOG_LEVEL"
IMAGE_SUFFIXES = (".png", ".pgm", ".tif", ".tiff", ".bmp", ".jpg", ".jpeg")
FACE_BASES_FILE = "face_bases.fdb"
METHOD_FAILURES = (EmptyCandidatesError, ConvergenceError, DegenerateDistributionError,
                   IllConditionedError, InvalidPSFError)
USAGE_FAILURES = (FormatError, ParameterError, DimensionError, OSError, ValueError, KeyError)


class UsageError(Exception):
    pass


# helpers ---------------------------------------------------------------------

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def list_images(directory) -> list:
    d = Path(directory)
    if not d.is_dir():
        raise UsageError(f"{d} is not a directory")
    return sorted(p for p in d.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def image_inputs(path) -> list:
    p = Path(path)
    if p.is_dir():
        files = list_images(p)
        if not files:
            raise UsageError(f"no images in {p}")
        return files
    if not p.is_file():
        raise UsageError(f"{p} does not exist")
    return [p]


def read_images(paths) -> list:
    """Read every file, collecting per-file failures into one report."""
    out, errors = [], []
    for p in paths:
        try:
            out.append(read_image(p))
        except Exception as exc:  # noqa: BLE001 - reported per file
            errors.append(f"{p}: {exc}")
    if errors:
        raise UsageError("unreadable images:\n  " + "\n  ".join(errors))
    shapes = {im.shape for im in out}
    if len(shapes) > 1:
        report = "\n  ".join(f"{p}: {im.shape}" for p, im in zip(paths, out))
        raise UsageError("images have different sizes:\n  " + report)
    return out


def identity_dirs(root) -> list:
    """Directory-per-identity layout: ``root/<identity>/<images>``."""
    r = Path(root)
    if not r.is_dir():
        raise UsageError(f"{r} is not a directory")
    dirs = sorted(d for d in r.iterdir() if d.is_dir() and list_images(d))
    if not dirs:
        raise UsageError(f"{r} holds no identity subdirectories with images")
    return dirs


def save_png(path, image) -> None:
    buf = io.BytesIO()
    from PIL import Image as PILImage

    arr = np.round(np.clip(image, 0.0, 1.0) * 65535.0).astype(np.uint16)
    PILImage.fromarray(arr).save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())


class Manifest:
    def __init__(self, command: str, params: dict):
        self.data = {"command": command, "version": __version__, "params": params,
                     "inputs": {}, "outputs": {}}

    def input(self, path):
        self.data["inputs"][str(path)] = sha256_file(path)

    def output(self, path):
        self.data["outputs"][str(path)] = sha256_file(path)

    def write(self, out_dir) -> Path:
        path = Path(out_dir) / "manifest.json"
        atomic_write_text(path, json.dumps(self.data, indent=2, sort_keys=True) + "\n")
        return path


def _jsonable(v):
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


# configuration ---------------------------------------------------------------

def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError("config must be a JSON object")
    return {k.replace("-", "_"): v for k, v in data.items()}


def resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """Flag value if given, else config value, else default."""
    cfg = load_config(getattr(args, "config", None))
    out = {}
    for key, default in defaults.items():
        val = getattr(args, key, None)
        if val is None:
            val = cfg.get(key, default)
        out[key] = val
    unknown = set(cfg) - set(defaults)
    if unknown:
        log.warning("ignoring unknown config keys: %s", ", ".join(sorted(unknown)))
    return out


def require(opts: dict, *keys):
    missing = [k for k in keys if opts.get(k) in (None, "")]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


DECONV_KEYS = {"reg_weight": 2e-3, "deconv_iters": 100, "deconv_tol": 1e-4, "boundary": "replicate"}
PIPE_KEYS = {
    "energy_fractions": list(P.DEFAULT_FRACTIONS),
    "order": 3,
    "full_order": 6,
    "symmetric": True,
    "regroup_threshold": 0.0,
    "reconstruction": True,
    "spectrum": "centered",
}


def deblur_config(o: dict) -> P.DeblurConfig:
    dp = DeconvParams(reg_weight=float(o["reg_weight"]), max_iter=int(o["deconv_iters"]),
                      tol=float(o["deconv_tol"]), boundary=o["boundary"])
    return P.DeblurConfig(
        energy_fractions=tuple(float(f) for f in o["energy_fractions"]),
        order=int(o["order"]),
        full_order=int(o["full_order"]),
        symmetric=_bool(o["symmetric"]),
        regroup_threshold=float(o["regroup_threshold"]),
        include_reconstruction=_bool(o["reconstruction"]),
        spectrum=o["spectrum"],
        deconv=dp,
    )


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {v!r}")


def _fractions(text: str) -> list:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad fraction list {text!r}") from exc


def parse_blur_spec(text: str) -> BlurSpec:
    """``kind[:key=value,...]``, e.g. ``motion:length=15,angle=0.785398``.

    Angles accept ``pi`` expressions such as ``pi/4`` or ``3pi/4``.
    """
    kind, _, rest = text.partition(":")
    kw = {}
    for part in filter(None, rest.split(",")):
        key, eq, val = part.partition("=")
        if not eq:
            raise UsageError(f"bad blur spec field {part!r}")
        key = key.strip()
        if key == "angle":
            kw[key] = _angle(val)
        elif key == "shake_seed":
            kw[key] = int(val)
        elif key in ("sigma", "length", "snr_db", "shake_extent"):
            kw[key] = float(val)
        else:
            raise UsageError(f"unknown blur spec field {key!r}")
    return BlurSpec(kind.strip(), **kw)


def _angle(text: str) -> float:
    t = text.strip().replace(" ", "")
    m = re.fullmatch(r"(\d*\.?\d*)\*?pi(?:/(\d+\.?\d*))?", t)
    if m:
        num = float(m.group(1)) if m.group(1) else 1.0
        den = float(m.group(2)) if m.group(2) else 1.0
        return num * math.pi / den
    return float(t)


def _spec_token(spec: BlurSpec) -> str:
    if spec.kind == "gaussian":
        return f"gaussian_s{spec.sigma:g}"
    if spec.kind == "motion":
        return f"motion_l{spec.length:g}_a{direction_label(spec.angle).replace('/', 'o')}"
    if spec.kind == "combined":
        return f"combined_s{spec.sigma:g}_l{spec.length:g}_a{direction_label(spec.angle).replace('/', 'o')}"
    return f"shake_{spec.shake_seed}"


# commands --------------------------------------------------------------------

def cmd_build_bases(args) -> int:
    o = resolve(args, {"train": None, "out": None, "max_count": None, "family": "symmetric_axis",
                       "order": 3, "grid": 21})
    require(o, "train", "out")
    train_dir = Path(o["train"])
    files = sorted(p for d in _train_sources(train_dir) for p in list_images(d))
    if not files:
        raise UsageError(f"no training images under {train_dir}")
    images = read_images(files)
    out = Path(o["out"])
    faces = B.build_face_bases(images, None if o["max_count"] is None else int(o["max_count"]))
    grid = (int(o["grid"]), int(o["grid"]))
    funcs = B.build_function_bases(grid=grid, family=o["family"], order=int(o["order"]))
    out.mkdir(parents=True, exist_ok=True)
    man = Manifest("build-bases", {k: _jsonable(v) for k, v in o.items()})
    for f in files:
        man.input(f)
    fb = out / FACE_BASES_FILE
    faces.save(fb)
    fn = out / f"function_bases_{funcs.family}.fdb"
    funcs.save(fn)
    man.output(fb)
    man.output(fn)
    man.write(out)
    print(f"{len(faces)} face bases from {len(files)} images, {len(funcs)} {funcs.family} functions -> {out}")
    return 0


def _train_sources(root: Path) -> list:
    if not root.is_dir():
        raise UsageError(f"{root} is not a directory")
    subdirs = sorted(d for d in root.iterdir() if d.is_dir())
    return [root] + subdirs


def cmd_synthesize(args) -> int:
    o = resolve(args, {"input": None, "out": None, "spec": None, "seed": 0})
    require(o, "input", "out", "spec")
    specs = [s if isinstance(s, BlurSpec) else parse_blur_spec(s) for s in o["spec"]]
    files = image_inputs(o["input"])
    images = read_images(files)
    out = Path(o["out"])
    out.mkdir(parents=True, exist_ok=True)
    man = Manifest("synthesize", {"input": str(o["input"]), "seed": int(o["seed"]),
                                  "specs": [s.to_dict() for s in specs]})
    entries = []
    k = 0
    for f, img in zip(files, images):
        man.input(f)
        for spec in specs:
            seed = int(o["seed"]) + k
            k += 1
            dst = out / f"{f.stem}__{_spec_token(spec)}.png"
            save_png(dst, blur(img, spec, seed=seed))
            man.output(dst)
            entries.append({"source": str(f), "output": dst.name, "seed": seed, "spec": spec.to_dict()})
    man.data["images"] = entries
    man.write(out)
    print(f"wrote {len(entries)} observed images to {out}")
    return 0


def _load_faces(path) -> B.FaceBasisSet:
    p = Path(path)
    if p.is_dir():
        p = p / FACE_BASES_FILE
    return B.FaceBasisSet.load(p)


def cmd_train_svr(args) -> int:
    o = resolve(args, {"features": None, "sharp": None, "bases": None, "out": None, "C": 10.0,
                       "lam": 1.0, "p": 2.0, "epsilon": 0.1, "tol": 1e-3, "seed": 0,
                       "spec": None, **PIPE_KEYS, **DECONV_KEYS})
    require(o, "out")
    out = Path(o["out"])
    out.mkdir(parents=True, exist_ok=True)
    man = Manifest("train-svr", {k: _jsonable(v) for k, v in o.items()})
    if o["features"]:
        X, y = read_feature_csv(o["features"])
        if y is None:
            raise UsageError(f"{o['features']} has no score column")
        man.input(o["features"])
    else:
        require(o, "sharp", "bases")
        files = image_inputs(o["sharp"])
        sharp = read_images(files)
        faces = _load_faces(o["bases"])
        specs = [parse_blur_spec(s) for s in o["spec"]] if o["spec"] else list(P.DEFAULT_TRAINING_SPECS)
        X, y = P.training_samples(sharp, faces, specs, deblur_config(o), seed=int(o["seed"]))
        for f in files:
            man.input(f)
        csv_path = out / "training_features.csv"
        write_feature_csv(csv_path, X, y)
        man.output(csv_path)
    params = SvrParams(C=float(o["C"]), lam=float(o["lam"]), p=float(o["p"]),
                       epsilon=float(o["epsilon"]), tol=float(o["tol"]))
    model = train(X, y, params)
    mp = out / "svr_model.fdb"
    model.save(mp)
    man.output(mp)
    mae = float(np.mean(np.abs(model.predict_many(X) - y)))
    man.data["training_mae"] = mae
    man.data["samples"] = int(len(y))
    man.write(out)
    print(f"trained on {len(y)} samples, training MAE {mae:.4f} -> {mp}")
    return 0


def cmd_deblur(args) -> int:
    o = resolve(args, {"input": None, "bases": None, "model": None, "out": None,
                       "save_candidates": False, **PIPE_KEYS, **DECONV_KEYS})
    require(o, "input", "bases", "model", "out")
    cfg = deblur_config(o)
    faces = _load_faces(o["bases"])
    model = SvrModel.load(o["model"])
    out = Path(o["out"])
    out.mkdir(parents=True, exist_ok=True)
    man = Manifest("deblur", {k: _jsonable(v) for k, v in o.items()} | {"pipeline": cfg.to_dict()})
    man.input(_bases_file(o["bases"]))
    man.input(o["model"])
    failures = 0
    for f in image_inputs(o["input"]):
        ob = read_images([f])[0]
        man.input(f)
        try:
            rep = P.deblur(ob, faces, model, cfg)
        except METHOD_FAILURES as exc:
            log.error("%s: %s", f, exc)
            failures += 1
            continue
        dst = out / f.stem
        dst.mkdir(exist_ok=True)
        best = dst / "best.png"
        save_png(best, rep.best.image)
        report = dst / "report.json"
        atomic_write_text(report, rep.to_json() + "\n")
        man.output(best)
        man.output(report)
        if _bool(o["save_candidates"]):
            for k, c in enumerate(rep.all_candidates):
                cp = dst / f"candidate_{k:02d}_{c.family}_m{c.m_used}_{c.source}.png"
                save_png(cp, c.image)
                man.output(cp)
        print(f"{f.name}: best M={rep.best.m_used} ({rep.best.source}, {rep.family}), score {rep.best.score:.3f}")
    man.data["failures"] = failures
    man.write(out)
    return 1 if failures else 0


def _bases_file(path) -> Path:
    p = Path(path)
    return p / FACE_BASES_FILE if p.is_dir() else p


def cmd_recognize(args) -> int:
    o = resolve(args, {"input": None, "gallery": None, "model": None, "out": None,
                       **PIPE_KEYS, **DECONV_KEYS})
    require(o, "input", "gallery", "model", "out")
    cfg = deblur_config(o)
    model = SvrModel.load(o["model"])
    man = Manifest("recognize", {k: _jsonable(v) for k, v in o.items()} | {"pipeline": cfg.to_dict()})
    man.input(o["model"])
    galleries = []
    for d in identity_dirs(o["gallery"]):
        files = list_images(d)
        for f in files:
            man.input(f)
        galleries.append(P.IdentityGallery(d.name, read_images(files)))
    out = Path(o["out"])
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for f in image_inputs(o["input"]):
        man.input(f)
        ob = read_images([f])[0]
        who, scores, _ = P.recognize(ob, galleries, model, cfg)
        rows.append({"observed": f.name, "predicted": who, "scores": scores})
        print(f"{f.name}: {who}")
    table = out / "recognition.csv"
    atomic_write_text(table, P.score_table_csv(rows))
    man.output(table)
    man.write(out)
    return 0


def cmd_score(args) -> int:
    o = resolve(args, {"input": None, "model": None, "out": None, "features_out": None})
    require(o, "input", "model")
    model = SvrModel.load(o["model"])
    rows, feats = [], []
    failures = 0
    files = image_inputs(o["input"])
    for f in files:
        img = read_images([f])[0]
        try:
            w = extract_feature(img)
        except DegenerateDistributionError as exc:
            log.error("%s: %s", f, exc)
            rows.append((f.name, P.FAILURE_SCORE))
            failures += 1
            continue
        feats.append(w)
        rows.append((f.name, float(model.predict_many(w)[0])))
    text = _csv([("image", "score")] + [(n, repr(s)) for n, s in rows])
    _emit(o["out"], "scores.csv", text, "score", o, files, [o["model"]])
    if o["features_out"] and feats:
        write_feature_csv(o["features_out"], np.array(feats))
    return 1 if failures else 0


def cmd_estimate_direction(args) -> int:
    o = resolve(args, {"input": None, "bases": None, "out": None})
    require(o, "input")
    ref = _load_faces(o["bases"]).mean_spectrum if o["bases"] else None
    files = image_inputs(o["input"])
    rows = [("image", "direction", "radians") + tuple(f"score_{direction_label(t)}" for t in DIRECTIONS)]
    failures = 0
    for f in files:
        img = read_images([f])[0]
        s = direction_scores(img, reference=ref)
        if not np.isfinite(s).any():
            log.error("%s: no finite direction score", f)
            failures += 1
            continue
        theta = DIRECTIONS[int(np.argmax(np.where(np.isfinite(s), s, -np.inf)))]
        rows.append((f.name, direction_label(theta), repr(theta)) + tuple(repr(float(v)) for v in s))
    extra = [_bases_file(o["bases"])] if o["bases"] else []
    _emit(o["out"], "directions.csv", _csv(rows), "estimate-direction", o, files, extra)
    return 1 if failures else 0


def cmd_metrics(args) -> int:
    o = resolve(args, {"reference": None, "test": None, "window": 8, "out": None})
    require(o, "reference", "test")
    ref = read_images([Path(o["reference"])])[0]
    tests = image_inputs(o["test"])
    rows = [("image", "ssim", "psnr")]
    for f in tests:
        img = read_images([f])[0]
        if img.shape != ref.shape:
            raise UsageError(f"{f} has shape {img.shape}, reference has {ref.shape}")
        rows.append((f.name, repr(compute_ssim(ref, img, window=int(o["window"]))), repr(psnr(ref, img))))
    _emit(o["out"], "metrics.csv", _csv(rows), "metrics", o, tests, [Path(o["reference"])])
    return 0


def cmd_ingest_flat(args) -> int:
    """Copy a flat folder into the directory-per-identity layout."""
    o = resolve(args, {"input": None, "out": None, "pattern": r"^(?P<id>[^_]+)_"})
    require(o, "input", "out")
    try:
        rx = re.compile(o["pattern"])
    except re.error as exc:
        raise UsageError(f"bad pattern: {exc}") from exc
    if "id" not in rx.groupindex:
        raise UsageError("pattern needs a named group 'id'")
    files = list_images(o["input"])
    unmatched = [f.name for f in files if not rx.search(f.name)]
    if unmatched:
        raise UsageError("file names without an identity: " + ", ".join(unmatched))
    out = Path(o["out"])
    man = Manifest("ingest-flat", {k: _jsonable(v) for k, v in o.items()})
    for f in files:
        ident = rx.search(f.name).group("id")
        dst = out / ident / f.name
        dst.parent.mkdir(parents=True, exist_ok=True)
        atomic_write_bytes(dst, f.read_bytes())
        man.input(f)
        man.output(dst)
    man.write(out)
    print(f"sorted {len(files)} images into {len({rx.search(f.name).group('id') for f in files})} identities")
    return 0


def cmd_make_demo(args) -> int:
    """Small synthetic fixture: training faces plus a 2-identity gallery with one OB each."""
    from . import synthetic as S

    o = resolve(args, {"out": None, "seed": 0})
    require(o, "out")
    out = Path(o["out"])
    seed = int(o["seed"])
    man = Manifest("make-demo", {"seed": seed})
    for k, face in enumerate(S.face_corpus(40, seed=seed + 1)):
        p = out / "train" / f"face_{k:03d}.png"
        save_png(p, face)
        man.output(p)
    spec = BlurSpec("gaussian", sigma=2.0)
    truth = {}
    for ident in S.identities(2, seed=seed + 2):
        for k, img in enumerate(S.identity_images(ident, 6)):
            p = out / "gallery" / ident.label / f"{ident.label}_{k}.png"
            save_png(p, img)
            man.output(p)
        sharp = S.identity_images(ident, 1, start=50)[0]
        p = out / "observed" / f"{ident.label}_blurred.png"
        save_png(p, blur(sharp, spec, seed=seed))
        save_png(out / "sharp" / f"{ident.label}_sharp.png", sharp)
        man.output(p)
        truth[p.name] = ident.label
    man.data["truth"] = truth
    man.data["spec"] = spec.to_dict()
    man.write(out)
    print(f"demo fixture written to {out}")
    return 0


def _csv(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _emit(out, name, text, command, opts, inputs, extra_inputs):
    """Print to stdout when no output directory is given."""
    if not out:
        sys.stdout.write(text)
        return
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    man = Manifest(command, {k: _jsonable(v) for k, v in opts.items()})
    for f in list(inputs) + list(extra_inputs):
        man.input(f)
    p = d / name
    atomic_write_text(p, text)
    man.output(p)
    man.write(d)
    print(f"wrote {p}")


# parser ----------------------------------------------------------------------

def _pipeline_flags(sp):
    g = sp.add_argument_group("pipeline")
    g.add_argument("--energy-fractions", type=_fractions, help="comma-separated, e.g. 0.6,0.7,0.8")
    g.add_argument("--order", type=int, help="sine indices per axis for the symmetric families")
    g.add_argument("--full-order", type=int, help="indices per axis for the full family")
    g.add_argument("--symmetric", type=_bool, help="use direction estimation and symmetric bases")
    g.add_argument("--regroup-threshold", type=float)
    g.add_argument("--reconstruction", type=_bool, help="add the face reconstruction as a candidate")
    g.add_argument("--spectrum", choices=("centered", "singular"))
    g.add_argument("--reg-weight", type=float, help="TV weight")
    g.add_argument("--deconv-iters", type=int)
    g.add_argument("--deconv-tol", type=float)
    g.add_argument("--boundary", choices=("replicate", "circular"))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="facedeblur", description="Blind face deblurring and recognition.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.add_argument("--config", help="JSON file with option defaults")
        sp.set_defaults(func=func)
        return sp

    sp = add("build-bases", cmd_build_bases, "build face and PSF bases from training images")
    sp.add_argument("--train", help="training directory (flat or one subdirectory per identity)")
    sp.add_argument("--out")
    sp.add_argument("--max-count", type=int)
    sp.add_argument("--family", choices=B.FAMILIES)
    sp.add_argument("--order", type=int)
    sp.add_argument("--grid", type=int, help="PSF grid side (odd)")

    sp = add("synthesize", cmd_synthesize, "blur sharp images to make observed images")
    sp.add_argument("--input")
    sp.add_argument("--out")
    sp.add_argument("--spec", action="append", help="kind[:key=value,...]; repeatable")
    sp.add_argument("--seed", type=int)

    sp = add("train-svr", cmd_train_svr, "train the quality regressor")
    sp.add_argument("--features", help="labeled feature CSV (w1..w36,score)")
    sp.add_argument("--sharp", help="sharp training images for synthetic labels")
    sp.add_argument("--bases", help="face bases file or build-bases output directory")
    sp.add_argument("--spec", action="append", help="blur spec for synthetic labels; repeatable")
    sp.add_argument("--out")
    sp.add_argument("--C", type=float)
    sp.add_argument("--lam", type=float)
    sp.add_argument("--p", type=float)
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--tol", type=float)
    sp.add_argument("--seed", type=int)
    _pipeline_flags(sp)

    sp = add("deblur", cmd_deblur, "deblur observed images")
    sp.add_argument("--input", help="image or directory")
    sp.add_argument("--bases")
    sp.add_argument("--model")
    sp.add_argument("--out")
    sp.add_argument("--save-candidates", type=_bool)
    _pipeline_flags(sp)

    sp = add("recognize", cmd_recognize, "closed-set recognition against identity galleries")
    sp.add_argument("--input", help="image or directory")
    sp.add_argument("--gallery", help="directory with one subdirectory per identity")
    sp.add_argument("--model")
    sp.add_argument("--out")
    _pipeline_flags(sp)

    sp = add("score", cmd_score, "predict quality scores")
    sp.add_argument("--input")
    sp.add_argument("--model")
    sp.add_argument("--out")
    sp.add_argument("--features-out", help="also write the feature vectors as CSV")

    sp = add("estimate-direction", cmd_estimate_direction, "classify blur direction")
    sp.add_argument("--input")
    sp.add_argument("--bases", help="face bases whose mean spectrum whitens the input")
    sp.add_argument("--out")

    sp = add("metrics", cmd_metrics, "SSIM and PSNR against a reference image")
    sp.add_argument("--reference")
    sp.add_argument("--test", help="image or directory")
    sp.add_argument("--window", type=int)
    sp.add_argument("--out")

    sp = add("ingest-flat", cmd_ingest_flat, "sort a flat folder into one directory per identity")
    sp.add_argument("--input")
    sp.add_argument("--out")
    sp.add_argument("--pattern", help="regex with a named group 'id' (default: prefix before '_')")

    sp = add("make-demo", cmd_make_demo, "write a small synthetic demo fixture")
    sp.add_argument("--out")
    sp.add_argument("--seed", type=int)
    return ap


def _setup_logging():
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except METHOD_FAILURES as exc:
        log.error("%s", exc)
        return 1
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except USAGE_FAILURES as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
