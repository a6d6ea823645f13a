"""Procedural face-like test images.

Faces are drawn from soft-edged ellipses (head, hair, eyes, brows, nose,
mouth) plus an identity-specific skin texture.  An identity fixes the face
geometry and texture; each rendered image of that identity then varies
illumination, a sub-pixel shift and the expression slightly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

DEFAULT_SHAPE = (64, 64)
SUPERSAMPLE = 4


@dataclass(frozen=True)
class Identity:
    label: str
    seed: int
    head_rx: float
    head_ry: float
    skin: float
    hair: float
    hairline: float
    bg: float
    eye_dx: float
    eye_y: float
    eye_r: float
    iris: float
    brow_dy: float
    brow_tilt: float
    brow_w: float
    nose_len: float
    nose_w: float
    mouth_y: float
    mouth_w: float
    lip: float
    texture_amp: float

    @classmethod
    def random(cls, seed: int, label: str | None = None) -> "Identity":
        rng = np.random.default_rng(seed)
        u = rng.uniform
        return cls(
            label=label if label is not None else f"id{seed:03d}",
            seed=int(seed),
            head_rx=u(0.58, 0.72),
            head_ry=u(0.78, 0.90),
            skin=u(0.55, 0.80),
            hair=u(0.08, 0.35),
            hairline=u(-0.62, -0.42),
            bg=u(0.15, 0.40),
            eye_dx=u(0.22, 0.31),
            eye_y=u(-0.22, -0.08),
            eye_r=u(0.07, 0.10),
            iris=u(0.08, 0.30),
            brow_dy=u(0.13, 0.19),
            brow_tilt=u(-0.25, 0.25),
            brow_w=u(0.12, 0.18),
            nose_len=u(0.18, 0.30),
            nose_w=u(0.05, 0.09),
            mouth_y=u(0.38, 0.52),
            mouth_w=u(0.20, 0.32),
            lip=u(0.25, 0.45),
            texture_amp=u(0.03, 0.06),
        )


def _ellipse(x, y, cx, cy, rx, ry, angle=0.0):
    """Hard ellipse mask; anti-aliasing comes from supersampling."""
    c, s = np.cos(angle), np.sin(angle)
    xr = c * (x - cx) + s * (y - cy)
    yr = -s * (x - cx) + c * (y - cy)
    return ((xr / rx) ** 2 + (yr / ry) ** 2 <= 1.0).astype(np.float64)


def _texture(identity: Identity, shape) -> np.ndarray:
    rng = np.random.default_rng(10_000 + identity.seed)
    noise = rng.normal(size=shape)
    fine = gaussian_filter(noise, 0.8, mode="wrap")
    coarse = gaussian_filter(noise, 2.5, mode="wrap")
    t = fine / fine.std() + 0.7 * coarse / coarse.std()
    return t / t.std()


def render_face(
    identity: Identity,
    shape=DEFAULT_SHAPE,
    variation_seed: int | None = None,
    variation: float = 1.0,
) -> np.ndarray:
    """Render one image of ``identity``; ``variation_seed=None`` gives the canonical pose."""
    h, w = shape
    if variation_seed is None:
        light_g, light_phi, dx, dy, smile, gain = 0.0, 0.0, 0.0, 0.0, 0.0, 1.0
    else:
        rng = np.random.default_rng((identity.seed, variation_seed))
        light_g = variation * rng.uniform(0.0, 0.15)
        light_phi = rng.uniform(0, 2 * np.pi)
        dx, dy = variation * rng.uniform(-0.03, 0.03, size=2)
        smile = variation * rng.uniform(-0.04, 0.04)
        gain = 1.0 + variation * rng.uniform(-0.05, 0.05)

    ss = SUPERSAMPLE
    ys = (np.arange(h * ss) + 0.5) / (h * ss) * 2.0 - 1.0
    xs = (np.arange(w * ss) + 0.5) / (w * ss) * 2.0 - 1.0
    x, y = np.meshgrid(xs - dx, ys - dy)

    img = identity.bg + 0.08 * y
    head = _ellipse(x, y, 0.0, 0.05, identity.head_rx, identity.head_ry)
    skin = identity.skin * (1.0 - 0.12 * (x / identity.head_rx) ** 2)
    tex = np.kron(_texture(identity, shape), np.ones((ss, ss)))
    skin = skin + identity.texture_amp * tex
    img = img * (1 - head) + skin * head

    hair_region = _ellipse(x, y, 0.0, -0.02, identity.head_rx * 1.07, identity.head_ry * 1.04)
    above = (y - identity.hairline + 0.15 * x ** 2 <= 0).astype(np.float64)
    hair = hair_region * above
    img = img * (1 - hair) + (identity.hair + 0.5 * identity.texture_amp * tex) * hair

    for side in (-1.0, 1.0):
        ex = side * identity.eye_dx
        white = _ellipse(x, y, ex, identity.eye_y, identity.eye_r * 1.6, identity.eye_r)
        img = img * (1 - white) + 0.88 * white
        iris = _ellipse(x, y, ex, identity.eye_y, identity.eye_r * 0.75, identity.eye_r * 0.75)
        img = img * (1 - iris) + identity.iris * iris
        pupil = _ellipse(x, y, ex, identity.eye_y, identity.eye_r * 0.3, identity.eye_r * 0.3)
        img = img * (1 - pupil) + 0.03 * pupil
        brow = _ellipse(x, y, ex, identity.eye_y - identity.brow_dy, identity.brow_w, 0.035, angle=side * identity.brow_tilt)
        img = img * (1 - 0.8 * brow) + identity.hair * 0.8 * brow

    nose_top = identity.eye_y + 0.05
    ridge = _ellipse(x, y, 0.02, nose_top + identity.nose_len / 2, identity.nose_w * 0.35,
                          identity.nose_len / 2)
    img = img - 0.10 * ridge
    for side in (-1.0, 1.0):
        nostril = _ellipse(x, y, side * identity.nose_w, nose_top + identity.nose_len, 0.035, 0.022)
        img = img * (1 - 0.7 * nostril) + 0.15 * 0.7 * nostril

    mouth_curve = identity.mouth_y - (smile / identity.mouth_w ** 2) * (identity.mouth_w ** 2 - x ** 2).clip(0)
    lips = _ellipse(x, y - (mouth_curve - identity.mouth_y), 0.0, identity.mouth_y, identity.mouth_w,
                         0.045)
    img = img * (1 - lips) + identity.lip * lips
    gap = _ellipse(x, y - (mouth_curve - identity.mouth_y), 0.0, identity.mouth_y,
                        identity.mouth_w * 0.9, 0.01)
    img = img * (1 - 0.8 * gap) + 0.08 * 0.8 * gap

    light = 1.0 + light_g * (x * np.cos(light_phi) + y * np.sin(light_phi))
    img = np.clip(gain * img * light, 0.0, 1.0)
    return img.reshape(h, ss, w, ss).mean(axis=(1, 3))


def identities(count: int, seed: int = 0) -> list:
    base = 1 + 1000 * seed
    return [Identity.random(base + k, label=f"id{k:03d}") for k in range(count)]


def face_corpus(count: int, shape=DEFAULT_SHAPE, seed: int = 0, variation: float = 1.0) -> list:
    """``count`` faces of distinct identities, one varied image each."""
    return [render_face(ident, shape, variation_seed=0, variation=variation)
            for ident in identities(count, seed)]


def identity_images(identity: Identity, count: int, shape=DEFAULT_SHAPE, start: int = 0,
                    variation: float = 1.0) -> list:
    return [render_face(identity, shape, variation_seed=start + k, variation=variation) for k in range(count)]


def textured_image(shape=(64, 64), seed: int = 0) -> np.ndarray:
    """Non-face test texture with strong local contrast, values in [0, 1]."""
    rng = np.random.default_rng(seed)
    h, w = shape
    y, x = np.mgrid[0:h, 0:w].astype(float)
    img = 0.5 + 0.2 * np.sin(2 * np.pi * x / 9.0) * np.cos(2 * np.pi * y / 13.0)
    img += 0.15 * np.sign(np.sin(2 * np.pi * (x + 0.5 * y) / 16.0))
    img += 0.05 * gaussian_filter(rng.normal(size=shape), 1.0)
    return np.clip(img, 0.0, 1.0)
