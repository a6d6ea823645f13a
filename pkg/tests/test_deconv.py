import math

import numpy as np
import pytest

from facedeblur import synthetic as S
from facedeblur.deconv import DeconvParams, tv_deconvolve
from facedeblur.errors import InvalidPSFError, ParameterError
from facedeblur.imagecore import BlurSpec, blur, make_kernel
from facedeblur.metrics import compute_ssim


def test_identity_psf_small_weight():
    img = S.face_corpus(1, seed=3)[0]
    out = tv_deconvolve(img, np.ones((1, 1)), DeconvParams(reg_weight=1e-6))
    assert np.max(np.abs(out - img)) < 1e-3


@pytest.mark.parametrize("boundary", ["circular", "replicate"])
def test_improves_gaussian_blur(boundary):
    sharp = S.face_corpus(1, seed=3)[0]
    ob = blur(sharp, BlurSpec("gaussian", sigma=2, snr_db=math.inf))
    out = tv_deconvolve(ob, make_kernel(BlurSpec("gaussian", sigma=2)), DeconvParams(boundary=boundary))
    assert compute_ssim(out, sharp) > compute_ssim(ob, sharp)


def test_objective_monotone():
    sharp = S.textured_image(seed=2)
    ob = blur(sharp, BlurSpec("motion", length=9, angle=math.pi / 4), seed=1)
    res = tv_deconvolve(ob, make_kernel(BlurSpec("motion", length=9, angle=math.pi / 4)), full_output=True)
    h = res.objective
    assert len(h) == res.iterations >= 1
    assert all(b <= a + 1e-10 * abs(a) for a, b in zip(h, h[1:]))


def test_constant_fixed_point():
    ob = np.full((40, 40), 0.42)
    out = tv_deconvolve(ob, make_kernel(BlurSpec("gaussian", sigma=2)))
    assert np.max(np.abs(out - 0.42)) < 1e-6


def test_range_and_determinism(rng):
    ob = rng.random((32, 32)) * 1.4 - 0.2
    k = make_kernel(BlurSpec("gaussian", sigma=1))
    a = tv_deconvolve(ob, k)
    assert a.min() >= 0 and a.max() <= 1
    assert np.array_equal(a, tv_deconvolve(ob, k))


def test_invalid_inputs():
    with pytest.raises(InvalidPSFError):
        tv_deconvolve(np.zeros((8, 8)), np.ones((3, 3)))
    for kw in ({"reg_weight": 0}, {"max_iter": 0}, {"tol": 0}, {"boundary": "mirror"}, {"penalty": -1}):
        with pytest.raises(ParameterError):
            DeconvParams(**kw)
