import math

import numpy as np
import pytest

from facedeblur import direction as D
from facedeblur import synthetic as S
from facedeblur.errors import DegenerateDistributionError, DimensionError, ParameterError
from facedeblur.imagecore import BlurSpec, blur


def _moments(k):
    r, c = np.mgrid[:k.shape[0], :k.shape[1]]
    mr, mc = (k * r).sum(), (k * c).sum()
    return (k * (c - mc) ** 2).sum(), (k * (r - mr) ** 2).sum()


def test_isotropic_probe_rotation_invariant():
    a = D.probe(D.ProbeKernel(3.0, 0.0, 1.0), (21, 21))
    for th in (0.3, math.pi / 4, 2.0):
        assert np.max(np.abs(D.probe(D.ProbeKernel(3.0, th, 1.0), (21, 21)) - a)) < 1e-4


def test_elongated_along_x():
    k = D.probe(D.ProbeKernel(5.0, 0.0, 4.0), (31, 31))
    mx, my = _moments(k)
    assert mx >= 4 * my
    assert abs(k.sum() - 1) < 1e-12


def test_pi_periodic():
    for th in (0.0, 0.4, math.pi / 4):
        a = D.probe(D.ProbeKernel(4.0, th), (21, 21))
        b = D.probe(D.ProbeKernel(4.0, th + math.pi), (21, 21))
        assert np.max(np.abs(a - b)) < 1e-12


def test_probe_errors():
    with pytest.raises(DimensionError):
        D.probe(D.ProbeKernel(2.0), (20, 21))
    with pytest.raises(ParameterError):
        D.ProbeKernel(2.0, gamma=0.5)
    with pytest.raises(ParameterError):
        D.ProbeKernel(0.0)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_horizontal_motion(seed, faces):
    img = S.face_corpus(1, seed=seed + 40)[0]
    ob = blur(img, BlurSpec("motion", length=9, angle=0.0, snr_db=math.inf))
    assert D.estimate_direction(ob, reference=faces.mean_spectrum) == 0.0


@pytest.mark.parametrize("angle", D.DIRECTIONS)
def test_long_motion_all_directions(angle, faces):
    img = S.face_corpus(1, seed=41)[0]
    ob = blur(img, BlurSpec("motion", length=15, angle=angle), seed=3)
    assert D.estimate_direction(ob, reference=faces.mean_spectrum) == angle


def test_isotropic_blur_picks_argmax(faces):
    img = S.face_corpus(1, seed=42)[0]
    ob = blur(img, BlurSpec("gaussian", sigma=3), seed=0)
    s = D.direction_scores(ob, reference=faces.mean_spectrum)
    assert np.all(np.isfinite(s)) and s.shape == (4,)
    assert D.estimate_direction(ob, reference=faces.mean_spectrum) == D.DIRECTIONS[int(np.argmax(s))]


def test_transpose_swaps_axis_scores(rng):
    img = S.textured_image(seed=1)
    ob = blur(img, BlurSpec("motion", length=7, angle=0.0, snr_db=math.inf))
    a = D.direction_scores(ob)
    b = D.direction_scores(ob.T)
    assert a[0] == pytest.approx(b[2], rel=1e-6)
    assert a[2] == pytest.approx(b[0], rel=1e-6)
    assert a[1] == pytest.approx(b[1], rel=1e-6)
    assert a[3] == pytest.approx(b[3], rel=1e-6)


def test_flat_image_degenerate():
    with pytest.raises(DegenerateDistributionError):
        D.estimate_direction(np.full((32, 32), 0.5))


def test_reference_shape_checked(faces):
    with pytest.raises(DimensionError):
        D.direction_scores(np.zeros((32, 32)) + np.eye(32), reference=faces.mean_spectrum)


def test_deterministic(faces):
    img = S.face_corpus(1, seed=43)[0]
    ob = blur(img, BlurSpec("combined", sigma=1, length=9, angle=math.pi / 4), seed=5)
    assert np.array_equal(D.direction_scores(ob, reference=faces.mean_spectrum),
                          D.direction_scores(ob, reference=faces.mean_spectrum))


def test_labels():
    assert [D.direction_label(t) for t in D.DIRECTIONS] == ["0", "pi/4", "pi/2", "3pi/4"]
