import numpy as np
import pytest
from scipy.ndimage import gaussian_filter
from scipy.stats import gennorm

from facedeblur import biqa
from facedeblur import synthetic as S
from facedeblur.errors import DegenerateDistributionError, DimensionError, ParameterError


@pytest.fixture(scope="module")
def face():
    return S.face_corpus(1, seed=11)[0]


def test_mscn_constant_is_zero():
    assert np.max(np.abs(biqa.mscn(np.full((20, 20), 0.3)))) < 1e-12


@pytest.mark.parametrize("a,b", [(0.5, 0.1), (2.0, -0.3), (1.3, 0.0)])
def test_mscn_affine(face, a, b):
    d = np.abs(biqa.mscn(a * face + b) - biqa.mscn(face))
    assert d.max() < 0.05 * 20 and np.median(d) < 0.05


def test_mscn_white_noise_variance(rng):
    m = biqa.mscn(rng.random((128, 128)))
    assert 0.5 <= m.var() <= 1.5
    assert abs(m.mean()) < 0.05


def test_mscn_too_small():
    with pytest.raises(DimensionError):
        biqa.mscn(np.zeros((15, 40)))


@pytest.mark.parametrize("shape,draw,lo,hi", [(2.0, "normal", 1.8, 2.2), (1.0, "laplace", 0.9, 1.1)])
def test_ggd_shape(shape, draw, lo, hi):
    rng = np.random.default_rng(7)
    x = getattr(rng, draw)(size=100_000)
    s, _ = biqa.fit_ggd_lmoments(x)
    assert lo <= s <= hi


@pytest.mark.parametrize("shape", [0.6, 1.0, 2.0, 4.0])
def test_ggd_recovery_scale(shape):
    x = gennorm.rvs(shape, scale=0.7, size=100_000, random_state=3)
    s, sc = biqa.fit_ggd_lmoments(x)
    assert abs(s - shape) / shape < 0.1
    assert abs(sc - 0.7) / 0.7 < 0.1


def test_ggd_lmoment_consistency():
    x = gennorm.rvs(1.4, scale=2.0, size=50_000, random_state=4)
    s, sc = biqa.fit_ggd_lmoments(x)
    y = gennorm.rvs(s, scale=sc, size=400_000, random_state=5)
    lx, ly = biqa.sample_lmoments(x), biqa.sample_lmoments(y)
    for k in (1, 3):
        assert abs(ly[k] - lx[k]) / abs(lx[k]) < 0.05


def test_ggd_errors():
    with pytest.raises(DegenerateDistributionError):
        biqa.fit_ggd_lmoments(np.ones(500))
    with pytest.raises(ParameterError):
        biqa.fit_ggd_lmoments(np.arange(50.0))


def test_aggd_recovers_asymmetric_scales():
    rng = np.random.default_rng(9)
    z = gennorm.rvs(1.5, size=200_000, random_state=rng)
    x = np.where(z < 0, 0.5 * z, 2.0 * z)
    shape, left, right = biqa.fit_aggd_lmoments(x)
    assert abs(shape - 1.5) / 1.5 < 0.1
    assert abs(right / left - 4.0) / 4.0 < 0.05


def test_aggd_one_sided():
    with pytest.raises(DegenerateDistributionError):
        biqa.fit_aggd_lmoments(np.abs(np.random.default_rng(0).normal(size=500)))


def test_sample_lmoments_uniform():
    # uniform(0,1): l1=1/2, l2=1/6, l3=0, l4=0
    x = np.random.default_rng(2).random(200_000)
    l = biqa.sample_lmoments(x)
    assert l == pytest.approx([0.5, 1 / 6, 0, 0], abs=3e-3)


def test_feature_contract(face):
    f = biqa.extract_feature(face)
    assert f.shape == (36,) and np.all(np.isfinite(f))
    for k in (0, 2, 6, 10, 14, 18, 20, 24, 28, 32):
        assert f[k] > 0
    assert np.array_equal(f, biqa.extract_feature(face))


def test_feature_blur_distance(face):
    a = biqa.extract_feature(face)
    b = biqa.extract_feature(gaussian_filter(face, 3.0, mode="nearest"))
    assert np.linalg.norm(a - b) > 0.01


def test_mirror_keeps_mscn_ggd(face):
    a = biqa.extract_feature(face)
    b = biqa.extract_feature(face[:, ::-1])
    assert np.allclose(a[[0, 1, 18, 19]], b[[0, 1, 18, 19]], atol=1e-6, rtol=0)


@pytest.mark.parametrize("off", [-0.1, 0.05, 0.1])
def test_offset_invariance(face, off):
    a = biqa.extract_feature(face)
    b = biqa.extract_feature(face * 0.8 + 0.1 + off)
    c = biqa.extract_feature(face * 0.8 + 0.1)
    assert np.max(np.abs(b - c)) < 0.05


def test_downsample_exact():
    x = np.arange(20.0).reshape(4, 5)
    assert np.array_equal(biqa.downsample2(x), [[3.0, 5.0], [13.0, 15.0]])


def test_feature_small_image():
    with pytest.raises(DimensionError):
        biqa.extract_feature(np.zeros((31, 64)))


def test_csv_round_trip(tmp_path, rng):
    F = rng.random((4, 36))
    y = rng.random(4) * 4 - 2
    biqa.write_feature_csv(tmp_path / "f.csv", F, y)
    G, z = biqa.read_feature_csv(tmp_path / "f.csv")
    assert np.array_equal(F, G) and np.array_equal(y, z)
    biqa.write_feature_csv(tmp_path / "g.csv", F)
    G, z = biqa.read_feature_csv(tmp_path / "g.csv")
    assert np.array_equal(F, G) and z is None
