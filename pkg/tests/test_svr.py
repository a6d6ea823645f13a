import math

import numpy as np
import pytest

from facedeblur import svr
from facedeblur.errors import ConvergenceError, DimensionError, ParameterError


def _linear_data(n=50, seed=0, noise=0.01):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 36))
    y = 0.5 * X[:, 0] + noise * rng.normal(size=n)
    return X, y


@pytest.fixture(scope="module")
def linear_model():
    X, y = _linear_data()
    return X, y, svr.train(X, y, svr.SvrParams(epsilon=0.05))


def _check_dual(model):
    C = model.params.C
    ap, am = model.a_plus, model.a_minus
    assert np.all(ap >= 0) and np.all(am >= 0)
    assert np.all(ap <= C) and np.all(am <= C)
    assert abs(ap.sum() - am.sum()) < 1e-6
    assert np.all(model.kernel_weights >= 0)
    p, q = model.params.p, model.params.q
    assert abs(1 / p + 1 / q - 1) < 1e-15


def test_bank_layout():
    b = svr.DEFAULT_BANK
    assert len(b) == 15
    assert {r for r, _ in b.definitions} == {(0, 18), (18, 36), (0, 36)}
    assert sorted({s for _, s in b.definitions}) == [0.25, 0.5, 1.0, 2.0, 4.0]


def test_kernel_values(rng):
    w = rng.random(36)
    for k in range(1, 16):
        assert svr.kernel_eval(svr.DEFAULT_BANK, k, w, w) == 1.0
    v = w.copy()
    v[5] += 1.0
    # bandwidth 1 over range 1-18 is the third entry
    assert svr.DEFAULT_BANK.definitions[2] == ((0, 18), 1.0)
    assert abs(svr.kernel_eval(svr.DEFAULT_BANK, 3, w, v) - math.exp(-1)) < 1e-12
    u = w.copy()
    u[18:] = rng.random(18)
    for k in range(1, 6):
        assert svr.kernel_eval(svr.DEFAULT_BANK, k, w, u) == 1.0
    with pytest.raises(ParameterError):
        svr.kernel_eval(svr.DEFAULT_BANK, 16, w, w)


def test_kernel_symmetric(rng):
    a, b = rng.random(36), rng.random(36)
    for k in range(1, 16):
        x = svr.kernel_eval(svr.DEFAULT_BANK, k, a, b)
        assert x == svr.kernel_eval(svr.DEFAULT_BANK, k, b, a)
        assert 0 < x <= 1


def test_gram_psd(rng):
    X = rng.normal(size=(40, 36))
    for k in range(15):
        G = svr.DEFAULT_BANK.gram(k, X)
        assert np.array_equal(G, G.T)
        assert np.linalg.eigvalsh(G).min() >= -1e-8


def test_constant_target(rng):
    X = rng.normal(size=(20, 36))
    m = svr.train(X, np.full(20, 0.7))
    assert np.all(np.abs(m.predict_many(X) - 0.7) <= m.params.epsilon + 1e-6)
    assert np.max(np.abs(m.beta)) < 1e-9


def test_linear_mae(linear_model):
    X, y, m = linear_model
    assert np.mean(np.abs(m.predict_many(X) - y)) <= 0.1
    _check_dual(m)


def test_monotone_in_first_component(linear_model):
    X, _, m = linear_model
    probes = np.tile(X.mean(axis=0), (20, 1))
    probes[:, 0] = np.linspace(-1.0, 1.0, 20)
    p = m.predict_many(probes)
    assert np.all(np.diff(p) > 0)


def test_dual_history_monotone(linear_model):
    h = linear_model[2].history
    assert len(h) >= 2 and h[0] == 0.0
    assert all(b >= a - 1e-12 for a, b in zip(h, h[1:]))


def test_feasible_at_every_iterate(monkeypatch):
    X, y = _linear_data(n=25, seed=4)
    seen = []
    orig = svr._Dual.step

    def step(self, i, j):
        t = orig(self, i, j)
        seen.append((np.max(np.abs(self.beta)), abs(self.beta.sum())))
        return t

    monkeypatch.setattr(svr._Dual, "step", step)
    params = svr.SvrParams(C=0.5, epsilon=0.05)
    svr.train(X, y, params)
    assert seen
    assert all(mx <= params.C and s < 1e-9 for mx, s in seen)


def test_kkt_at_output(linear_model):
    X, y, m = linear_model
    # maximal violating pair of the returned solution stays below tol
    Z = m.features
    grams = np.stack([m.bank.gram(k, Z) for k in range(15)])
    d = svr._Dual(grams, y, m.params)
    d.beta = m.beta.copy()
    d.g = grams @ d.beta
    up, down, _ = d.directional()
    assert up.max() + down.max() < 10 * m.params.tol


def test_duplication_invariance(rng):
    X, y = _linear_data(n=20, seed=3)
    probe = rng.normal(size=(5, 36))
    a = svr.train(X, y, svr.SvrParams(tol=1e-6, standardize=False))
    b = svr.train(np.vstack([X, X]), np.concatenate([y, y]),
                  svr.SvrParams(C=5.0, lam=2.0, tol=1e-6, standardize=False))
    assert np.max(np.abs(a.predict_many(probe) - b.predict_many(probe))) < 1e-3


def test_single_support_closed_form(rng):
    X = rng.normal(size=(3, 36))
    w = rng.normal(size=36)
    d = rng.random(15)
    m = svr.SvrModel(beta=np.array([0.0, 0.8, 0.0]), bias=0.3, kernel_weights=d,
                     params=svr.SvrParams(), features=X, offset=np.zeros(36), scale=np.ones(36))
    want = 0.3 + sum(d[k] * 0.8 * svr.kernel_eval(svr.DEFAULT_BANK, k + 1, X[1], w) for k in range(15))
    assert abs(svr.predict(m, w) - want) < 1e-10


def test_round_trip(tmp_path, linear_model):
    X, _, m = linear_model
    m.save(tmp_path / "m.fdb")
    r = svr.SvrModel.load(tmp_path / "m.fdb")
    assert np.array_equal(m.predict_many(X), r.predict_many(X))
    assert r.params == m.params


def test_errors(rng):
    X = rng.normal(size=(5, 36))
    with pytest.raises(DimensionError):
        svr.train(X, np.zeros(4))
    with pytest.raises(ParameterError):
        svr.train(X[:1], np.zeros(1))
    with pytest.raises(ParameterError):
        svr.SvrParams(p=1.0)
    with pytest.raises(ConvergenceError) as ei:
        svr.train(*_linear_data(), svr.SvrParams(max_iter=2, tol=1e-9))
    assert ei.value.best is not None


def test_predict_wrong_length(linear_model):
    with pytest.raises(DimensionError):
        linear_model[2].predict_many(np.zeros((1, 35)))
