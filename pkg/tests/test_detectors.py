import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kgnids.detectors import (DetectorError, DimensionError, MinMaxScaler, calibrate_threshold, fit, fit_da,
                              fit_ensemble, fit_gmm, load_model, model_from_json, model_to_json, save_model, score)
from kgnids.detectors.ensemble import feature_groups


def blobs(n=400, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.normal([0.0, 0.0], 0.05, size=(n, 2))
    b = rng.normal([1.0, 1.0], 0.05, size=(n, 2))
    return np.vstack([a, b])


def test_gmm_two_blobs():
    X = blobs()
    m = fit_gmm(X, n_components=2, seed=1)
    # means live in scaled space; undo the min-max scaling to compare
    means = m.means * m.scaler.scale + m.scaler.shift
    means = means[np.argsort(means[:, 0])]
    assert np.allclose(means, [[0.0, 0.0], [1.0, 1.0]], atol=0.1)
    assert m.weights.sum() == pytest.approx(1.0)
    r = m.responsibilities(X[:50])
    assert np.allclose(r.sum(axis=1), 1.0)
    far = np.array([[5.0, -5.0]])
    assert score(m, far)[0] > score(m, X).max()


def test_gmm_spherical_and_errors():
    m = fit_gmm(blobs(), 2, "spherical")
    assert np.all(m.variances == m.variances[:, :1])
    with pytest.raises(DetectorError):
        fit_gmm(blobs()[:1], 2)
    with pytest.raises(ValueError):
        fit_gmm(blobs(), 2, "full-ish")


def test_da_constant_rows():
    X = np.full((256, 5), 3.0)
    m = fit_da(X, epochs=30, seed=0)
    assert np.all(score(m, X) < 1e-3)


def test_da_errors():
    X = np.random.default_rng(0).random((64, 4))
    with pytest.raises(DetectorError):
        fit_da(X, corruption_level=1.0)
    with pytest.raises(DetectorError):
        fit_da(X, hidden_ratio=0)
    with pytest.raises(DetectorError):
        fit_da(X[:10])


def test_ensemble_max_ae_one_gives_singletons():
    X = np.random.default_rng(0).random((64, 6))
    m = fit_ensemble(X, max_ae=1, epochs=2)
    assert sorted(map(tuple, m.groups)) == [(i,) for i in range(6)]
    with pytest.raises(DetectorError):
        feature_groups(X, 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(1, 8), st.integers(0, 2**31))
def test_feature_groups_partition(d, max_ae, seed):
    rng = np.random.default_rng(seed)
    X = rng.random((40, d))
    X[:, ::2] *= 3
    groups = feature_groups(X, max_ae)
    flat = sorted(i for g in groups for i in g)
    assert flat == list(range(d))
    assert all(1 <= len(g) <= max_ae for g in groups)


@pytest.mark.parametrize("kind", ["gmm", "da", "kit"])
def test_dimension_error(kind):
    X = np.random.default_rng(0).random((64, 4))
    m = fit(kind, X, {"epochs": 2} if kind != "gmm" else None)
    with pytest.raises(DimensionError) as exc:
        score(m, np.zeros((2, 5)))
    assert exc.value.expected == 4 and exc.value.actual == 5
    assert "4" in str(exc.value) and "5" in str(exc.value)


@pytest.mark.parametrize("kind,hp", [("gmm", {"n_components": 2}), ("da", {"epochs": 3}),
                                     ("kit", {"maxAE": 2, "epochs": 3})])
def test_determinism_and_json_round_trip(kind, hp, tmp_path):
    X = np.random.default_rng(1).random((80, 5))
    a, b = fit(kind, X, hp, rng_seed=7), fit(kind, X, hp, rng_seed=7)
    assert np.array_equal(score(a, X), score(b, X))
    back = model_from_json(model_to_json(a))
    assert np.array_equal(score(back, X), score(a, X))
    th = calibrate_threshold(score(a, X), 0.05)
    save_model(a, tmp_path / "m.json", th)
    m2, th2 = load_model(tmp_path / "m.json")
    assert th2 == th and np.array_equal(score(m2, X), score(a, X))


def test_fit_rejects_unknown():
    X = np.random.default_rng(0).random((64, 3))
    with pytest.raises(DetectorError, match="unknown model kind"):
        fit("svm", X)
    with pytest.raises(DetectorError, match="hyperparameter"):
        fit("gmm", X, {"maxAE": 3})
    with pytest.raises(DetectorError, match="unsupported model format"):
        model_from_json('{"kind": "gmm"}')


@pytest.mark.parametrize("kind", ["gmm", "da"])
def test_scaling_invariance(kind):
    rng = np.random.default_rng(3)
    X = rng.random((100, 3))
    hp = {"epochs": 3} if kind == "da" else None
    s1 = score(fit(kind, X, hp), X)
    s2 = score(fit(kind, X * 1000.0 + 5.0, hp), X * 1000.0 + 5.0)
    assert np.allclose(s1, s2, rtol=1e-6, atol=1e-9)


def test_scaler_constant_column():
    X = np.array([[1.0, 5.0], [3.0, 5.0]])
    s = MinMaxScaler.fit(X)
    assert np.allclose(s.transform(X), [[0.0, 0.0], [1.0, 0.0]])
    with pytest.raises(DimensionError):
        s.transform(np.zeros((1, 3)))


def test_non_finite_training_rejected():
    X = np.random.default_rng(0).random((64, 3))
    X[0, 0] = np.nan
    with pytest.raises(DetectorError, match="non-finite"):
        fit_gmm(X)


# -- threshold ---------------------------------------------------------------

def test_threshold_one_percent_of_hundred():
    s = np.arange(1, 101, dtype=float)
    th = calibrate_threshold(s, 0.01)
    assert th.value == 99.0 and th.calibration_fpr == 0.01 and th.n_calibration == 100
    assert th.flags(s).sum() == 1


def test_threshold_zero_target():
    s = np.arange(1, 101, dtype=float)
    th = calibrate_threshold(s, 0.0)
    assert th.value > 100.0 and th.flags(s).sum() == 0
    neg = calibrate_threshold(np.array([-3.0, -2.0]), 0.0)
    assert neg.value > -2.0 and not neg.flags([-2.0]).any()
    zero = calibrate_threshold(np.zeros(4), 0.0)
    assert zero.value > 0.0


def test_threshold_errors_and_warning(caplog):
    with pytest.raises(DetectorError):
        calibrate_threshold([], 0.01)
    with pytest.raises(DetectorError):
        calibrate_threshold([1.0, np.inf], 0.01)
    with pytest.raises(DetectorError):
        calibrate_threshold([1.0], 1.0)
    with caplog.at_level(logging.WARNING):
        th = calibrate_threshold(np.arange(10.0), 0.01)
    assert th.value > 9.0 and "calibration scores" in caplog.text


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(-50, 50), min_size=1, max_size=300), st.sampled_from([0.0, 0.001, 0.01, 0.05, 0.2]))
def test_threshold_minimality(values, target):
    s = np.asarray(values, dtype=float)
    th = calibrate_threshold(s, target)
    n = s.size
    assert np.count_nonzero(s > th.value) <= target * n + 1e-9
    # any strictly smaller observed score as cut would exceed the target
    lower = s[s < th.value]
    if lower.size and n * target >= 1:
        assert np.count_nonzero(s > lower.max()) > target * n
