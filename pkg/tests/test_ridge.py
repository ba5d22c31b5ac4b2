"""Ridge baseline: feature construction, closed-form fit, and its limits."""

import numpy as np
import pytest

from eeg2bold.errors import ConfigError, DataError, DimensionError, NumericError
from eeg2bold.objective import pearson_with_flag
from eeg2bold.preprocess import TimeSeries
from eeg2bold.ridge import (DEFAULT_LAG_TAPS, RidgeModel, fit_ridge_baseline,
                            load_ridge, ridge_features, ridge_fit,
                            ridge_predict, save_ridge, select_lambda)
from eeg2bold.rng import Rng


def ts(data, fs=100.0):
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    return TimeSeries(data, fs, [f"ch{i:02d}" for i in range(data.shape[0])])


# --- features ----------------------------------------------------------------

def test_zero_lag_features_are_the_transposed_signal():
    eeg = ts(Rng(0).normal(size=(3, 50)))
    X, first = ridge_features(eeg, lag_taps=(0,))
    assert first == 0
    np.testing.assert_array_equal(X, eeg.data.T)


def test_default_taps_give_270_features():
    eeg = ts(Rng(1).normal(size=(30, 500)))
    X, first = ridge_features(eeg)
    assert X.shape[1] == 30 * 9 == 270
    assert first == max(DEFAULT_LAG_TAPS) == 200
    assert X.shape[0] == 500 - 200


def test_lagged_columns_reference_earlier_samples():
    eeg = ts(np.arange(20.0)[None, :])
    X, first = ridge_features(eeg, lag_taps=(0, 3))
    assert first == 3
    np.testing.assert_array_equal(X[:, 0], np.arange(3.0, 20.0))   # lag 0
    np.testing.assert_array_equal(X[:, 1], np.arange(0.0, 17.0))   # lag 3


def test_lag_beyond_segment_rejected():
    eeg = ts(np.zeros((2, 100)))
    with pytest.raises(DataError):
        ridge_features(eeg, lag_taps=(0, 100))
    with pytest.raises(ConfigError):
        ridge_features(eeg, lag_taps=(-1,))


# --- fitting -----------------------------------------------------------------

def test_lambda_zero_matches_least_squares():
    rng = Rng(2)
    X = rng.normal(size=(100, 5))
    W_true = rng.normal(size=(5, 2))
    Y = X @ W_true + 0.01 * rng.normal(size=(100, 2))
    model = ridge_fit(X, Y, 0.0, lag_taps=(0,))
    Xc = X - X.mean(0)
    Yc = Y - Y.mean(0)
    resid = np.abs(Xc.T @ Xc @ model.weights.T - Xc.T @ Yc).max()
    assert resid <= 1e-10 * max(np.abs(Xc.T @ Yc).max(), 1.0)


def test_planted_weights_recovered():
    rng = Rng(3)
    X = rng.normal(size=(200, 5))
    W_true = rng.normal(size=(5, 3))
    Y = X @ W_true
    model = ridge_fit(X, Y, 1e-10, lag_taps=(0,))
    np.testing.assert_allclose(model.weights.T, W_true, atol=1e-6)
    np.testing.assert_allclose(model.intercepts, 0.0, atol=1e-6)


def test_huge_lambda_shrinks_weights_to_zero():
    rng = Rng(4)
    X = rng.normal(size=(150, 4))
    Y = rng.normal(size=(150, 2))
    model = ridge_fit(X, Y, 1e12, lag_taps=(0,))
    assert np.abs(model.weights).max() <= 1e-6


def test_weight_norm_is_monotone_in_lambda():
    rng = Rng(5)
    X = rng.normal(size=(120, 6))
    Y = rng.normal(size=(120, 2))
    norms = [np.linalg.norm(ridge_fit(X, Y, lam, lag_taps=(0,)).weights)
             for lam in (0.0, 0.1, 1.0, 10.0, 100.0)]
    for a, b in zip(norms, norms[1:]):
        assert a >= b - 1e-12


def test_solution_is_the_objective_minimizer():
    rng = Rng(6)
    X = rng.normal(size=(80, 4))
    Y = rng.normal(size=(80, 1))
    lam = 0.5
    model = ridge_fit(X, Y, lam, lag_taps=(0,))
    Xc = X - X.mean(0)
    Yc = Y - Y.mean(0)
    W = model.weights.T

    def objective(w):
        r = Xc @ w - Yc
        return float((r * r).sum() + lam * (w * w).sum())

    base = objective(W)
    for _ in range(100):
        probe = W + 1e-3 * np.where(rng.uniform(size=W.shape) < 0.5, -1.0, 1.0)
        assert objective(probe) >= base


def test_fit_is_deterministic():
    rng = Rng(7)
    X = rng.normal(size=(90, 5))
    Y = rng.normal(size=(90, 2))
    a = ridge_fit(X, Y, 1.0, lag_taps=(0,))
    b = ridge_fit(X, Y, 1.0, lag_taps=(0,))
    np.testing.assert_array_equal(a.weights, b.weights)
    np.testing.assert_array_equal(a.intercepts, b.intercepts)


def test_singular_system_reports_condition():
    X = np.zeros((50, 3))
    X[:, 0] = Rng(8).normal(size=50)
    X[:, 1] = X[:, 0]          # exact collinearity
    X[:, 2] = 2.0 * X[:, 0]
    Y = Rng(9).normal(size=(50, 1))
    with pytest.raises(NumericError) as e:
        ridge_fit(X, Y, 0.0, lag_taps=(0,))
    assert "condition" in str(e.value)


def test_fit_validates_inputs():
    with pytest.raises(DimensionError):
        ridge_fit(np.zeros((10, 2)), np.zeros((9, 1)), 1.0)
    with pytest.raises(DataError):
        ridge_fit(np.zeros((0, 2)), np.zeros((0, 1)), 1.0)
    with pytest.raises(ConfigError):
        ridge_fit(np.zeros((5, 2)), np.zeros((5, 1)), -1.0)
    bad = np.zeros((5, 2))
    bad[0, 0] = np.nan
    with pytest.raises(DataError):
        ridge_fit(bad, np.zeros((5, 1)), 1.0)


# --- prediction --------------------------------------------------------------

def test_zero_weight_model_predicts_constant_and_flags_degenerate():
    model = RidgeModel(weights=np.zeros((1, 2)), intercepts=np.asarray([3.0]),
                       lam=1.0, lag_taps=(0,), channel_labels=["a", "b"],
                       roi_labels=["roi"])
    eeg = ts(Rng(10).normal(size=(2, 40)))
    pred, first = ridge_predict(model, eeg)
    np.testing.assert_array_equal(pred.data, np.full((1, 40), 3.0))
    r, degenerate = pearson_with_flag(Rng(11).normal(size=40), pred.data[0])
    assert degenerate and r == 0.0


def test_predict_checks_feature_dimension():
    model = RidgeModel(weights=np.zeros((1, 4)), intercepts=np.zeros(1),
                       lam=1.0, lag_taps=(0,), channel_labels=["a", "b"],
                       roi_labels=["roi"])
    with pytest.raises(DimensionError):
        ridge_predict(model, ts(np.zeros((3, 20))))


def test_planted_linear_mapping_is_learned():
    rng = Rng(12)
    n = 4000
    eeg_data = rng.normal(size=(5, n))
    W = rng.normal(size=(2, 5))
    fmri_data = W @ eeg_data + 0.05 * rng.normal(size=(2, n))
    model = fit_ridge_baseline(ts(eeg_data[:, :3000]),
                               TimeSeries(fmri_data[:, :3000], 100.0,
                                          ["r0", "r1"]),
                               lag_taps=(0, 5, 10))
    pred, first = ridge_predict(model, ts(eeg_data[:, 3000:]))
    for j in range(2):
        r, _ = pearson_with_flag(fmri_data[j, 3000 + first:], pred.data[j])
        assert r >= 0.95


def test_independent_noise_targets_score_near_zero():
    worst = 0.0
    for seed in range(20):
        rng = Rng(seed, (100,))
        eeg_data = rng.normal(size=(4, 1200))
        fmri_data = rng.normal(size=(1, 1200))
        model = fit_ridge_baseline(
            ts(eeg_data[:, :900]),
            TimeSeries(fmri_data[:, :900], 100.0, ["r0"]),
            lag_taps=(0, 10, 20))
        pred, first = ridge_predict(model, ts(eeg_data[:, 900:]))
        r, _ = pearson_with_flag(fmri_data[0, 900 + first:], pred.data[0])
        worst = max(worst, abs(r))
    assert worst <= 0.2


# --- lambda selection ----------------------------------------------------------

def test_lambda_grid_prefers_regularization_on_noise():
    rng = Rng(13)
    X = rng.normal(size=(300, 40))
    Y = rng.normal(size=(300, 1))           # pure noise: big lambda should win
    lam, table = select_lambda(X, Y, grid=(1e-3, 1e3), n_folds=5)
    assert lam == 1e3
    assert set(table) == {1e-3, 1e3}


def test_lambda_cv_needs_enough_observations():
    with pytest.raises(DataError):
        select_lambda(np.zeros((8, 2)), np.zeros((8, 1)), n_folds=5)


# --- persistence ---------------------------------------------------------------

def test_ridge_save_load_round_trip(tmp_path):
    rng = Rng(14)
    X = rng.normal(size=(100, 6))
    Y = rng.normal(size=(100, 2))
    model = ridge_fit(X, Y, 2.5, lag_taps=(0, 3),
                      channel_labels=["a", "b", "c"], roi_labels=["x", "y"])
    save_ridge(tmp_path / "ridge.bin", model, extra_meta={"note": "fixture"})
    back, meta = load_ridge(tmp_path / "ridge.bin")
    np.testing.assert_array_equal(back.weights, model.weights)
    np.testing.assert_array_equal(back.intercepts, model.intercepts)
    assert back.lam == 2.5
    assert back.lag_taps == (0, 3)
    assert back.channel_labels == ["a", "b", "c"]
    assert meta["note"] == "fixture"


def test_ridge_load_rejects_inconsistent_manifest(tmp_path):
    model = RidgeModel(weights=np.zeros((2, 4)), intercepts=np.zeros(2),
                       lam=1.0, lag_taps=(0, 1), channel_labels=["a", "b"],
                       roi_labels=["x", "y"])
    save_ridge(tmp_path / "ridge.bin", model)
    import json

    from eeg2bold.checkpoint import load_arrays, save_arrays, MAGIC_RIDGE
    arrays, meta = load_arrays(tmp_path / "ridge.bin", MAGIC_RIDGE)
    meta["lag_taps"] = [0, 1, 2]          # now inconsistent with weight shape
    save_arrays(tmp_path / "bad.bin", MAGIC_RIDGE, arrays, meta)
    with pytest.raises(DataError):
        load_ridge(tmp_path / "bad.bin")
