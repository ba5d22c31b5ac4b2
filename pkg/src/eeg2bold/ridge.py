"""Ridge-regression baseline on lagged raw EEG samples.

The feature row at time t concatenates eeg[:, t - lag] over a set of
non-negative lags (default 0..200 samples in steps of 25, i.e. 0-2 s of
history at 100 Hz). Fitting centers X and Y, solves the normal equations
(X'X + lambda*I) W = X'Y with a symmetric positive-definite solve, and
recovers the intercept explicitly. The regularization strength is picked
by blocked cross-validation on the training segment only.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .checkpoint import MAGIC_RIDGE, load_arrays, save_arrays
from .errors import ConfigError, DataError, DimensionError, NumericError
from .preprocess import TimeSeries

log = logging.getLogger(__name__)

DEFAULT_LAG_TAPS = (0, 25, 50, 75, 100, 125, 150, 175, 200)
DEFAULT_LAMBDA_GRID = (1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3)


@dataclass
class RidgeModel:
    weights: np.ndarray        # [n_rois, feature_dim]
    intercepts: np.ndarray     # [n_rois]
    lam: float
    lag_taps: tuple[int, ...]
    channel_labels: list[str]
    roi_labels: list[str]


def ridge_features(eeg, lag_taps=DEFAULT_LAG_TAPS) -> tuple[np.ndarray, int]:
    """Lagged-sample design matrix.

    Returns (X [n_obs, n_channels*len(lag_taps)], first_valid_index); rows
    cover t = max(lag_taps) .. n_samples-1 so every lag is in range.
    """
    data = eeg.data if isinstance(eeg, TimeSeries) else np.asarray(eeg)
    if data.ndim != 2:
        raise DimensionError(f"expected [channels, samples], got {data.shape}")
    taps = tuple(int(l) for l in lag_taps)
    if len(taps) == 0 or any(l < 0 for l in taps):
        raise ConfigError(f"lag taps must be non-negative, got {lag_taps}")
    n_ch, n = data.shape
    max_lag = max(taps)
    if max_lag >= n:
        raise DataError(f"max lag {max_lag} exceeds segment of {n} samples")
    n_obs = n - max_lag
    X = np.empty((n_obs, n_ch * len(taps)), dtype=np.float64)
    for j, lag in enumerate(taps):
        X[:, j * n_ch:(j + 1) * n_ch] = data[:, max_lag - lag:n - lag].T
    return X, max_lag


def ridge_fit(X: np.ndarray, Y: np.ndarray, lam: float,
              lag_taps=DEFAULT_LAG_TAPS,
              channel_labels=None, roi_labels=None) -> RidgeModel:
    """Closed-form ridge on centered data; intercept recovered from the means."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise DimensionError(f"incompatible shapes X {X.shape}, Y {Y.shape}")
    if X.shape[0] == 0:
        raise DataError("ridge_fit needs at least one observation")
    if lam < 0:
        raise ConfigError(f"lambda must be >= 0, got {lam}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise DataError("ridge_fit requires finite inputs")

    x_mean = X.mean(axis=0)
    y_mean = Y.mean(axis=0)
    Xc = X - x_mean
    Yc = Y - y_mean
    gram = Xc.T @ Xc
    gram[np.diag_indices_from(gram)] += lam
    rhs = Xc.T @ Yc
    try:
        W = linalg.solve(gram, rhs, assume_a="pos")
    except linalg.LinAlgError as exc:
        cond = np.linalg.cond(gram)
        raise NumericError(
            f"singular ridge system at lambda={lam} "
            f"(condition estimate {cond:.3e})"
        ) from exc

    # one refinement step if the residual is above the guaranteed bound
    scale = max(np.abs(rhs).max(), np.finfo(np.float64).tiny)
    if np.abs(gram @ W - rhs).max() > 1e-8 * scale:
        W = W + linalg.solve(gram, rhs - gram @ W, assume_a="pos")
        resid = np.abs(gram @ W - rhs).max()
        if resid > 1e-8 * scale:
            raise NumericError(
                f"normal-equation residual {resid:.3e} exceeds 1e-8 relative "
                f"(condition estimate {np.linalg.cond(gram):.3e})"
            )

    intercepts = y_mean - x_mean @ W
    n_ch = len(channel_labels) if channel_labels else X.shape[1] // len(tuple(lag_taps))
    return RidgeModel(
        weights=W.T.copy(), intercepts=intercepts, lam=float(lam),
        lag_taps=tuple(int(l) for l in lag_taps),
        channel_labels=list(channel_labels) if channel_labels
        else [f"ch{i:02d}" for i in range(n_ch)],
        roi_labels=list(roi_labels) if roi_labels
        else [f"roi{j:02d}" for j in range(Y.shape[1])],
    )


def ridge_predict(model: RidgeModel, eeg) -> tuple[TimeSeries, int]:
    """Predicted ROI series over the lag-valid range; also returns the first
    valid sample index, so truth[first:] aligns with the prediction."""
    X, first = ridge_features(eeg, model.lag_taps)
    if X.shape[1] != model.weights.shape[1]:
        raise DimensionError(
            f"feature dim {X.shape[1]} does not match model "
            f"{model.weights.shape[1]}"
        )
    yhat = X @ model.weights.T + model.intercepts
    fs = eeg.fs if isinstance(eeg, TimeSeries) else 1.0
    return TimeSeries(yhat.T, fs, list(model.roi_labels)), first


def select_lambda(X: np.ndarray, Y: np.ndarray,
                  grid=DEFAULT_LAMBDA_GRID, n_folds: int = 5) -> tuple[float, dict]:
    """Blocked n-fold CV over a lambda grid; score is mean validation Pearson.

    Folds are contiguous blocks (time series: shuffling would leak). Returns
    the best lambda and the per-lambda score table.
    """
    from .objective import pearson_with_flag

    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    n = X.shape[0]
    if n < 2 * n_folds:
        raise DataError(f"{n} observations too few for {n_folds}-fold CV")
    edges = np.linspace(0, n, n_folds + 1, dtype=int)
    table: dict[float, float] = {}
    for lam in grid:
        scores = []
        for k in range(n_folds):
            lo, hi = edges[k], edges[k + 1]
            mask = np.ones(n, dtype=bool)
            mask[lo:hi] = False
            m = ridge_fit(X[mask], Y[mask], lam)
            yhat = X[lo:hi] @ m.weights.T + m.intercepts
            rs = [pearson_with_flag(Y[lo:hi, j], yhat[:, j])[0]
                  for j in range(Y.shape[1])]
            scores.append(float(np.mean(rs)))
        table[float(lam)] = float(np.mean(scores))
    best = max(table, key=lambda l: (table[l], -l))
    return best, table


def fit_ridge_baseline(train_eeg: TimeSeries, train_fmri: TimeSeries,
                       lag_taps=DEFAULT_LAG_TAPS,
                       grid=DEFAULT_LAMBDA_GRID) -> RidgeModel:
    """Feature construction + CV lambda selection + final fit on all of train."""
    X, first = ridge_features(train_eeg, lag_taps)
    Y = train_fmri.data[:, first:].T.astype(np.float64)
    lam, table = select_lambda(X, Y, grid=grid)
    log.info("ridge lambda CV: best %g (table %s)", lam, table)
    return ridge_fit(X, Y, lam, lag_taps=lag_taps,
                     channel_labels=train_eeg.labels,
                     roi_labels=train_fmri.labels)


def save_ridge(path, model: RidgeModel, extra_meta: dict | None = None) -> None:
    meta = {
        "format": "ridge-model",
        "lambda": model.lam,
        "lag_taps": list(model.lag_taps),
        "channel_labels": model.channel_labels,
        "roi_labels": model.roi_labels,
    }
    if extra_meta:
        meta.update(extra_meta)
    save_arrays(path, MAGIC_RIDGE,
                {"weights": model.weights, "intercepts": model.intercepts}, meta)


def load_ridge(path) -> tuple[RidgeModel, dict]:
    arrays, meta = load_arrays(path, MAGIC_RIDGE)
    for key in ("lambda", "lag_taps", "channel_labels", "roi_labels"):
        if key not in meta:
            raise DataError(f"{path}: ridge checkpoint missing {key!r}")
    model = RidgeModel(
        weights=arrays["weights"], intercepts=arrays["intercepts"],
        lam=float(meta["lambda"]), lag_taps=tuple(meta["lag_taps"]),
        channel_labels=list(meta["channel_labels"]),
        roi_labels=list(meta["roi_labels"]),
    )
    if model.weights.shape != (len(model.roi_labels),
                               len(model.channel_labels) * len(model.lag_taps)):
        raise DataError(f"{path}: weight shape {model.weights.shape} inconsistent "
                        f"with labels and taps")
    return model, meta
