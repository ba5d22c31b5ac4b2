"""Training objective, evaluation metric, and the AdamW optimizer.

The objective is mean squared error plus alpha times the negative mean
Pearson correlation across ROI rows. Both loss terms accumulate internally
in float64 regardless of the training dtype; float32 summation over a
262k-element batch cannot hold the tolerances the unit values are pinned
to. Gradients are cast back to the input dtype on the way out.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .errors import ConfigError, DataError, DimensionError, NumericError

log = logging.getLogger(__name__)


def _pair(y, yhat) -> tuple[Tensor, Tensor]:
    y = y if isinstance(y, Tensor) else Tensor(y)
    yhat = yhat if isinstance(yhat, Tensor) else Tensor(yhat)
    if y.data.shape != yhat.data.shape:
        raise DimensionError(
            f"shape mismatch: y {y.data.shape} vs prediction {yhat.data.shape}"
        )
    return y, yhat


def mse_loss(y: Tensor, yhat: Tensor, tape: Optional[Tape] = None) -> Tensor:
    """Mean over all elements of (y - yhat)^2."""
    y, yhat = _pair(y, yhat)
    yd, pd = y.data, yhat.data
    diff = pd.astype(np.float64) - yd.astype(np.float64)
    out = Tensor(np.asarray(np.mean(diff * diff)),
                 requires_grad=ad._wants_grad(tape, y, yhat))
    if out.requires_grad:
        coeff = 2.0 / diff.size

        def backward():
            g = float(ad._grad_of(out))
            ad.accumulate(yhat, (g * coeff) * diff)
            ad.accumulate(y, (-g * coeff) * diff)
        tape.record("mse_loss", backward)
    return out


def pearson_with_flag(y, yhat) -> tuple[float, bool]:
    """Pearson r of two vectors; (0.0, True) when either vector is constant."""
    yd = np.asarray(y.data if isinstance(y, Tensor) else y, dtype=np.float64).reshape(-1)
    pd = np.asarray(yhat.data if isinstance(yhat, Tensor) else yhat,
                    dtype=np.float64).reshape(-1)
    if yd.shape != pd.shape:
        raise DimensionError(f"shape mismatch: {yd.shape} vs {pd.shape}")
    if yd.size < 2:
        raise DataError(f"pearson_r needs length >= 2, got {yd.size}")
    u = yd - yd.mean()
    v = pd - pd.mean()
    su = np.sqrt(u @ u)
    sv = np.sqrt(v @ v)
    if su == 0.0 or sv == 0.0:
        return 0.0, True
    r = float((u @ v) / (su * sv))
    return float(np.clip(r, -1.0, 1.0)), False


def pearson_r(y, yhat) -> float:
    """Pearson correlation coefficient in [-1, 1]; 0 for a constant input."""
    r, degenerate = pearson_with_flag(y, yhat)
    if degenerate:
        log.warning("pearson_r: constant input, returning 0")
    return r


def corr_loss(y: Tensor, yhat: Tensor, tape: Optional[Tape] = None) -> Tensor:
    """Mean over rows of -pearson_r(row). Rows are the ROI axis; a batch
    dimension, if present, just contributes more rows. Constant rows count
    as 0 with a logged warning."""
    y, yhat = _pair(y, yhat)
    yd, pd = y.data, yhat.data
    if yd.ndim < 2:
        raise DimensionError(f"corr_loss expects [R, L] or [B, R, L], got {yd.shape}")
    length = yd.shape[-1]
    if length < 2:
        raise DataError(f"corr_loss needs length >= 2, got {length}")
    ymat = yd.reshape(-1, length).astype(np.float64)
    pmat = pd.reshape(-1, length).astype(np.float64)
    u = ymat - ymat.mean(axis=1, keepdims=True)
    v = pmat - pmat.mean(axis=1, keepdims=True)
    su = np.sqrt((u * u).sum(axis=1))
    sv = np.sqrt((v * v).sum(axis=1))
    ok = (su > 0.0) & (sv > 0.0)
    n_bad = int((~ok).sum())
    if n_bad:
        log.warning("corr_loss: %d constant row(s) contribute r=0", n_bad)
    denom = np.where(ok, su * sv, 1.0)
    r = np.where(ok, (u * v).sum(axis=1) / denom, 0.0)
    r = np.clip(r, -1.0, 1.0)
    n_rows = ymat.shape[0]
    out = Tensor(np.asarray(-r.mean()), requires_grad=ad._wants_grad(tape, y, yhat))
    if out.requires_grad:
        def backward():
            g = float(ad._grad_of(out))
            # d(-r)/dv = -(u/(su*sv) - r*v/sv^2), zero for degenerate rows
            sv2 = np.where(ok, sv * sv, 1.0)
            dv = -(u / denom[:, None] - (r / sv2)[:, None] * v)
            dv = np.where(ok[:, None], dv, 0.0) * (g / n_rows)
            if yhat.requires_grad:
                ad.accumulate(yhat, dv.reshape(pd.shape))
            if y.requires_grad:
                su2 = np.where(ok, su * su, 1.0)
                du = -(v / denom[:, None] - (r / su2)[:, None] * u)
                du = np.where(ok[:, None], du, 0.0) * (g / n_rows)
                ad.accumulate(y, du.reshape(yd.shape))
        tape.record("corr_loss", backward)
    return out


def composite_loss(y: Tensor, yhat: Tensor, alpha: float = 0.1,
                   tape: Optional[Tape] = None) -> Tensor:
    """mse_loss + alpha * corr_loss, one graph so a single backward covers both."""
    alpha = float(alpha)
    if alpha < 0:
        raise ConfigError(f"alpha must be >= 0, got {alpha}")
    m = mse_loss(y, yhat, tape)
    if alpha == 0.0:
        return m
    c = corr_loss(y, yhat, tape)
    return ad.add(m, ad.scale(c, alpha, tape), tape)


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class OptimizerConfig:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 3e-4
    alpha_corr: float = 0.1
    batch_size: int = 32

    def validate(self) -> "OptimizerConfig":
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("betas must lie in [0, 1)")
        if self.eps <= 0:
            raise ConfigError(f"eps must be positive, got {self.eps}")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if self.alpha_corr < 0:
            raise ConfigError("alpha_corr must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        return self


class OptimizerState:
    """First/second moment arrays mirroring the parameters, plus step count."""

    def __init__(self, params: dict[str, Tensor]):
        self.m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in params.items()}
        self.t = 0


def adamw_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
               state: OptimizerState, config: OptimizerConfig) -> None:
    """One decoupled-weight-decay Adam update, in place.

    theta <- theta - lr*mhat/(sqrt(vhat)+eps) - lr*wd*theta, with bias-corrected
    moments. A non-finite gradient aborts before anything is touched.
    """
    for name in params:
        if name not in grads:
            raise DataError(f"missing gradient for parameter {name!r}")
        if grads[name].shape != params[name].data.shape:
            raise DimensionError(
                f"gradient shape {grads[name].shape} vs parameter "
                f"{params[name].data.shape} for {name!r}"
            )
        if not np.all(np.isfinite(grads[name])):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads[name].astype(p.data.dtype, copy=False)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        mhat = m / bc1
        vhat = v / bc2
        p.data = p.data - config.lr * mhat / (np.sqrt(vhat) + config.eps) \
            - (config.lr * config.weight_decay) * p.data


# ---------------------------------------------------------------------------
# evaluation


# mean r below this is indistinguishable from an untrained model
BASELINE_MEAN_R = 0.3


@dataclass
class EvalReport:
    per_roi_r: dict[str, float]
    mean_r: float
    sd_r: float
    n_test_samples: int
    config_hash: str
    degenerate_rois: list[str]
    below_baseline: bool = False

    def to_json(self) -> str:
        return json.dumps({
            "per_roi_r": self.per_roi_r,
            "mean_r": self.mean_r,
            "sd_r": self.sd_r,
            "n_test_samples": self.n_test_samples,
            "config_hash": self.config_hash,
            "degenerate_rois": self.degenerate_rois,
            "below_baseline": self.below_baseline,
        }, sort_keys=True, indent=2) + "\n"


def evaluate(params, test_windows, roi_labels: Optional[list[str]] = None,
             config_hash: str = "", batch_size: int = 8,
             return_series: bool = False):
    """Concatenate eval-mode predictions over the test windows and score
    Pearson r per ROI against the concatenated ground truth.

    With return_series the concatenated [n_rois, S] truth and prediction
    arrays come back alongside the report (for overlay plots)."""
    from .model import model_forward  # local import keeps module layering flat

    if len(test_windows) == 0:
        raise DataError("empty test set: no complete windows to evaluate")
    n_rois = params.config.n_rois
    if roi_labels is None:
        roi_labels = [f"roi{j:02d}" for j in range(n_rois)]
    if len(roi_labels) != n_rois:
        raise DataError(f"{len(roi_labels)} labels for {n_rois} ROIs")

    preds, truths = [], []
    for start in range(0, len(test_windows), batch_size):
        chunk = test_windows[start:start + batch_size]
        xb = np.stack([w.eeg for w in chunk]).astype(np.float32)
        out = model_forward(xb, params, mode="eval")
        preds.append(np.concatenate(list(out.data), axis=-1))
        truths.append(np.concatenate([w.fmri for w in chunk], axis=-1))
    pred = np.concatenate(preds, axis=-1)
    truth = np.concatenate(truths, axis=-1)

    per_roi: dict[str, float] = {}
    degenerate: list[str] = []
    for j, label in enumerate(roi_labels):
        r, bad = pearson_with_flag(truth[j], pred[j])
        per_roi[label] = r
        if bad:
            degenerate.append(label)
    values = np.array(list(per_roi.values()), dtype=np.float64)
    mean_r = float(values.mean())
    sd_r = float(values.std(ddof=1)) if values.size > 1 else 0.0
    report = EvalReport(per_roi_r=per_roi, mean_r=mean_r, sd_r=sd_r,
                        n_test_samples=int(truth.shape[-1]),
                        config_hash=config_hash, degenerate_rois=degenerate,
                        below_baseline=mean_r < BASELINE_MEAN_R)
    if return_series:
        return report, truth, pred
    return report
