"""Training loop: sampled-window batches, composite objective, AdamW.

Normalization is owned here, not by the preprocessing step: statistics are
fit on the training segment only (after the train/test split) and stored
with the checkpoint so evaluation and prediction reproduce them exactly.

Determinism layout for a run seed s: parameter init draws from child (0),
the window sampler from child (1), and step k's dropout masks from child
(2, k). Loss curves for one (config, seed) pair are therefore bitwise
repeatable on the same build.
"""
from __future__ import annotations

import json
import sys
import time
from dataclasses import dataclass
from typing import Optional, TextIO

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .config import RunConfig, config_hash
from .datasets import Dataset, WindowPair, sample_windows, split_train_test, tile_windows
from .errors import DataError, NumericError
from .model import ModelParams, init_params, model_forward
from .objective import (EvalReport, OptimizerState, adamw_step, composite_loss,
                        corr_loss, evaluate, mse_loss)
from .preprocess import ChannelStats, zscore_apply, zscore_fit
from .rng import Rng


@dataclass
class TrainReport:
    epochs_run: int
    mse: list[float]
    corr: list[float]
    composite: list[float]
    best_epoch: int           # 1-based epoch whose composite loss was lowest
    final_eval: Optional[EvalReport]
    config_hash: str
    seed: int
    wall_time_s: float
    aborted: Optional[str] = None   # NumericError text when training stopped early

    def to_json(self) -> str:
        """Deterministic report body; wall time lives in a separate sidecar
        so identical (config, seed) runs serialize identically."""
        body = {
            "epochs_run": self.epochs_run,
            "mse": self.mse,
            "corr": self.corr,
            "composite": self.composite,
            "best_epoch": self.best_epoch,
            "final_eval": None if self.final_eval is None else json.loads(
                self.final_eval.to_json()),
            "config_hash": self.config_hash,
            "seed": self.seed,
            "aborted": self.aborted,
        }
        return json.dumps(body, sort_keys=True, indent=2) + "\n"


@dataclass
class TrainResult:
    params: ModelParams              # final parameters
    best_state: dict[str, np.ndarray]
    report: TrainReport
    eeg_stats: ChannelStats
    fmri_stats: ChannelStats


def assemble_batch(windows: list[WindowPair]) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([w.eeg for w in windows]).astype(np.float32)
    y = np.stack([w.fmri for w in windows]).astype(np.float32)
    return x, y


def normalize_split(train: Dataset, test: Dataset) -> tuple[Dataset, Dataset,
                                                            ChannelStats, ChannelStats]:
    """Z-score both splits with train-segment statistics."""
    eeg_stats = zscore_fit(train.eeg)
    fmri_stats = zscore_fit(train.fmri)

    def apply(d: Dataset) -> Dataset:
        return Dataset(eeg=zscore_apply(d.eeg, eeg_stats),
                       fmri=zscore_apply(d.fmri, fmri_stats),
                       subject_id=d.subject_id, provenance=d.provenance)
    test_z = apply(test) if test.n_samples else test
    return apply(train), test_z, eeg_stats, fmri_stats


def train_loop(train_z: Dataset, run: RunConfig, *,
               params: Optional[ModelParams] = None,
               log_stream: Optional[TextIO] = None) -> tuple[ModelParams,
                                                             dict[str, np.ndarray],
                                                             TrainReport]:
    """Run the epochs; returns (final params, best snapshot, report without eval).

    A NumericError mid-run (non-finite loss or gradient) stops training with
    the report's `aborted` field set; parameters remain at the last
    successful step because the optimizer validates before mutating.
    """
    run.validate()
    stream = sys.stderr if log_stream is None else log_stream
    root = Rng(run.seed)
    if params is None:
        params = init_params(run.model, root.split(0))
    params.set_requires_grad(True)
    sampler = root.split(1)
    named = dict(params.items())
    opt_state = OptimizerState(named)
    alpha = run.optim.alpha_corr
    batch = run.optim.batch_size

    mse_hist: list[float] = []
    corr_hist: list[float] = []
    comp_hist: list[float] = []
    best = (np.inf, 0, params.snapshot())   # (composite, epoch, state)
    aborted = None
    step = 0
    t0 = time.monotonic()
    for epoch in range(1, run.train.epochs + 1):
        windows = sample_windows(train_z, run.train.windows_per_epoch, sampler,
                                 window_len=run.model.window_len_samples)
        sums = np.zeros(3)
        n_seen = 0
        try:
            for lo in range(0, len(windows), batch):
                chunk = windows[lo:lo + batch]
                xb, yb = assemble_batch(chunk)
                tape = Tape()
                params.zero_grads()
                pred = model_forward(Tensor(xb), params, mode="train",
                                     rng=root.split(2, step), tape=tape)
                y = Tensor(yb)
                m = mse_loss(y, pred, tape)
                c = corr_loss(y, pred, tape)
                loss = ad.add(m, ad.scale(c, alpha, tape), tape)
                tape.backward(loss)
                grads = {name: t.grad for name, t in named.items()}
                adamw_step(named, grads, opt_state, run.optim)
                step += 1
                sums += len(chunk) * np.array([float(m.data), float(c.data),
                                               float(loss.data)])
                n_seen += len(chunk)
        except NumericError as exc:
            aborted = f"epoch {epoch}: {exc}"
            print(f"abort: {aborted}", file=stream)
            break
        e_mse, e_corr, e_comp = (sums / n_seen).tolist()
        mse_hist.append(e_mse)
        corr_hist.append(e_corr)
        comp_hist.append(e_comp)
        if e_comp < best[0]:
            best = (e_comp, epoch, params.snapshot())
        print(f"epoch {epoch}/{run.train.epochs} mse {e_mse:.6f} "
              f"corr {e_corr:.6f} composite {e_comp:.6f} "
              f"elapsed {time.monotonic() - t0:.1f}s", file=stream)

    report = TrainReport(
        epochs_run=len(comp_hist), mse=mse_hist, corr=corr_hist,
        composite=comp_hist, best_epoch=best[1], final_eval=None,
        config_hash=config_hash(run), seed=run.seed,
        wall_time_s=time.monotonic() - t0, aborted=aborted,
    )
    return params, best[2], report


def train_run(dataset: Dataset, run: RunConfig,
              log_stream: Optional[TextIO] = None) -> TrainResult:
    """Split, normalize, train, and evaluate the best snapshot on the test
    segment (when the split leaves one)."""
    dataset.validate_aligned()
    train_set, test_set = split_train_test(dataset, run.split.train_fraction)
    if train_set.n_samples < run.model.window_len_samples:
        raise DataError(
            f"training segment of {train_set.n_samples} samples is shorter "
            f"than one {run.model.window_len_samples}-sample window"
        )
    train_z, test_z, eeg_stats, fmri_stats = normalize_split(train_set, test_set)
    params, best_state, report = train_loop(train_z, run, log_stream=log_stream)

    if test_z.n_samples >= run.model.window_len_samples and report.aborted is None:
        best_params = ModelParams(run.model, {
            name: Tensor(arr.copy()) for name, arr in best_state.items()})
        windows, _ = tile_windows(test_z, run.model.window_len_samples)
        report.final_eval = evaluate(best_params, windows,
                                     roi_labels=test_z.fmri.labels,
                                     config_hash=report.config_hash)
    return TrainResult(params=params, best_state=best_state, report=report,
                       eeg_stats=eeg_stats, fmri_stats=fmri_stats)
