"""Why a linear readout is not enough: ridge baseline vs the trained model.

The synthetic BOLD signal follows the *amplitude envelope* of band-limited
EEG rhythms. Envelope extraction is a nonlinear operation, so a linear map
from lagged EEG samples has almost nothing to work with, while the
sine/conv model can demodulate. Same data, same split, same metric.

Run from the repository root:  python3 demos/05_ridge_vs_model.py
"""
import io

import numpy as np

from eeg2bold.config import RunConfig
from eeg2bold.datasets import Dataset, split_train_test, synth_generate
from eeg2bold.model import ModelConfig
from eeg2bold.objective import pearson_r
from eeg2bold.preprocess import hrf_shift_align
from eeg2bold.ridge import fit_ridge_baseline, ridge_predict
from eeg2bold.rng import Rng
from eeg2bold.training import normalize_split, train_run

run = RunConfig()
run.synth.n_channels = 8
run.synth.n_rois = 2
run.synth.carrier_hz = (10.0, 22.0)
run.synth.envelope_hz = (0.35, 0.3)
run.synth.duration_s = 300.0
run.synth.eeg_noise_sd = 0.05
run.model = ModelConfig(n_eeg_channels=8, n_rois=2, siren_hidden_width=16,
                        siren_hidden_layers=1, encoder_blocks=3,
                        channel_widths=(16, 24, 32), kernel_size=5,
                        dropout_rate=0.1, window_len_samples=512)
run.train.epochs = 300
run.train.windows_per_epoch = 16
run.optim.batch_size = 16

data = synth_generate(run.synth, Rng(run.seed))
eeg, fmri = hrf_shift_align(data.eeg, data.fmri, run.prep.hrf_delay_s)
dataset = Dataset(eeg=eeg, fmri=fmri, provenance="synthetic")

# Ridge: lagged EEG samples -> BOLD, closed form, cross-validated lambda.
train_set, test_set = split_train_test(dataset, run.split.train_fraction)
train_z, test_z, _, _ = normalize_split(train_set, test_set)
ridge = fit_ridge_baseline(train_z.eeg, train_z.fmri)
pred, first = ridge_predict(ridge, test_z.eeg)
ridge_r = [pearson_r(test_z.fmri.data[i, first:], pred.data[i])
           for i in range(pred.data.shape[0])]
print(f"ridge (lambda {ridge.lam:g}): per-ROI r = "
      f"{', '.join(f'{r:+.3f}' for r in ridge_r)}")

# Model: same recording, same split, ~30 s of training.
print("training the model (quiet)...")
result = train_run(dataset, run, log_stream=io.StringIO())
model_eval = result.report.final_eval
print(f"model: per-ROI r = "
      f"{', '.join(f'{r:+.3f}' for r in model_eval.per_roi_r.values())}")
print()
print(f"mean held-out r: ridge {np.mean(ridge_r):+.3f} "
      f"vs model {model_eval.mean_r:+.3f}")
