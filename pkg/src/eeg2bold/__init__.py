"""eeg2bold: cross-modal regression from multi-channel EEG to regional BOLD.

A small, self-verifying numerical library: a tape-based autodiff core, a
sinusoidal feature extractor feeding a 1-D convolutional encoder/decoder,
a composite MSE + negative-correlation objective with AdamW, an EEG
preprocessing chain, a lagged ridge baseline, and a synthetic EEG/BOLD
generator with known ground truth.
"""

__version__ = "0.1.0"
