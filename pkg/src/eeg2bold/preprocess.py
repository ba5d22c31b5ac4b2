"""Signal conditioning chain: filtering, re-referencing, resampling,
lag alignment, and normalization.

Everything operates on TimeSeries ([channels, samples] plus rate and
labels) and returns new TimeSeries; nothing mutates its input. Filtering is
zero-phase by default (forward-backward biquad cascades) because the
EEG-to-BOLD lag structure is the whole point of the alignment step and
one-way IIR phase would smear it.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import signal
from scipy.interpolate import CubicSpline

from .errors import ConfigError, DataError, DimensionError, NumericError

log = logging.getLogger(__name__)


@dataclass
class TimeSeries:
    data: np.ndarray          # [channels, samples]
    fs: float
    labels: list[str]

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 2:
            raise DimensionError(
                f"TimeSeries data must be [channels, samples], got {self.data.shape}"
            )
        if self.fs <= 0:
            raise ConfigError(f"sampling rate must be positive, got {self.fs}")
        if len(self.labels) != self.data.shape[0]:
            raise DataError(
                f"{len(self.labels)} labels for {self.data.shape[0]} channels"
            )
        if not np.all(np.isfinite(self.data)):
            bad = np.argwhere(~np.isfinite(self.data))[0]
            raise DataError(
                f"non-finite sample at channel {bad[0]}, index {bad[1]}"
            )

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.fs

    def with_data(self, data: np.ndarray, fs: float | None = None) -> "TimeSeries":
        return TimeSeries(data, self.fs if fs is None else fs, list(self.labels))


@dataclass(frozen=True)
class FilterSpec:
    kind: str                     # bandpass | notch | lowpass
    corners: tuple[float, ...]    # Hz; (low, high) for bandpass, (f0,) otherwise
    order: int = 4
    q: float = 30.0               # notch only
    zero_phase: bool = True

    def validate(self, fs: float) -> "FilterSpec":
        nyq = fs / 2.0
        if self.kind not in ("bandpass", "notch", "lowpass"):
            raise ConfigError(f"unknown filter kind {self.kind!r}")
        want = 2 if self.kind == "bandpass" else 1
        if len(self.corners) != want:
            raise ConfigError(
                f"{self.kind} needs {want} corner(s), got {self.corners}"
            )
        for c in self.corners:
            if not 0.0 < c < nyq:
                raise ConfigError(
                    f"corner {c} Hz outside (0, {nyq}) for fs={fs}"
                )
        if self.kind == "bandpass" and self.corners[0] >= self.corners[1]:
            raise ConfigError(f"bandpass corners not ascending: {self.corners}")
        if self.order < 1:
            raise ConfigError(f"order must be >= 1, got {self.order}")
        if self.q <= 0:
            raise ConfigError(f"Q must be positive, got {self.q}")
        return self


def design_butterworth(spec: FilterSpec, fs: float) -> np.ndarray:
    """Second-order-section coefficients for the requested response.

    bandpass/lowpass are Butterworth of the given order; notch is the
    standard single-biquad design at the given Q.
    """
    spec.validate(fs)
    if spec.kind == "bandpass":
        sos = signal.butter(spec.order, list(spec.corners), btype="bandpass",
                            fs=fs, output="sos")
    elif spec.kind == "lowpass":
        sos = signal.butter(spec.order, spec.corners[0], btype="lowpass",
                            fs=fs, output="sos")
    else:
        b, a = signal.iirnotch(spec.corners[0], spec.q, fs=fs)
        sos = signal.tf2sos(b, a)
    for section in sos:
        poles = np.roots(section[3:])
        if np.any(np.abs(poles) >= 1.0):
            raise NumericError(
                f"unstable filter section (pole radius {np.abs(poles).max():.6f})"
            )
    return sos


def apply_filter(x: TimeSeries, sos: np.ndarray,
                 zero_phase: bool = True) -> TimeSeries:
    """Filter each channel; zero-phase runs the cascade forward and backward
    with even-reflection padding of 3x the effective filter length."""
    if zero_phase:
        padlen = 3 * (2 * sos.shape[0] + 1)
        if x.n_samples <= padlen:
            raise DataError(
                f"series of {x.n_samples} samples too short for "
                f"zero-phase padding of {padlen}"
            )
        y = signal.sosfiltfilt(sos, x.data, axis=1, padtype="even", padlen=padlen)
    else:
        y = signal.sosfilt(sos, x.data, axis=1)
    return x.with_data(y)


def rereference_average(x: TimeSeries) -> TimeSeries:
    """Subtract the instantaneous mean across channels from every channel."""
    if x.n_channels < 2:
        raise DataError("average re-reference needs at least 2 channels")
    return x.with_data(x.data - x.data.mean(axis=0, keepdims=True))


def resample(x: TimeSeries, target_fs: float, anti_alias: bool = True) -> TimeSeries:
    """Change the sampling rate; output length is round(n*target/source).

    Downsampling lowpasses at 0.45*target_fs first (order-8 Butterworth,
    zero-phase) and decimates by integer stride when the ratio is integral,
    falling back to cubic-spline evaluation otherwise. anti_alias=False
    skips the lowpass, reproducing pipelines that filter only to the target
    band before decimating. Upsampling is cubic-spline interpolation.
    """
    if target_fs <= 0:
        raise ConfigError(f"target_fs must be positive, got {target_fs}")
    if np.isclose(target_fs, x.fs, rtol=1e-12):
        return x.with_data(x.data.copy())
    n_out = int(round(x.n_samples * target_fs / x.fs))
    if n_out < 2:
        raise DataError(
            f"resampling {x.n_samples} samples {x.fs}->{target_fs} Hz leaves "
            f"{n_out} samples"
        )
    if target_fs < x.fs:
        data = x.data
        if anti_alias:
            aa = design_butterworth(
                FilterSpec(kind="lowpass", corners=(0.45 * target_fs,), order=8),
                x.fs)
            data = apply_filter(x, aa).data
        ratio = x.fs / target_fs
        if abs(ratio - round(ratio)) < 1e-9:
            y = data[:, ::int(round(ratio))][:, :n_out]
            if y.shape[1] != n_out:
                raise DataError(
                    f"decimation produced {y.shape[1]} samples, expected {n_out}"
                )
        else:
            y = _spline_at(data, x.fs, target_fs, n_out)
    else:
        y = _spline_at(x.data, x.fs, target_fs, n_out)
    return x.with_data(y, fs=target_fs)


def _spline_at(data: np.ndarray, fs: float, target_fs: float, n_out: int) -> np.ndarray:
    t_in = np.arange(data.shape[1]) / fs
    t_out = np.arange(n_out) / target_fs
    return CubicSpline(t_in, data, axis=1)(t_out)


def hrf_shift_align(eeg: TimeSeries, fmri: TimeSeries,
                    delay_s: float = 6.0) -> tuple[TimeSeries, TimeSeries]:
    """Pair EEG at time t with the BOLD response at t+delay_s.

    Drops the last delay_s*fs EEG samples and the first delay_s*fs BOLD
    samples, then truncates both to the common length.
    """
    if delay_s < 0:
        raise ConfigError(f"delay must be >= 0, got {delay_s}")
    if not np.isclose(eeg.fs, fmri.fs, rtol=1e-12):
        raise DataError(
            f"alignment needs matching rates, got {eeg.fs} vs {fmri.fs} Hz"
        )
    n = int(round(delay_s * eeg.fs))
    if n == 0:
        return eeg, fmri
    common = min(eeg.n_samples, fmri.n_samples)
    if common <= n:
        raise DataError(
            f"series of {common} samples shorter than the {n}-sample delay"
        )
    return (eeg.with_data(eeg.data[:, :common - n].copy()),
            fmri.with_data(fmri.data[:, n:common].copy()))


@dataclass
class ChannelStats:
    mean: np.ndarray   # [channels]
    sd: np.ndarray     # [channels]


def zscore_fit(train: TimeSeries) -> ChannelStats:
    """Per-channel mean and population sd; zero sd clamps to 1 with a warning."""
    mean = train.data.mean(axis=1)
    sd = train.data.std(axis=1)
    flat = sd <= 0.0
    if np.any(flat):
        names = [train.labels[i] for i in np.flatnonzero(flat)]
        log.warning("zscore_fit: constant channel(s) %s, clamping sd to 1", names)
        sd = np.where(flat, 1.0, sd)
    return ChannelStats(mean=mean, sd=sd)


def zscore_apply(x: TimeSeries, stats: ChannelStats) -> TimeSeries:
    if stats.mean.shape != (x.n_channels,) or stats.sd.shape != (x.n_channels,):
        raise DimensionError(
            f"stats for {stats.mean.shape[0]} channels applied to {x.n_channels}"
        )
    return x.with_data((x.data - stats.mean[:, None]) / stats.sd[:, None])
