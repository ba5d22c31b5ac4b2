"""Dataset directories, train/test splitting, window sampling, and the
synthetic EEG/BOLD generator used as the end-to-end oracle.

Directory format (bit-exact round trip):
  meta.json   {"version":1, "fs_hz":100.0, "eeg_channels":[...], "rois":[...],
               "n_samples":int, "encoding":"f32le"|"csv",
               "subject_id":str, "provenance":"real"|"synthetic"}
  eeg.f32 / fmri.f32   row-major [channels x n_samples] little-endian float32
  eeg.csv / fmri.csv   one row per sample, one column per channel, header row

A raw (not yet prepared) directory whose modalities have different native
rates or lengths additionally carries eeg_fs_hz / fmri_fs_hz /
eeg_n_samples / fmri_n_samples; fs_hz and n_samples then describe the EEG
stream. Prepared and synthetic directories always use the plain schema.
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import stats

from .errors import ConfigError, DataError
from .preprocess import FilterSpec, TimeSeries, apply_filter, design_butterworth
from .rng import Rng

WINDOW_LEN = 2048  # 20.48 s at 100 Hz

DEFAULT_ROI_LABELS = ("pallidum", "caudate", "putamen", "accumbens")


@dataclass
class SynthTruth:
    """Ground truth retained from synth_generate for diagnostics."""
    envelopes: np.ndarray        # [n_rois, n_samples] slow amplitude envelopes
    clean_rois: np.ndarray       # [n_rois, n_samples] HRF-convolved, standardized
    hrf: np.ndarray              # the impulse response used
    mixing: np.ndarray           # [n_channels, n_rois]
    carrier_hz: tuple[float, ...]


@dataclass
class Dataset:
    eeg: TimeSeries
    fmri: Optional[TimeSeries]
    subject_id: str = "unknown"
    provenance: str = "real"     # real | synthetic
    truth: Optional[SynthTruth] = None

    def validate_aligned(self) -> "Dataset":
        if self.fmri is None:
            raise DataError("dataset has no fMRI stream")
        if not np.isclose(self.eeg.fs, self.fmri.fs, rtol=1e-12):
            raise DataError(
                f"modal rates differ: eeg {self.eeg.fs} Hz, fmri {self.fmri.fs} Hz"
            )
        if self.eeg.n_samples != self.fmri.n_samples:
            raise DataError(
                f"modal lengths differ: eeg {self.eeg.n_samples}, "
                f"fmri {self.fmri.n_samples}"
            )
        return self

    @property
    def n_samples(self) -> int:
        return self.eeg.n_samples


@dataclass
class WindowPair:
    eeg: np.ndarray    # [channels, window]
    fmri: np.ndarray   # [n_rois, window]
    start_index: int


# ---------------------------------------------------------------------------
# directory io


def _write_stream(out: Path, stem: str, ts: TimeSeries, encoding: str) -> None:
    data32 = np.ascontiguousarray(ts.data, dtype=np.float32)
    if encoding == "f32le":
        (out / f"{stem}.f32").write_bytes(data32.astype("<f4").tobytes())
    else:
        buf = io.StringIO()
        buf.write(",".join(ts.labels) + "\n")
        np.savetxt(buf, data32.T, fmt="%.9g", delimiter=",")
        (out / f"{stem}.csv").write_text(buf.getvalue(), encoding="utf-8")


def save_dataset(d: Dataset, path, encoding: str = "f32le") -> None:
    if encoding not in ("f32le", "csv"):
        raise ConfigError(f"unknown encoding {encoding!r}")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    meta: dict = {
        "version": 1,
        "fs_hz": float(d.eeg.fs),
        "eeg_channels": list(d.eeg.labels),
        "rois": list(d.fmri.labels) if d.fmri is not None else [],
        "n_samples": int(d.eeg.n_samples),
        "encoding": encoding,
        "subject_id": d.subject_id,
        "provenance": d.provenance,
    }
    if d.fmri is not None and (
            not np.isclose(d.fmri.fs, d.eeg.fs, rtol=1e-12)
            or d.fmri.n_samples != d.eeg.n_samples):
        meta["eeg_fs_hz"] = float(d.eeg.fs)
        meta["fmri_fs_hz"] = float(d.fmri.fs)
        meta["eeg_n_samples"] = int(d.eeg.n_samples)
        meta["fmri_n_samples"] = int(d.fmri.n_samples)
    (out / "meta.json").write_text(
        json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    _write_stream(out, "eeg", d.eeg, encoding)
    if d.fmri is not None:
        _write_stream(out, "fmri", d.fmri, encoding)


def _read_stream(path: Path, stem: str, encoding: str, labels: list[str],
                 n_samples: int) -> np.ndarray:
    n_ch = len(labels)
    if encoding == "f32le":
        f = path / f"{stem}.f32"
        if not f.is_file():
            raise DataError(f"missing data file: {f}")
        raw = f.read_bytes()
        want = n_ch * n_samples * 4
        if len(raw) != want:
            raise DataError(
                f"{f}: expected {want} bytes ({n_ch} x {n_samples} float32), "
                f"got {len(raw)}"
            )
        return np.frombuffer(raw, dtype="<f4").reshape(n_ch, n_samples).astype(np.float32)
    f = path / f"{stem}.csv"
    if not f.is_file():
        raise DataError(f"missing data file: {f}")
    with open(f, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        names = header.split(",") if header else []
        if names != labels:
            raise DataError(
                f"{f}: header {names} does not match manifest labels {labels}"
            )
        try:
            arr = np.loadtxt(fh, delimiter=",", dtype=np.float64, ndmin=2)
        except ValueError as exc:
            raise DataError(f"{f}: unparseable CSV: {exc}") from exc
    if arr.shape != (n_samples, n_ch):
        raise DataError(
            f"{f}: expected {n_samples} rows x {n_ch} columns, got {arr.shape}"
        )
    return arr.T.astype(np.float32)


def load_dataset(path) -> Dataset:
    root = Path(path)
    meta_path = root / "meta.json"
    if not meta_path.is_file():
        raise DataError(f"missing meta.json in {root}")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{meta_path}: invalid JSON: {exc}") from exc
    for key in ("version", "fs_hz", "eeg_channels", "rois", "n_samples", "encoding"):
        if key not in meta:
            raise DataError(f"{meta_path}: missing key {key!r}")
    if meta["version"] != 1:
        raise DataError(f"{meta_path}: unsupported version {meta['version']}")
    encoding = meta["encoding"]
    if encoding not in ("f32le", "csv"):
        raise DataError(f"{meta_path}: unknown encoding {encoding!r}")

    eeg_fs = float(meta.get("eeg_fs_hz", meta["fs_hz"]))
    eeg_n = int(meta.get("eeg_n_samples", meta["n_samples"]))
    eeg_labels = list(meta["eeg_channels"])
    eeg_data = _read_stream(root, "eeg", encoding, eeg_labels, eeg_n)
    _require_finite(eeg_data, "eeg")
    eeg = TimeSeries(eeg_data, eeg_fs, eeg_labels)

    fmri = None
    roi_labels = list(meta["rois"])
    if roi_labels:
        fmri_fs = float(meta.get("fmri_fs_hz", meta["fs_hz"]))
        fmri_n = int(meta.get("fmri_n_samples", meta["n_samples"]))
        fmri_data = _read_stream(root, "fmri", encoding, roi_labels, fmri_n)
        _require_finite(fmri_data, "fmri")
        fmri = TimeSeries(fmri_data, fmri_fs, roi_labels)

    return Dataset(eeg=eeg, fmri=fmri, subject_id=meta.get("subject_id", root.name),
                   provenance=meta.get("provenance", "real"))


def _require_finite(arr: np.ndarray, stem: str) -> None:
    if not np.all(np.isfinite(arr)):
        ch, idx = np.argwhere(~np.isfinite(arr))[0]
        raise DataError(f"{stem}: non-finite value at channel {ch}, sample {idx}")


# ---------------------------------------------------------------------------
# splitting and windowing


def split_train_test(d: Dataset, train_fraction: float = 0.8) -> tuple[Dataset, Dataset]:
    """Contiguous split; the final (1 - train_fraction) of the recording is test."""
    if not 0.0 < train_fraction <= 1.0:
        raise ConfigError(f"train_fraction must be in (0, 1], got {train_fraction}")
    d.validate_aligned()
    n = d.n_samples
    if n < 2:
        raise DataError(f"dataset of {n} samples cannot be split")
    n_train = int(round(n * train_fraction))
    n_train = min(max(n_train, 1), n)

    def cut(lo: int, hi: int) -> Dataset:
        return Dataset(
            eeg=d.eeg.with_data(d.eeg.data[:, lo:hi].copy()),
            fmri=d.fmri.with_data(d.fmri.data[:, lo:hi].copy()),
            subject_id=d.subject_id, provenance=d.provenance,
        )
    return cut(0, n_train), cut(n_train, n)


def sample_windows(d: Dataset, n: int, rng: Rng,
                   window_len: int = WINDOW_LEN) -> list[WindowPair]:
    """n window pairs with uniformly random start indices (with replacement)."""
    d.validate_aligned()
    n_starts = d.n_samples - window_len + 1
    if n_starts < 1:
        raise DataError(
            f"segment of {d.n_samples} samples shorter than window {window_len}"
        )
    starts = rng.integers(0, n_starts, size=n)
    return [WindowPair(
        eeg=d.eeg.data[:, s:s + window_len].copy(),
        fmri=d.fmri.data[:, s:s + window_len].copy(),
        start_index=int(s),
    ) for s in starts]


def tile_windows(d: Dataset, window_len: int = WINDOW_LEN,
                 require_fmri: bool = True) -> tuple[list[WindowPair], int]:
    """Non-overlapping windows from the start; returns (windows, samples dropped)."""
    if require_fmri:
        d.validate_aligned()
    n = d.eeg.n_samples
    n_win = n // window_len
    dropped = n - n_win * window_len
    empty = np.zeros((0, window_len), dtype=d.eeg.data.dtype)
    wins = [WindowPair(
        eeg=d.eeg.data[:, i * window_len:(i + 1) * window_len].copy(),
        fmri=(d.fmri.data[:, i * window_len:(i + 1) * window_len].copy()
              if d.fmri is not None else empty),
        start_index=i * window_len,
    ) for i in range(n_win)]
    return wins, dropped


# ---------------------------------------------------------------------------
# synthetic generator


@dataclass
class SynthConfig:
    n_channels: int = 30
    n_rois: int = 4
    duration_s: float = 300.0
    fs: float = 100.0
    carrier_hz: tuple[float, ...] = (8.0, 14.0, 22.0, 32.0)
    envelope_hz: tuple[float, ...] = (0.10, 0.10, 0.10, 0.10)
    mixing_seed: int = 1234
    hrf_peak_shape: float = 6.0
    hrf_undershoot_shape: float = 16.0
    hrf_scale: float = 1.0
    hrf_undershoot_ratio: float = 1.0 / 6.0
    hrf_duration_s: float = 32.0
    eeg_noise_sd: float = 0.2
    roi_noise_sd: float = 0.1

    def validate(self) -> "SynthConfig":
        if self.n_channels < 1 or self.n_rois < 1:
            raise ConfigError("n_channels and n_rois must be positive")
        if self.fs <= 0:
            raise ConfigError(f"fs must be positive, got {self.fs}")
        if self.duration_s * self.fs < 2 * WINDOW_LEN:
            raise ConfigError(
                f"duration {self.duration_s}s at {self.fs} Hz is shorter than "
                f"two {WINDOW_LEN}-sample windows"
            )
        if len(self.carrier_hz) != self.n_rois or len(self.envelope_hz) != self.n_rois:
            raise ConfigError(
                "carrier_hz and envelope_hz need one entry per ROI"
            )
        nyq = self.fs / 2
        if any(not 0 < f < nyq for f in self.carrier_hz):
            raise ConfigError(f"carriers must lie in (0, {nyq}) Hz")
        if any(not 0 < b < nyq for b in self.envelope_hz):
            raise ConfigError(f"envelope bandwidths must lie in (0, {nyq}) Hz")
        if self.eeg_noise_sd < 0 or self.roi_noise_sd < 0:
            raise ConfigError("noise sds must be >= 0")
        if self.hrf_duration_s <= 0 or self.hrf_scale <= 0:
            raise ConfigError("HRF duration and scale must be positive")
        return self


def double_gamma_hrf(config: SynthConfig) -> np.ndarray:
    """Peak-minus-undershoot gamma density mix, unit peak, causal from t=0."""
    t = np.arange(0.0, config.hrf_duration_s, 1.0 / config.fs)
    h = stats.gamma.pdf(t, config.hrf_peak_shape, scale=config.hrf_scale) \
        - config.hrf_undershoot_ratio * stats.gamma.pdf(
            t, config.hrf_undershoot_shape, scale=config.hrf_scale)
    return h / np.abs(h).max()


def _standardize(x: np.ndarray, axis: int = -1) -> np.ndarray:
    mu = x.mean(axis=axis, keepdims=True)
    sd = x.std(axis=axis, keepdims=True)
    sd = np.where(sd > 0, sd, 1.0)
    return (x - mu) / sd


def _pink_noise(rng: Rng, n_channels: int, n: int) -> np.ndarray:
    """Unit-variance 1/f noise via spectral shaping of white draws."""
    white = rng.normal(size=(n_channels, n))
    spec = np.fft.rfft(white, axis=1)
    f = np.fft.rfftfreq(n)
    gain = np.zeros_like(f)
    gain[1:] = 1.0 / np.sqrt(f[1:])
    pink = np.fft.irfft(spec * gain, n=n, axis=1)
    return _standardize(pink)


def _slow_envelope(rng: Rng, fs: float, bandwidth_hz: float, n: int) -> np.ndarray:
    """Positive slowly-varying amplitude: lowpassed white noise through exp."""
    white = rng.normal(size=(1, n))
    sos = design_butterworth(
        FilterSpec(kind="lowpass", corners=(bandwidth_hz,), order=4), fs)
    slow = apply_filter(TimeSeries(white, fs, ["w"]), sos).data[0]
    return np.exp(0.5 * _standardize(slow[None])[0])


def synth_generate(config: SynthConfig, rng: Rng) -> Dataset:
    """EEG = mixed amplitude-modulated oscillators + pink noise; each ROI =
    unit-variance HRF-convolved envelope + white noise.

    Draw order is fixed and sd-independent: per ROI the envelope noise and
    carrier phase, then ROI white noise, then EEG pink noise; noise sds only
    scale already-drawn streams, so changing one knob never shifts another
    stream's values. The mixing matrix comes from its own seed so the
    channel geometry is stable across dataset seeds.
    """
    config.validate()
    n = int(round(config.duration_s * config.fs))
    t = np.arange(n) / config.fs

    envelopes = np.empty((config.n_rois, n))
    oscillators = np.empty((config.n_rois, n))
    for r in range(config.n_rois):
        env_rng = rng.split(0, r)
        envelopes[r] = _slow_envelope(env_rng, config.fs, config.envelope_hz[r], n)
        phase = env_rng.uniform(0.0, 2.0 * np.pi)
        oscillators[r] = envelopes[r] * np.sin(
            2.0 * np.pi * config.carrier_hz[r] * t + phase)

    roi_white = rng.split(1).normal(size=(config.n_rois, n))
    eeg_pink = _pink_noise(rng.split(2), config.n_channels, n)

    hrf = double_gamma_hrf(config)
    clean = np.empty((config.n_rois, n))
    for r in range(config.n_rois):
        clean[r] = np.convolve(envelopes[r], hrf)[:n]
    clean = _standardize(clean)
    fmri_data = clean + config.roi_noise_sd * roi_white

    mix_rng = Rng(config.mixing_seed)
    signs = np.where(mix_rng.uniform(size=(config.n_channels, config.n_rois)) < 0.5,
                     -1.0, 1.0)
    mixing = signs * mix_rng.uniform(0.5, 1.5,
                                     size=(config.n_channels, config.n_rois))
    eeg_data = _standardize(mixing @ oscillators) + config.eeg_noise_sd * eeg_pink

    eeg_labels = [f"ch{i:02d}" for i in range(config.n_channels)]
    roi_labels = (list(DEFAULT_ROI_LABELS) if config.n_rois == 4
                  else [f"roi{i:02d}" for i in range(config.n_rois)])
    truth = SynthTruth(envelopes=envelopes, clean_rois=clean, hrf=hrf,
                       mixing=mixing, carrier_hz=tuple(config.carrier_hz))
    return Dataset(
        eeg=TimeSeries(eeg_data, config.fs, eeg_labels),
        fmri=TimeSeries(fmri_data, config.fs, roi_labels),
        subject_id="synthetic", provenance="synthetic", truth=truth,
    )
