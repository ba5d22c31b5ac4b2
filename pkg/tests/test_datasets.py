"""Dataset directory format, splitting, windowing, and the synthetic generator."""

import json

import numpy as np
import pytest

from eeg2bold.datasets import (DEFAULT_ROI_LABELS, WINDOW_LEN, Dataset,
                               SynthConfig, load_dataset, sample_windows,
                               save_dataset, split_train_test, synth_generate,
                               tile_windows)
from eeg2bold.errors import ConfigError, DataError
from eeg2bold.preprocess import TimeSeries
from eeg2bold.rng import Rng


def make_dataset(n=5000, n_ch=3, n_rois=2, fs=100.0, seed=0):
    rng = Rng(seed)
    eeg = TimeSeries(rng.normal(size=(n_ch, n)).astype(np.float32), fs,
                     [f"ch{i:02d}" for i in range(n_ch)])
    fmri = TimeSeries(rng.normal(size=(n_rois, n)).astype(np.float32), fs,
                      [f"roi{i:02d}" for i in range(n_rois)])
    return Dataset(eeg=eeg, fmri=fmri, subject_id="fixture")


# --- window constants --------------------------------------------------------

def test_window_length_constant():
    assert WINDOW_LEN == 2048             # 20.48 s at 100 Hz
    assert abs(20.48 * 100.0 - WINDOW_LEN) == 0
    assert WINDOW_LEN % 2 ** 4 == 0       # divisible for four pooling stages


# --- directory io ------------------------------------------------------------

def test_f32_round_trip_is_bitwise(tmp_path):
    d = make_dataset()
    save_dataset(d, tmp_path / "ds")
    back = load_dataset(tmp_path / "ds")
    np.testing.assert_array_equal(d.eeg.data, back.eeg.data)
    np.testing.assert_array_equal(d.fmri.data, back.fmri.data)
    assert back.eeg.labels == d.eeg.labels
    assert back.fmri.labels == d.fmri.labels
    assert back.eeg.fs == 100.0


def test_csv_and_binary_encodings_agree(tmp_path):
    d = make_dataset(n=200)
    save_dataset(d, tmp_path / "bin", encoding="f32le")
    save_dataset(d, tmp_path / "csv", encoding="csv")
    a = load_dataset(tmp_path / "bin")
    b = load_dataset(tmp_path / "csv")
    np.testing.assert_allclose(a.eeg.data, b.eeg.data, rtol=1e-6, atol=1e-7)
    np.testing.assert_allclose(a.fmri.data, b.fmri.data, rtol=1e-6, atol=1e-7)


def test_truncated_file_reports_byte_counts(tmp_path):
    d = make_dataset(n=100)
    save_dataset(d, tmp_path / "ds")
    f = tmp_path / "ds" / "eeg.f32"
    f.write_bytes(f.read_bytes()[:-4])
    with pytest.raises(DataError) as e:
        load_dataset(tmp_path / "ds")
    msg = str(e.value)
    assert "1200" in msg and "1196" in msg  # 3 ch x 100 samples x 4 bytes


def test_missing_meta_and_missing_keys(tmp_path):
    with pytest.raises(DataError):
        load_dataset(tmp_path)
    d = make_dataset(n=64)
    save_dataset(d, tmp_path / "ds")
    meta = json.loads((tmp_path / "ds" / "meta.json").read_text())
    del meta["n_samples"]
    (tmp_path / "ds" / "meta.json").write_text(json.dumps(meta))
    with pytest.raises(DataError) as e:
        load_dataset(tmp_path / "ds")
    assert "n_samples" in str(e.value)


def test_unsupported_version_rejected(tmp_path):
    d = make_dataset(n=64)
    save_dataset(d, tmp_path / "ds")
    meta = json.loads((tmp_path / "ds" / "meta.json").read_text())
    meta["version"] = 2
    (tmp_path / "ds" / "meta.json").write_text(json.dumps(meta))
    with pytest.raises(DataError):
        load_dataset(tmp_path / "ds")


def test_csv_header_must_match_manifest(tmp_path):
    d = make_dataset(n=50)
    save_dataset(d, tmp_path / "ds", encoding="csv")
    f = tmp_path / "ds" / "eeg.csv"
    lines = f.read_text().splitlines()
    lines[0] = "a,b,c"
    f.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataError):
        load_dataset(tmp_path / "ds")


def test_non_finite_sample_located_on_load(tmp_path):
    d = make_dataset(n=100)
    save_dataset(d, tmp_path / "ds")
    f = tmp_path / "ds" / "eeg.f32"
    raw = bytearray(f.read_bytes())
    # second channel, sample 7
    offset = (1 * 100 + 7) * 4
    raw[offset:offset + 4] = np.asarray([np.inf], dtype="<f4").tobytes()
    f.write_bytes(bytes(raw))
    with pytest.raises(DataError) as e:
        load_dataset(tmp_path / "ds")
    assert "channel 1" in str(e.value) and "sample 7" in str(e.value)


def test_eeg_only_dataset_loads_without_fmri(tmp_path):
    d = make_dataset(n=64)
    d = Dataset(eeg=d.eeg, fmri=None, subject_id="eeg-only")
    save_dataset(d, tmp_path / "ds")
    back = load_dataset(tmp_path / "ds")
    assert back.fmri is None
    assert back.eeg.n_samples == 64


# --- alignment validation ------------------------------------------------------

def test_validate_aligned_errors():
    d = make_dataset(n=100)
    with pytest.raises(DataError):
        Dataset(eeg=d.eeg, fmri=None).validate_aligned()
    short = TimeSeries(d.fmri.data[:, :50], 100.0, list(d.fmri.labels))
    with pytest.raises(DataError):
        Dataset(eeg=d.eeg, fmri=short).validate_aligned()
    slow = TimeSeries(d.fmri.data, 50.0, list(d.fmri.labels))
    with pytest.raises(DataError):
        Dataset(eeg=d.eeg, fmri=slow).validate_aligned()


# --- splitting -----------------------------------------------------------------

def test_split_of_aligned_five_minutes():
    d = make_dataset(n=29_400)
    train, test = split_train_test(d, 0.8)
    assert train.n_samples == 23_520
    assert test.n_samples == 5_880


def test_split_is_contiguous_without_overlap():
    d = make_dataset(n=1000)
    train, test = split_train_test(d, 0.8)
    np.testing.assert_array_equal(train.eeg.data, d.eeg.data[:, :800])
    np.testing.assert_array_equal(test.eeg.data, d.eeg.data[:, 800:])
    assert train.n_samples + test.n_samples == d.n_samples


def test_split_degenerate_ratio_keeps_everything_in_train():
    d = make_dataset(n=500)
    train, test = split_train_test(d, 1.0)
    assert train.n_samples == 500
    assert test.n_samples == 0


def test_split_validates_fraction():
    d = make_dataset(n=100)
    with pytest.raises(ConfigError):
        split_train_test(d, 0.0)
    with pytest.raises(ConfigError):
        split_train_test(d, 1.5)


# --- window sampling -------------------------------------------------------------

def test_sampled_windows_stay_in_bounds():
    d = make_dataset(n=5000)
    rng = Rng(1)
    for w in sample_windows(d, 200, rng):
        assert 0 <= w.start_index <= 5000 - WINDOW_LEN
        assert w.eeg.shape == (3, WINDOW_LEN)
        assert w.fmri.shape == (2, WINDOW_LEN)


def test_sampled_windows_pair_same_start():
    d = make_dataset(n=4096)
    for w in sample_windows(d, 20, Rng(2)):
        s = w.start_index
        np.testing.assert_array_equal(w.eeg, d.eeg.data[:, s:s + WINDOW_LEN])
        np.testing.assert_array_equal(w.fmri, d.fmri.data[:, s:s + WINDOW_LEN])


def test_sampling_is_seed_deterministic():
    d = make_dataset(n=6000)
    a = sample_windows(d, 50, Rng(3))
    b = sample_windows(d, 50, Rng(3))
    assert [w.start_index for w in a] == [w.start_index for w in b]


def test_sampling_rejects_short_segment():
    d = make_dataset(n=2000)
    with pytest.raises(DataError):
        sample_windows(d, 1, Rng(0))


def test_random_lengths_never_read_out_of_bounds():
    rng = Rng(4)
    for _ in range(20):
        n = int(rng.integers(WINDOW_LEN, WINDOW_LEN + 500))
        d = make_dataset(n=n)
        for w in sample_windows(d, 10, rng):
            assert w.start_index + WINDOW_LEN <= n


def test_tiled_windows_and_dropped_remainder():
    d = make_dataset(n=29_400)
    wins, dropped = tile_windows(d)
    assert len(wins) == 14
    assert dropped == 728
    starts = [w.start_index for w in wins]
    assert starts == [i * WINDOW_LEN for i in range(14)]


# --- synthetic generator ----------------------------------------------------------

def quiet_config(**kw):
    base = dict(n_channels=1, n_rois=1, duration_s=120.0,
                carrier_hz=(10.0,), envelope_hz=(0.15,),
                eeg_noise_sd=0.0, roi_noise_sd=0.0)
    base.update(kw)
    return SynthConfig(**base)


def test_zero_noise_roi_equals_convolved_envelope():
    d = synth_generate(quiet_config(), Rng(0))
    np.testing.assert_array_equal(d.fmri.data, d.truth.clean_rois)
    r = np.corrcoef(d.fmri.data[0], d.truth.clean_rois[0])[0, 1]
    assert abs(r - 1.0) <= 1e-12


def test_roi_lags_envelope_near_hrf_peak():
    d = synth_generate(quiet_config(), Rng(1))
    env = d.truth.envelopes[0] - d.truth.envelopes[0].mean()
    roi = d.fmri.data[0] - d.fmri.data[0].mean()
    fs = d.fmri.fs
    max_lag = int(12 * fs)
    corr = [np.dot(roi[lag:], env[:len(env) - lag]) for lag in range(max_lag)]
    peak_s = int(np.argmax(corr)) / fs
    assert 3.0 <= peak_s <= 9.0


def test_eeg_noise_level_leaves_roi_stream_untouched():
    a = synth_generate(quiet_config(eeg_noise_sd=0.1), Rng(5))
    b = synth_generate(quiet_config(eeg_noise_sd=0.9), Rng(5))
    np.testing.assert_array_equal(a.fmri.data, b.fmri.data)
    assert not np.array_equal(a.eeg.data, b.eeg.data)


def test_synth_is_seed_deterministic():
    cfg = SynthConfig(duration_s=60.0)
    a = synth_generate(cfg, Rng(7))
    b = synth_generate(cfg, Rng(7))
    np.testing.assert_array_equal(a.eeg.data, b.eeg.data)
    np.testing.assert_array_equal(a.fmri.data, b.fmri.data)
    c = synth_generate(cfg, Rng(8))
    assert not np.array_equal(a.eeg.data, c.eeg.data)


def test_synth_envelopes_are_positive():
    d = synth_generate(quiet_config(), Rng(9))
    assert np.all(d.truth.envelopes > 0)


def test_synth_default_labels_and_shapes():
    cfg = SynthConfig(duration_s=60.0)
    d = synth_generate(cfg, Rng(10))
    assert d.eeg.data.shape == (30, 6000)
    assert d.fmri.data.shape == (4, 6000)
    assert d.fmri.labels == list(DEFAULT_ROI_LABELS)
    assert d.provenance == "synthetic"
    d.validate_aligned()


def test_synth_config_validation():
    with pytest.raises(ConfigError):
        synth_generate(SynthConfig(duration_s=10.0), Rng(0))  # < two windows
    with pytest.raises(ConfigError):
        synth_generate(quiet_config(carrier_hz=(10.0, 20.0)), Rng(0))
    with pytest.raises(ConfigError):
        synth_generate(quiet_config(carrier_hz=(70.0,)), Rng(0))  # >= nyquist
    with pytest.raises(ConfigError):
        synth_generate(quiet_config(eeg_noise_sd=-0.1), Rng(0))


def test_synth_round_trips_through_directory(tmp_path):
    d = synth_generate(SynthConfig(duration_s=60.0), Rng(11))
    save_dataset(d, tmp_path / "ds")
    back = load_dataset(tmp_path / "ds")
    np.testing.assert_array_equal(back.eeg.data,
                                  d.eeg.data.astype(np.float32))
    np.testing.assert_array_equal(back.fmri.data,
                                  d.fmri.data.astype(np.float32))
