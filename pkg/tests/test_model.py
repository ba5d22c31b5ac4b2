"""Architecture wiring: shapes, init ranges, determinism, persistence."""

import numpy as np
import pytest

from eeg2bold.autodiff import Tensor
from eeg2bold.errors import ConfigError, DataError, DimensionError
from eeg2bold.model import (ModelConfig, ModelParams, decoder_forward,
                            encoder_forward, expected_shapes, init_params,
                            load_model, model_forward, save_model,
                            siren_forward, siren_init)
from eeg2bold.rng import Rng


def small_config(**kw):
    base = dict(n_eeg_channels=6, n_rois=2, siren_hidden_width=8,
                siren_hidden_layers=1, encoder_blocks=2, channel_widths=(8, 12),
                kernel_size=3, dropout_rate=0.3, window_len_samples=32)
    base.update(kw)
    return ModelConfig(**base).validate()


# --- config validation -----------------------------------------------------

def test_window_must_divide_by_pooling_factor():
    with pytest.raises(ConfigError):
        small_config(window_len_samples=34)


def test_kernel_must_be_odd():
    with pytest.raises(ConfigError):
        small_config(kernel_size=4)


def test_dropout_range():
    with pytest.raises(ConfigError):
        small_config(dropout_rate=1.0)
    small_config(dropout_rate=0.0)


def test_width_count_must_match_blocks():
    with pytest.raises(ConfigError):
        small_config(channel_widths=(8, 12, 16))


def test_default_latent_shape():
    assert ModelConfig().latent_shape == (256, 128)


def test_config_dict_round_trip():
    cfg = small_config()
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg


# --- initialization --------------------------------------------------------

def test_first_sine_layer_bound():
    params = init_params(ModelConfig(), Rng(0))
    w = params["siren.sine0.w"].data
    assert np.all(np.abs(w) <= 1.0 / 30.0)
    assert w.shape == (64, 30)


def test_hidden_sine_layer_bound():
    params = init_params(ModelConfig(), Rng(0))
    bound = np.sqrt(6.0 / 64.0) / 30.0
    assert np.isclose(bound, 0.01021, atol=5e-6)
    for name in ("siren.sine1.w", "siren.proj.w"):
        assert np.all(np.abs(params[name].data) <= bound)


def test_biases_start_at_zero():
    params = init_params(ModelConfig(), Rng(3))
    for name, t in params.items():
        if name.endswith(".b") or name.endswith(".shift"):
            assert not t.data.any(), name


def test_same_seed_same_parameters():
    a = init_params(small_config(), Rng(42))
    b = init_params(small_config(), Rng(42))
    for name, t in a.items():
        np.testing.assert_array_equal(t.data, b[name].data)


def test_layer_count_is_k_plus_one_sine_plus_projection():
    for k in (0, 1, 3):
        cfg = small_config(siren_hidden_layers=k)
        names = set(siren_init(cfg, Rng(0)))
        sines = {n for n in names if n.startswith("siren.sine")}
        assert len(sines) == 2 * (k + 1)  # weight + bias per sine layer
        assert "siren.proj.w" in names and "siren.proj.b" in names


def test_default_parameter_count():
    assert init_params(ModelConfig(), Rng(0)).n_scalars == 1_120_132


def test_params_reject_missing_and_extra_arrays():
    cfg = small_config()
    tensors = init_params(cfg, Rng(0)).tensors
    short = dict(tensors)
    short.pop("head.b")
    with pytest.raises(DataError):
        ModelParams(cfg, short)
    extra = dict(tensors)
    extra["bogus"] = Tensor(np.zeros(1, dtype=np.float32))
    with pytest.raises(DataError):
        ModelParams(cfg, extra)


def test_params_reject_wrong_shape():
    cfg = small_config()
    tensors = init_params(cfg, Rng(0)).tensors
    tensors["head.b"] = Tensor(np.zeros(5, dtype=np.float32))
    with pytest.raises(DataError):
        ModelParams(cfg, tensors)


# --- feature extractor -----------------------------------------------------

def test_siren_zero_input_replicates_projection_bias():
    cfg = small_config()
    params = init_params(cfg, Rng(1))
    params.tensors["siren.proj.b"] = Tensor(
        np.arange(cfg.siren_hidden_width, dtype=np.float32))
    out = siren_forward(np.zeros((cfg.n_eeg_channels, 7), dtype=np.float32),
                        params)
    expect = np.tile(np.arange(cfg.siren_hidden_width, dtype=np.float32)[:, None],
                     (1, 7))
    np.testing.assert_array_equal(out.data, expect)


def test_siren_single_sample_equals_plain_mlp():
    cfg = small_config()
    params = init_params(cfg, Rng(5))
    x = Rng(9).normal(size=(cfg.n_eeg_channels, 1)).astype(np.float32)

    h = x.copy()
    for i in range(cfg.siren_hidden_layers + 1):
        w = params[f"siren.sine{i}.w"].data
        b = params[f"siren.sine{i}.b"].data
        h = np.sin(cfg.omega0 * (w @ h + b[:, None]))
    expect = params["siren.proj.w"].data @ h + params["siren.proj.b"].data[:, None]

    out = siren_forward(x, params)
    np.testing.assert_allclose(out.data, expect, rtol=1e-6)


def test_siren_default_output_shape():
    params = init_params(ModelConfig(), Rng(2))
    x = Rng(3).normal(size=(30, 2048)).astype(np.float32)
    out = siren_forward(x, params)
    assert out.data.shape == (64, 2048)


def test_sine_activations_stay_in_unit_interval():
    # identity projection exposes the last sine layer directly
    cfg = small_config()
    params = init_params(cfg, Rng(4))
    f = cfg.siren_hidden_width
    params.tensors["siren.proj.w"] = Tensor(np.eye(f, dtype=np.float32))
    params.tensors["siren.proj.b"] = Tensor(np.zeros(f, dtype=np.float32))
    x = 10.0 * Rng(8).normal(size=(cfg.n_eeg_channels, 50)).astype(np.float32)
    out = siren_forward(x, params)
    assert np.all(out.data >= -1.0) and np.all(out.data <= 1.0)


def test_siren_rejects_channel_mismatch():
    params = init_params(small_config(), Rng(0))
    with pytest.raises(DimensionError):
        siren_forward(np.zeros((5, 10), dtype=np.float32), params)


# --- encoder / decoder -----------------------------------------------------

def test_encoder_default_shape_law():
    params = init_params(ModelConfig(), Rng(0))
    feats = Rng(1).normal(size=(64, 2048)).astype(np.float32)
    out = encoder_forward(feats, params, "eval")
    assert out.data.shape == (256, 128)


def test_encoder_single_block_halves_length():
    cfg = small_config(encoder_blocks=1, channel_widths=(8,),
                       window_len_samples=4)
    params = init_params(cfg, Rng(0))
    feats = Rng(2).normal(size=(cfg.siren_hidden_width, 4)).astype(np.float32)
    out = encoder_forward(feats, params, "eval")
    assert out.data.shape == (8, 2)


def test_encoder_rejects_odd_length():
    params = init_params(small_config(), Rng(0))
    with pytest.raises(DimensionError):
        encoder_forward(np.zeros((8, 30), dtype=np.float32), params, "eval")


def test_encoder_eval_mode_is_deterministic():
    params = init_params(small_config(), Rng(0))
    feats = Rng(7).normal(size=(8, 32)).astype(np.float32)
    a = encoder_forward(feats, params, "eval")
    b = encoder_forward(feats, params, "eval")
    np.testing.assert_array_equal(a.data, b.data)


def test_decoder_default_shape_law():
    params = init_params(ModelConfig(), Rng(0))
    latent = Rng(3).normal(size=(256, 128)).astype(np.float32)
    out = decoder_forward(latent, params, "eval")
    assert out.data.shape == (4, 2048)


def test_decoder_rejects_wrong_latent():
    params = init_params(small_config(), Rng(0))
    with pytest.raises(DimensionError):
        decoder_forward(np.zeros((3, 8), dtype=np.float32), params, "eval")


def test_zero_head_gives_constant_bias_per_roi():
    cfg = small_config()
    params = init_params(cfg, Rng(6))
    params.tensors["head.w"] = Tensor(
        np.zeros_like(params["head.w"].data))
    params.tensors["head.b"] = Tensor(
        np.asarray([2.5, -1.0], dtype=np.float32))
    latent = Rng(4).normal(size=cfg.latent_shape).astype(np.float32)
    out = decoder_forward(latent, params, "eval")
    np.testing.assert_array_equal(out.data[0], np.full(32, 2.5, np.float32))
    np.testing.assert_array_equal(out.data[1], np.full(32, -1.0, np.float32))


def test_encoder_decoder_round_trip_restores_length():
    cfg = small_config()
    params = init_params(cfg, Rng(0))
    feats = Rng(5).normal(size=(cfg.siren_hidden_width, 32)).astype(np.float32)
    latent = encoder_forward(feats, params, "eval")
    out = decoder_forward(latent, params, "eval")
    assert out.data.shape[-1] == 32


# --- full model ------------------------------------------------------------

def test_model_forward_default_shapes():
    params = init_params(ModelConfig(), Rng(0))
    x = Rng(11).normal(size=(30, 2048)).astype(np.float32)
    out = model_forward(x, params)
    assert out.data.shape == (4, 2048)


def test_model_forward_batched():
    cfg = small_config()
    params = init_params(cfg, Rng(0))
    x = Rng(12).normal(size=(3, cfg.n_eeg_channels, 32)).astype(np.float32)
    out = model_forward(x, params)
    assert out.data.shape == (3, cfg.n_rois, 32)


def test_model_forward_rejects_bad_mode():
    params = init_params(small_config(), Rng(0))
    x = np.zeros((6, 32), dtype=np.float32)
    with pytest.raises(ConfigError):
        model_forward(x, params, mode="test")


def test_shape_law_across_random_configs():
    rng = Rng(99)
    for trial in range(6):
        n = int(rng.integers(1, 4))
        widths = tuple(int(rng.integers(4, 12)) for _ in range(n))
        cfg = ModelConfig(
            n_eeg_channels=int(rng.integers(1, 12)),
            n_rois=int(rng.integers(1, 6)),
            siren_hidden_width=int(rng.integers(4, 16)),
            siren_hidden_layers=int(rng.integers(0, 3)),
            encoder_blocks=n,
            channel_widths=widths,
            kernel_size=int(2 * rng.integers(0, 3) + 1),
            window_len_samples=(2 ** n) * int(rng.integers(1, 5)),
        ).validate()
        params = init_params(cfg, Rng(trial))
        x = rng.normal(size=(cfg.n_eeg_channels,
                             cfg.window_len_samples)).astype(np.float32)
        out = model_forward(x, params)
        assert out.data.shape == (cfg.n_rois, cfg.window_len_samples)


def test_train_mode_requires_rng_and_differs_from_eval():
    cfg = small_config(dropout_rate=0.5)
    params = init_params(cfg, Rng(0))
    x = Rng(13).normal(size=(6, 32)).astype(np.float32)
    ev = model_forward(x, params, mode="eval")
    tr = model_forward(x, params, mode="train", rng=Rng(77))
    assert not np.array_equal(ev.data, tr.data)


def test_eval_forward_is_bitwise_repeatable():
    params = init_params(ModelConfig(), Rng(0))
    x = Rng(14).normal(size=(30, 2048)).astype(np.float32)
    a = model_forward(x, params)
    b = model_forward(x, params)
    assert np.array_equal(a.data, b.data)


# --- persistence -----------------------------------------------------------

def test_save_load_round_trip_is_bitwise(tmp_path):
    cfg = small_config()
    params = init_params(cfg, Rng(21))
    x = Rng(22).normal(size=(6, 32)).astype(np.float32)
    before = model_forward(x, params).data

    path = tmp_path / "model.bin"
    save_model(path, params, extra_meta={"note": "round trip"})
    loaded, meta = load_model(path)

    assert meta["note"] == "round trip"
    assert loaded.config == cfg
    for name, t in params.items():
        np.testing.assert_array_equal(t.data, loaded[name].data)
    after = model_forward(x, loaded).data
    assert np.array_equal(before, after)


def test_expected_shapes_cover_all_parameters():
    cfg = small_config()
    params = init_params(cfg, Rng(0))
    want = expected_shapes(cfg)
    assert set(want) == set(params.tensors)
    for name, shape in want.items():
        assert params[name].data.shape == shape
