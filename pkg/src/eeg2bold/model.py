"""Network architecture: sinusoidal feature extractor into a 1-D conv
encoder/decoder with per-ROI output channels.

The feature extractor is an MLP applied independently at every time sample
of the multi-channel input: an input sine layer, K hidden sine layers, and
a linear projection. Vectorized, that is three matmuls on a [channels,
batch*length] column matrix. The encoder halves the time axis N times
(conv, channel layer norm, GELU, max pool, dropout); the decoder mirrors it
with nearest-neighbour upsampling and reversed channel widths; a final 1x1
conv maps to the output regions.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .checkpoint import MAGIC_MODEL, load_arrays, save_arrays
from .errors import ConfigError, DataError, DimensionError
from .rng import Rng


@dataclass(frozen=True)
class ModelConfig:
    n_eeg_channels: int = 30
    n_rois: int = 4
    siren_hidden_width: int = 64
    siren_hidden_layers: int = 1
    omega0: float = 30.0
    encoder_blocks: int = 4
    channel_widths: tuple[int, ...] = (64, 128, 256, 256)
    kernel_size: int = 5
    dropout_rate: float = 0.3
    window_len_samples: int = 2048

    def validate(self) -> "ModelConfig":
        if self.n_eeg_channels < 1 or self.n_rois < 1:
            raise ConfigError("channel and ROI counts must be positive")
        if self.siren_hidden_width < 1:
            raise ConfigError("siren_hidden_width must be positive")
        if self.siren_hidden_layers < 0:
            raise ConfigError("siren_hidden_layers must be >= 0")
        if self.omega0 <= 0:
            raise ConfigError(f"omega0 must be positive, got {self.omega0}")
        if self.encoder_blocks < 1:
            raise ConfigError("encoder_blocks must be >= 1")
        if len(self.channel_widths) != self.encoder_blocks:
            raise ConfigError(
                f"channel_widths has {len(self.channel_widths)} entries "
                f"for {self.encoder_blocks} blocks"
            )
        if any(w < 1 for w in self.channel_widths):
            raise ConfigError("channel widths must be positive")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError(f"kernel_size must be odd, got {self.kernel_size}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.window_len_samples < 1 or self.window_len_samples % (2 ** self.encoder_blocks) != 0:
            raise ConfigError(
                f"window_len_samples={self.window_len_samples} not divisible "
                f"by 2^{self.encoder_blocks}"
            )
        return self

    @property
    def latent_shape(self) -> tuple[int, int]:
        return (self.channel_widths[-1],
                self.window_len_samples // 2 ** self.encoder_blocks)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channel_widths"] = list(self.channel_widths)
        return d

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        d = dict(d)
        d["channel_widths"] = tuple(d["channel_widths"])
        return ModelConfig(**d).validate()


def _decoder_chain(config: ModelConfig) -> list[int]:
    # mirror of the encoder's channel trajectory, latent back to F
    return list(reversed([config.siren_hidden_width, *config.channel_widths]))


def expected_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Canonical name -> shape table for every parameter array."""
    f = config.siren_hidden_width
    shapes: dict[str, tuple[int, ...]] = {}
    fan_in = config.n_eeg_channels
    for i in range(config.siren_hidden_layers + 1):
        shapes[f"siren.sine{i}.w"] = (f, fan_in)
        shapes[f"siren.sine{i}.b"] = (f,)
        fan_in = f
    shapes["siren.proj.w"] = (f, f)
    shapes["siren.proj.b"] = (f,)

    k = config.kernel_size
    enc_chain = [f, *config.channel_widths]
    for i in range(config.encoder_blocks):
        c_in, c_out = enc_chain[i], enc_chain[i + 1]
        shapes[f"encoder.block{i}.conv.w"] = (c_out, c_in, k)
        shapes[f"encoder.block{i}.conv.b"] = (c_out,)
        shapes[f"encoder.block{i}.norm.gain"] = (c_out,)
        shapes[f"encoder.block{i}.norm.shift"] = (c_out,)

    dec_chain = _decoder_chain(config)
    for i in range(config.encoder_blocks):
        c_in, c_out = dec_chain[i], dec_chain[i + 1]
        shapes[f"decoder.block{i}.conv.w"] = (c_out, c_in, k)
        shapes[f"decoder.block{i}.conv.b"] = (c_out,)
        shapes[f"decoder.block{i}.norm.gain"] = (c_out,)
        shapes[f"decoder.block{i}.norm.shift"] = (c_out,)

    shapes["head.w"] = (config.n_rois, f, 1)
    shapes["head.b"] = (config.n_rois,)
    return shapes


class ModelParams:
    """Named parameter tensors plus the config they were built for."""

    def __init__(self, config: ModelConfig, tensors: dict[str, Tensor]):
        self.config = config
        self.tensors = dict(tensors)
        want = expected_shapes(config)
        if set(self.tensors) != set(want):
            missing = sorted(set(want) - set(self.tensors))
            extra = sorted(set(self.tensors) - set(want))
            raise DataError(
                f"parameter set mismatch: missing {missing}, unexpected {extra}"
            )
        for name, shape in want.items():
            got = self.tensors[name].data.shape
            if got != shape:
                raise DataError(f"parameter {name!r}: shape {got}, expected {shape}")

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def items(self):
        return self.tensors.items()

    @property
    def n_scalars(self) -> int:
        return sum(t.data.size for t in self.tensors.values())

    def set_requires_grad(self, flag: bool) -> None:
        for t in self.tensors.values():
            t.requires_grad = flag

    def zero_grads(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.tensors.items()}

    def load_snapshot(self, state: dict[str, np.ndarray]) -> None:
        for name, arr in state.items():
            self.tensors[name].data = arr.copy()

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(self.config, {
            name: Tensor(t.data.astype(dtype)) for name, t in self.tensors.items()
        })


def siren_init(config: ModelConfig, rng: Rng, dtype=np.float32) -> dict[str, Tensor]:
    """Sine-layer weights per the Sitzmann scheme; biases zero.

    First layer: U(-1/fan_in, 1/fan_in). Deeper sine layers and the linear
    projection: U(-sqrt(6/fan_in)/omega0, sqrt(6/fan_in)/omega0).
    """
    f = config.siren_hidden_width
    out: dict[str, Tensor] = {}
    fan_in = config.n_eeg_channels
    for i in range(config.siren_hidden_layers + 1):
        if i == 0:
            bound = 1.0 / fan_in
        else:
            bound = np.sqrt(6.0 / fan_in) / config.omega0
        w = rng.uniform(-bound, bound, size=(f, fan_in))
        out[f"siren.sine{i}.w"] = Tensor(w.astype(dtype))
        out[f"siren.sine{i}.b"] = Tensor(np.zeros(f, dtype=dtype))
        fan_in = f
    bound = np.sqrt(6.0 / f) / config.omega0
    out["siren.proj.w"] = Tensor(rng.uniform(-bound, bound, size=(f, f)).astype(dtype))
    out["siren.proj.b"] = Tensor(np.zeros(f, dtype=dtype))
    return out


def init_params(config: ModelConfig, rng: Rng, dtype=np.float32) -> ModelParams:
    """Draw all parameters in a fixed name order from one stream."""
    config.validate()
    tensors = siren_init(config, rng, dtype)

    def conv_init(prefix: str, c_in: int, c_out: int, k: int) -> None:
        bound = np.sqrt(6.0 / (c_in * k))
        w = rng.uniform(-bound, bound, size=(c_out, c_in, k))
        tensors[f"{prefix}.conv.w"] = Tensor(w.astype(dtype))
        tensors[f"{prefix}.conv.b"] = Tensor(np.zeros(c_out, dtype=dtype))
        tensors[f"{prefix}.norm.gain"] = Tensor(np.ones(c_out, dtype=dtype))
        tensors[f"{prefix}.norm.shift"] = Tensor(np.zeros(c_out, dtype=dtype))

    k = config.kernel_size
    enc_chain = [config.siren_hidden_width, *config.channel_widths]
    for i in range(config.encoder_blocks):
        conv_init(f"encoder.block{i}", enc_chain[i], enc_chain[i + 1], k)
    dec_chain = _decoder_chain(config)
    for i in range(config.encoder_blocks):
        conv_init(f"decoder.block{i}", dec_chain[i], dec_chain[i + 1], k)

    bound = np.sqrt(6.0 / config.siren_hidden_width)
    hw = rng.uniform(-bound, bound,
                     size=(config.n_rois, config.siren_hidden_width, 1))
    tensors["head.w"] = Tensor(hw.astype(dtype))
    tensors["head.b"] = Tensor(np.zeros(config.n_rois, dtype=dtype))
    return ModelParams(config, tensors)


def _check_mode(mode: str) -> None:
    if mode not in ("train", "eval"):
        raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def siren_forward(X, params: ModelParams, tape: Optional[Tape] = None) -> Tensor:
    """[C, L] -> [F, L] or [B, C, L] -> [B, F, L], pointwise over time."""
    X = _as_tensor(X)
    cfg = params.config
    if X.data.ndim not in (2, 3) or X.data.shape[-2] != cfg.n_eeg_channels:
        raise DimensionError(
            f"expected {cfg.n_eeg_channels} input channels, got shape {X.shape}"
        )
    batched = X.data.ndim == 3
    h = ad.batch_to_columns(X, tape) if batched else X
    for i in range(cfg.siren_hidden_layers + 1):
        pre = ad.affine(h, params[f"siren.sine{i}.w"], params[f"siren.sine{i}.b"], tape)
        h = ad.sine(pre, cfg.omega0, tape)
    out = ad.affine(h, params["siren.proj.w"], params["siren.proj.b"], tape)
    if batched:
        out = ad.columns_to_batch(out, X.data.shape[0], tape)
    return out


def encoder_forward(features, params: ModelParams, mode: str,
                    rng: Optional[Rng] = None, tape: Optional[Tape] = None) -> Tensor:
    _check_mode(mode)
    cfg = params.config
    h = _as_tensor(features)
    length = h.data.shape[-1]
    if length % 2 ** cfg.encoder_blocks != 0:
        raise DimensionError(
            f"length {length} not divisible by 2^{cfg.encoder_blocks}"
        )
    for i in range(cfg.encoder_blocks):
        h = ad.conv1d(h, params[f"encoder.block{i}.conv.w"],
                      params[f"encoder.block{i}.conv.b"], tape)
        h = ad.layer_norm(h, params[f"encoder.block{i}.norm.gain"],
                          params[f"encoder.block{i}.norm.shift"], tape=tape)
        h = ad.gelu(h, tape)
        h = ad.maxpool1d(h, tape)
        h = ad.dropout(h, cfg.dropout_rate, mode, rng, tape)
    return h


def decoder_forward(latent, params: ModelParams, mode: str,
                    rng: Optional[Rng] = None, tape: Optional[Tape] = None) -> Tensor:
    _check_mode(mode)
    cfg = params.config
    h = _as_tensor(latent)
    want_c, want_l = cfg.latent_shape
    if h.data.shape[-2:] != (want_c, want_l):
        raise DimensionError(
            f"latent shape {h.data.shape[-2:]} does not match config "
            f"latent {cfg.latent_shape}"
        )
    for i in range(cfg.encoder_blocks):
        h = ad.upsample_nn(h, 2, tape)
        h = ad.conv1d(h, params[f"decoder.block{i}.conv.w"],
                      params[f"decoder.block{i}.conv.b"], tape)
        h = ad.layer_norm(h, params[f"decoder.block{i}.norm.gain"],
                          params[f"decoder.block{i}.norm.shift"], tape=tape)
        h = ad.gelu(h, tape)
        h = ad.dropout(h, cfg.dropout_rate, mode, rng, tape)
    return ad.conv1d(h, params["head.w"], params["head.b"], tape)


def model_forward(X, params: ModelParams, mode: str = "eval",
                  rng: Optional[Rng] = None, tape: Optional[Tape] = None) -> Tensor:
    """[C, L] -> [n_rois, L] (or batched). Train mode needs an Rng for dropout."""
    _check_mode(mode)
    features = siren_forward(X, params, tape)
    latent = encoder_forward(features, params, mode, rng, tape)
    return decoder_forward(latent, params, mode, rng, tape)


# ---------------------------------------------------------------------------
# persistence


def save_model(path, params: ModelParams, extra_meta: Optional[dict] = None) -> None:
    meta = {"format": "model-params", "config": params.config.to_dict()}
    if extra_meta:
        meta.update(extra_meta)
    save_arrays(path, MAGIC_MODEL,
                {name: t.data for name, t in params.tensors.items()}, meta)


def load_model(path) -> tuple[ModelParams, dict]:
    arrays, meta = load_arrays(path, MAGIC_MODEL)
    if "config" not in meta:
        raise DataError(f"{path}: checkpoint missing model config")
    config = ModelConfig.from_dict(meta["config"])
    tensors = {name: Tensor(arr) for name, arr in arrays.items()}
    return ModelParams(config, tensors), meta
