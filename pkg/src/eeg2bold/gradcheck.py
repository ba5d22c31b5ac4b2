"""Finite-difference gradient oracle for the autodiff ops.

grad_check perturbs one coordinate at a time: central difference
(f(x+eps*e_i) - f(x-eps*e_i)) / (2*eps), compared against the tape gradient
with relative error |a-n| / max(1, |a|, |n|). Everything runs in float64;
float32 cannot hit the 1e-4 tolerance.

Callables take (x, tape) and must be pure: dropout inside f has to construct
a fresh identically-seeded Rng on every call so the mask does not shift
between perturbed evaluations.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, NumericError
from .rng import Rng

LossFn = Callable[[ad.Tensor, "ad.Tape | None"], ad.Tensor]


def _scalar_value(f: LossFn, x: ad.Tensor, where: str) -> float:
    out = f(x, None)
    v = float(np.asarray(out.data).reshape(()))
    if not np.isfinite(v):
        raise NumericError(f"non-finite value {v} during gradient check at {where}")
    return v


def grad_check(f: LossFn, x: ad.Tensor, eps: float = 1e-5) -> float:
    """Worst relative error between tape and central-difference gradients of f at x."""
    if eps <= 0:
        raise ConfigError(f"eps must be positive, got {eps}")
    if x.data.dtype != np.float64:
        raise ConfigError("grad_check requires a float64 tensor")
    x.requires_grad = True
    x.zero_grad()
    tape = ad.Tape()
    loss = f(x, tape)
    if loss.data.size != 1:
        raise ConfigError("grad_check needs a scalar-valued f")
    tape.backward(loss)
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()

    worst = 0.0
    flat = x.data.reshape(-1)
    aflat = analytic.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = _scalar_value(f, x, f"coordinate {i} (+eps)")
        flat[i] = orig - eps
        fm = _scalar_value(f, x, f"coordinate {i} (-eps)")
        flat[i] = orig
        numeric = (fp - fm) / (2.0 * eps)
        a = float(aflat[i])
        rel = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
        if rel > worst:
            worst = rel
    return worst


def grad_check_params(build_loss: Callable[["ad.Tape | None"], ad.Tensor],
                      params: dict[str, ad.Tensor], eps: float = 1e-5) -> dict[str, float]:
    """grad_check over several named tensors sharing one loss.

    build_loss(tape) evaluates the full loss using the current contents of
    `params` (closed over by the caller). One backward pass supplies all
    analytic gradients; finite differences then sweep each tensor in turn.
    """
    if eps <= 0:
        raise ConfigError(f"eps must be positive, got {eps}")
    for name, p in params.items():
        if p.data.dtype != np.float64:
            raise ConfigError(f"grad_check_params requires float64 tensors ({name})")
        p.requires_grad = True
        p.zero_grad()
    tape = ad.Tape()
    loss = build_loss(tape)
    tape.backward(loss)

    def value_at(where: str) -> float:
        out = build_loss(None)
        v = float(np.asarray(out.data).reshape(()))
        if not np.isfinite(v):
            raise NumericError(f"non-finite value during gradient check at {where}")
        return v

    errors: dict[str, float] = {}
    for name, p in params.items():
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad
        flat = p.data.reshape(-1)
        aflat = analytic.reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = value_at(f"{name}[{i}] (+eps)")
            flat[i] = orig - eps
            fm = value_at(f"{name}[{i}] (-eps)")
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * eps)
            a = float(aflat[i])
            rel = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            if rel > worst:
                worst = rel
        errors[name] = worst
    return errors


# ---------------------------------------------------------------------------
# standard per-op check suite (used by tests and the gradcheck CLI command)


def _rand(rng: Rng, *shape: int) -> ad.Tensor:
    return ad.Tensor(rng.normal(size=shape), dtype=np.float64)


def op_check_cases(seed: int) -> list[tuple[str, LossFn, ad.Tensor]]:
    """One (name, f, x) gradient-check case per primitive op for a given seed.

    Each op's output is reduced to a scalar through a fixed random projection
    so every output element influences the checked value.
    """
    root = Rng(seed)

    def projected(op_fn, out_shape, prng):
        w = prng.normal(size=out_shape)

        def f(x: ad.Tensor, tape):
            return ad.wsum(op_fn(x, tape), w, tape)
        return f

    cases: list[tuple[str, LossFn, ad.Tensor]] = []

    r = root.split(0)
    w = _rand(r, 4, 3)
    b = _rand(r, 4)
    cases.append(("affine",
                  projected(lambda x, tape: ad.affine(x, w, b, tape), (4, 5), r),
                  _rand(r, 3, 5)))

    r = root.split(1)
    cases.append(("sine",
                  projected(lambda x, tape: ad.sine(x, 30.0, tape), (4, 6), r),
                  _rand(r, 4, 6)))

    r = root.split(2)
    kern = _rand(r, 3, 2, 5)
    cb = _rand(r, 3)
    cases.append(("conv1d",
                  projected(lambda x, tape: ad.conv1d(x, kern, cb, tape), (2, 3, 12), r),
                  _rand(r, 2, 2, 12)))

    r = root.split(3)
    # spread values out so no pool pair sits within finite-difference reach
    xpool = _rand(r, 2, 3, 8)
    xpool.data *= 10.0
    cases.append(("maxpool1d",
                  projected(lambda x, tape: ad.maxpool1d(x, tape), (2, 3, 4), r),
                  xpool))

    r = root.split(4)
    cases.append(("upsample_nn",
                  projected(lambda x, tape: ad.upsample_nn(x, 2, tape), (3, 14), r),
                  _rand(r, 3, 7)))

    r = root.split(5)
    gain = _rand(r, 4)
    shift = _rand(r, 4)
    cases.append(("layer_norm",
                  projected(lambda x, tape: ad.layer_norm(x, gain, shift, 1e-5, tape),
                            (2, 4, 6), r),
                  _rand(r, 2, 4, 6)))

    r = root.split(6)
    cases.append(("gelu",
                  projected(lambda x, tape: ad.gelu(x, tape), (3, 5), r),
                  _rand(r, 3, 5)))

    r = root.split(7)
    # fresh identically-seeded Rng per call keeps the mask fixed across FD evals
    cases.append(("dropout",
                  projected(lambda x, tape: ad.dropout(x, 0.3, "train",
                                                       Rng(seed, (7, 50)), tape),
                            (4, 8), r),
                  _rand(r, 4, 8)))

    return cases


def run_op_checks(seeds: tuple[int, ...] = (0, 1, 2, 3, 4),
                  eps: float = 1e-5) -> list[dict]:
    """Gradient-check every primitive across seeds; one result record per op."""
    worst: dict[str, float] = {}
    for seed in seeds:
        for name, f, x in op_check_cases(seed):
            err = grad_check(f, x, eps=eps)
            worst[name] = max(worst.get(name, 0.0), err)
    return [{"op": name, "max_rel_err": err, "passed": bool(err <= 1e-4)}
            for name, err in worst.items()]


def full_model_check(seed: int = 0, eps: float = 1e-6) -> dict[str, float]:
    """Finite-difference check of the composite loss through the whole model,
    over every parameter, on a shrunken two-block config with a [30 x 64]
    input. Train mode, so dropout scaling is part of the checked path; the
    mask stays fixed across perturbed evaluations because the loss closure
    re-seeds its Rng on every call.

    eps is 1e-6 here, not the per-op default 1e-5: a parameter nudge shifts
    every max-pool input at once, and at 1e-5 the odds that some pool pair
    sits inside the perturbation window (flipping its argmax and corrupting
    the central difference) are a few percent per seed. Float64 still gives
    ~1e-9 difference accuracy at 1e-6."""
    from .model import ModelConfig, init_params, model_forward
    from .objective import composite_loss

    config = ModelConfig(
        n_eeg_channels=30, n_rois=2, siren_hidden_width=6,
        siren_hidden_layers=1, encoder_blocks=2, channel_widths=(6, 8),
        kernel_size=5, dropout_rate=0.3, window_len_samples=64,
    ).validate()
    root = Rng(seed)
    params = init_params(config, root.split(0), dtype=np.float64)
    x = ad.Tensor(root.split(1).normal(size=(30, 64)))
    y = ad.Tensor(root.split(2).normal(size=(2, 64)))

    def build_loss(tape):
        pred = model_forward(x, params, mode="train", rng=Rng(seed, (3,)), tape=tape)
        return composite_loss(y, pred, alpha=0.1, tape=tape)

    return grad_check_params(build_loss, dict(params.items()), eps=eps)
