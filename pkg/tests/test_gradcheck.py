"""The finite-difference oracle: it must bless correct gradients and,
just as importantly, flag corrupted ones."""

import time

import numpy as np
import pytest

from eeg2bold import autodiff as ad
from eeg2bold import gradcheck as gc
from eeg2bold.errors import ConfigError, NumericError


def test_mean_square_hand_case():
    from eeg2bold.objective import mse_loss

    x = ad.Tensor(np.asarray([1.0, 2.0]), requires_grad=True)
    zero = ad.Tensor(np.zeros(2))

    def loss(v, tape):
        return mse_loss(zero, v, tape)

    # mse(0, x) = (x1^2 + x2^2) / 2, gradient [x1, x2] = [1, 2]
    assert gc.grad_check(loss, x, eps=1e-5) < 1e-8
    x.zero_grad()
    tape = ad.Tape()
    tape.backward(loss(x, tape))
    np.testing.assert_allclose(x.grad, [1.0, 2.0], rtol=1e-12)


def test_sine_gradient_at_zero_is_one():
    x = ad.Tensor(np.asarray([0.0]), requires_grad=True)

    def f(v, tape):
        return ad.wsum(ad.sine(v, 1.0, tape), np.ones(1), tape)

    tape = ad.Tape()
    tape.backward(f(x, tape))
    np.testing.assert_allclose(x.grad, [1.0], rtol=1e-12)
    assert gc.grad_check(f, x) < 1e-10


def test_grad_check_requires_float64():
    x = ad.Tensor(np.ones(3, dtype=np.float32), requires_grad=True)
    with pytest.raises(ConfigError):
        gc.grad_check(lambda v, tape: ad.wsum(v, np.ones(3), tape), x)


def test_grad_check_reports_non_finite_with_location():
    x = ad.Tensor(np.asarray([1.0]), requires_grad=True)
    calls = {"n": 0}

    def f(v, tape):
        calls["n"] += 1
        if calls["n"] == 1:
            return ad.wsum(v, np.ones(1), tape)
        return ad.Tensor(np.asarray(np.inf))

    with pytest.raises(NumericError) as e:
        gc.grad_check(f, x)
    assert "coordinate 0" in str(e.value)


def test_every_primitive_passes_across_seeds():
    results = gc.run_op_checks(seeds=(0, 1, 2, 3, 4))
    names = {r["op"] for r in results}
    assert {"affine", "sine", "conv1d", "maxpool1d", "upsample_nn",
            "layer_norm", "gelu", "dropout"} <= names
    for r in results:
        assert r["passed"], f"{r['op']} max rel err {r['max_rel_err']:.3e}"
        assert r["max_rel_err"] <= 1e-4


def test_corrupted_backward_is_caught_and_named(monkeypatch):
    real_sine = ad.sine

    def broken_sine(x, omega0, tape=None):
        out = real_sine(x, omega0)
        out.requires_grad = tape is not None and x.requires_grad
        if out.requires_grad:
            def backward():
                # wrong: drops the omega0 chain-rule factor
                g = out.grad if out.grad is not None else np.zeros_like(out.data)
                ad.accumulate(x, g * np.cos(omega0 * x.data))
            tape.record("sine", backward)
        return out

    monkeypatch.setattr(ad, "sine", broken_sine)
    results = {r["op"]: r for r in gc.run_op_checks(seeds=(0,))}
    assert not results["sine"]["passed"]
    assert results["sine"]["max_rel_err"] > 1e-2
    # the corruption is local: every other op still passes
    for name, r in results.items():
        if name != "sine":
            assert r["passed"], name


def test_full_model_check_passes_quickly():
    t0 = time.monotonic()
    errors = gc.full_model_check(seed=0)
    elapsed = time.monotonic() - t0
    assert max(errors.values()) <= 1e-4
    assert elapsed < 60.0
    # every parameter of the shrunken model is covered
    assert any(name.startswith("siren.") for name in errors)
    assert any(name.startswith("encoder.") for name in errors)
    assert any(name.startswith("decoder.") for name in errors)
    assert any(name.startswith("head.") for name in errors)
