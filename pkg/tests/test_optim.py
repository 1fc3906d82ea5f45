import numpy as np
import pytest

from mtlab.numerics import ParamSet, AdamW, warmup_invsqrt_lr


def test_schedule_peak_at_warmup():
    peak, warm = 2e-3, 100
    lrs = [warmup_invsqrt_lr(s, peak, warm) for s in range(1, 301)]
    assert max(lrs) == pytest.approx(peak)
    assert int(np.argmax(lrs)) + 1 == warm
    # linear ramp then monotone decay
    assert lrs[10] == pytest.approx(peak * 11 / warm)
    assert all(a >= b for a, b in zip(lrs[warm - 1:], lrs[warm:]))


def test_schedule_rejects_step_zero():
    with pytest.raises(ValueError):
        warmup_invsqrt_lr(0, 1e-3, 10)


def _quadratic_setup(seed=0):
    rng = np.random.default_rng(seed)
    params = ParamSet()
    p = params.add("x", rng.normal(size=8))
    target = rng.normal(size=8)
    return params, p, target


def test_adamw_optimizes_quadratic():
    params, p, target = _quadratic_setup()
    opt = AdamW(params, peak_lr=0.05, warmup_steps=10, weight_decay=0.0)
    first = float(np.sum((p.value - target) ** 2))
    for _ in range(300):
        params.zero_grad()
        p.grad += 2.0 * (p.value - target)
        opt.step()
    assert float(np.sum((p.value - target) ** 2)) < 1e-3 * first


def test_adamw_skips_nonfinite_update():
    params, p, _ = _quadratic_setup()
    opt = AdamW(params, peak_lr=0.1, warmup_steps=5)
    before = p.value.copy()
    p.grad += np.nan
    out = opt.step()
    assert out is None
    assert opt.skipped_steps == 1
    assert opt.step_count == 1          # schedule still advances
    assert np.array_equal(p.value, before)


def test_adamw_state_roundtrip_bitwise():
    params, p, target = _quadratic_setup(seed=1)
    opt = AdamW(params, peak_lr=0.01, warmup_steps=5)
    for _ in range(7):
        params.zero_grad()
        p.grad += 2.0 * (p.value - target)
        opt.step()
    saved = {k: v.copy() for k, v in opt.state_arrays().items()}
    value7 = p.value.copy()

    params2, p2, _ = _quadratic_setup(seed=1)
    p2.value[...] = value7
    opt2 = AdamW(params2, peak_lr=0.01, warmup_steps=5)
    opt2.load_state_arrays(saved)
    opt2.step_count = opt.step_count

    for o, q in ((opt, p), (opt2, p2)):
        o.params.zero_grad()
        q.grad += 2.0 * (q.value - target)
        o.step()
    assert np.array_equal(p.value, p2.value)


def test_adamw_weight_decay_shrinks_params():
    params = ParamSet()
    p = params.add("x", np.ones(4) * 10.0)
    opt = AdamW(params, peak_lr=0.1, warmup_steps=1, weight_decay=0.1)
    for _ in range(50):
        params.zero_grad()  # zero task gradient: pure decay
        opt.step()
    assert np.all(np.abs(p.value) < 10.0)
