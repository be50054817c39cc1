import math
import tracemalloc

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clcgen.diffusion import make_linear_schedule
from clcgen.errors import NumericDivergenceError, ParameterError, ShapeError
from clcgen.sampler import (
    ConditioningBundle, FeedbackConfig, NoiseMode, feedback_update, generate_unbounded,
    generate_video,
)

SHAPE = (4, 6, 6)
SCHED = make_linear_schedule(1000, 1e-4, 0.02, 10)


class SmoothDenoiser:
    """Deterministic nonlinear stand-in for a trained network."""

    def __init__(self):
        self.calls = []

    def __call__(self, latent, t, appearance, motion):
        self.calls.append((latent.copy(), t, appearance is None))
        a = 0.0 if appearance is None else float(appearance)
        return 0.5 * np.tanh(latent) + 0.1 * a * math.sqrt(t / 1000)


def motions(n, rng=None, same=False):
    rng = rng or np.random.default_rng(0)
    if same:
        m = rng.standard_normal(SHAPE) * 0.3
        return [m] * n
    return [rng.standard_normal(SHAPE) * 0.3 for _ in range(n)]


def test_feedback_update_examples():
    zt, z0 = np.array([1.0, -1.0]), np.array([3.0, 1.0])
    np.testing.assert_allclose(feedback_update(zt, z0, 0.05), [1.1, -0.9], atol=1e-15)
    np.testing.assert_array_equal(feedback_update(zt, z0, 0.0), zt)
    np.testing.assert_array_equal(feedback_update(zt, z0, 1.0), z0)
    with pytest.raises(ShapeError):
        feedback_update(zt, np.zeros(3), 0.1)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), beta=st.floats(0, 1))
def test_feedback_geometry(seed, beta):
    rng = np.random.default_rng(seed)
    zt, z0 = rng.standard_normal((2, 3, 4, 4))
    x = feedback_update(zt, z0, beta)
    assert np.linalg.norm(x - zt) == pytest.approx(beta * np.linalg.norm(z0 - zt), rel=1e-9, abs=1e-12)
    # x lies on the segment from z_T to z0
    np.testing.assert_allclose(np.linalg.norm(x - zt) + np.linalg.norm(z0 - x), np.linalg.norm(z0 - zt), rtol=1e-9)


def test_feedback_contraction_to_fixed_point():
    # frame map z0 = a*x + c, iterated through the feedback law; contraction factor beta*a
    rng = np.random.default_rng(3)
    zt, c = rng.standard_normal((2, 50))
    a, beta = 0.8, 0.5
    x = zt.copy()
    for _ in range(200):
        x = feedback_update(zt, a * x + c, beta)
    fixed = ((1 - beta) * zt + beta * c) / (1 - beta * a)
    np.testing.assert_allclose(x, fixed, atol=1e-6)


def test_config_validation():
    with pytest.raises(ParameterError):
        FeedbackConfig(beta=1.5)
    with pytest.raises(ParameterError):
        FeedbackConfig(beta=-0.1)
    with pytest.raises(ValueError):
        FeedbackConfig(noise_mode="sometimes")
    assert FeedbackConfig(noise_mode="independent_per_frame").noise_mode is NoiseMode.INDEPENDENT


def test_beta_zero_identical_motion_gives_identical_frames():
    cond = ConditioningBundle(1.0, motions(5, same=True))
    tr = generate_video(SmoothDenoiser(), cond, SCHED, FeedbackConfig(beta=0.0, seed=4), 5)
    for z in tr.z0_hats[1:]:
        np.testing.assert_array_equal(z, tr.z0_hats[0])
    for x in tr.inputs:
        np.testing.assert_array_equal(x, tr.z_T)


def test_generation_is_deterministic():
    cond = ConditioningBundle(1.0, motions(6))
    cfg = FeedbackConfig(beta=0.05, seed=11)
    a = generate_video(SmoothDenoiser(), cond, SCHED, cfg, 6)
    b = generate_video(SmoothDenoiser(), cond, SCHED, cfg, 6)
    for field in ("z0_hats", "inputs", "anchors"):
        for u, v in zip(getattr(a, field), getattr(b, field)):
            np.testing.assert_array_equal(u, v)
    c = generate_video(SmoothDenoiser(), cond, SCHED, FeedbackConfig(beta=0.05, seed=12), 6)
    assert not np.array_equal(a.z_T, c.z_T)


def test_trace_follows_feedback_law_in_fixed_mode():
    cond = ConditioningBundle(1.0, motions(4))
    beta = 0.1
    tr = generate_video(SmoothDenoiser(), cond, SCHED, FeedbackConfig(beta=beta, seed=2), 4)
    assert len(tr) == 4 and len(tr.inputs) == len(tr.anchors) == 4
    np.testing.assert_array_equal(tr.inputs[0], tr.z_T)
    for k in range(1, 4):
        np.testing.assert_array_equal(tr.anchors[k], tr.z_T)
        np.testing.assert_allclose(tr.inputs[k], tr.z_T + beta * (tr.z0_hats[k - 1] - tr.z_T), atol=1e-15)


def test_independent_mode_anchors_each_frame_to_its_own_noise():
    cond = ConditioningBundle(1.0, motions(4))
    beta = 0.2
    tr = generate_video(SmoothDenoiser(), cond, SCHED, FeedbackConfig(beta=beta, seed=2,
                                                                      noise_mode="independent_per_frame"), 4)
    np.testing.assert_array_equal(tr.inputs[0], tr.anchors[0])
    for k in range(1, 4):
        assert not np.array_equal(tr.anchors[k], tr.anchors[k - 1])
        np.testing.assert_allclose(tr.inputs[k], tr.anchors[k] + beta * (tr.z0_hats[k - 1] - tr.anchors[k]),
                                   atol=1e-15)


def test_motion_is_added_to_network_input_and_cfg_uses_null_branch():
    den = SmoothDenoiser()
    ms = motions(2)
    tr = generate_video(den, ConditioningBundle(1.0, ms), SCHED, FeedbackConfig(beta=0.0, seed=0, cfg_scale=3.5), 2)
    first_cond, t, is_null = den.calls[0]
    assert t == SCHED.ddim_steps[0] and not is_null
    np.testing.assert_allclose(first_cond, tr.z_T + ms[0])
    uncond, _, is_null = den.calls[1]
    assert is_null
    np.testing.assert_array_equal(uncond, tr.z_T)
    assert len(den.calls) == 2 * 2 * SCHED.ddim_count
    den1 = SmoothDenoiser()
    generate_video(den1, ConditioningBundle(1.0, ms), SCHED, FeedbackConfig(cfg_scale=1.0), 2)
    assert len(den1.calls) == 2 * SCHED.ddim_count


def test_errors():
    with pytest.raises(ParameterError):
        generate_video(SmoothDenoiser(), ConditioningBundle(1.0, motions(3)), SCHED, FeedbackConfig(), 4)
    with pytest.raises(ParameterError):
        generate_video(SmoothDenoiser(), ConditioningBundle(1.0, motions(3)), SCHED, FeedbackConfig(), 0)

    def exploding(latent, t, appearance, motion):
        return np.full_like(latent, np.inf if t < 500 else 0.0)

    with pytest.raises(NumericDivergenceError) as info:
        generate_video(exploding, ConditioningBundle(1.0, motions(2)), SCHED, FeedbackConfig(cfg_scale=1.0), 2)
    assert info.value.frame == 0
    assert info.value.timestep == max(t for t in SCHED.ddim_steps if t < 500)


def test_unbounded_prefix_matches_batch_and_empty_stream():
    ms = motions(12)
    cfg = FeedbackConfig(beta=0.05, seed=9)
    batch = generate_video(SmoothDenoiser(), ConditioningBundle(1.0, ms), SCHED, cfg, 12)
    streamed = list(generate_unbounded(SmoothDenoiser(), iter(ms), SCHED, cfg, 1.0))
    assert len(streamed) == 12
    for a, b in zip(streamed, batch.z0_hats):
        np.testing.assert_array_equal(a, b)
    assert list(generate_unbounded(SmoothDenoiser(), iter([]), SCHED, cfg, 1.0)) == []


def smooth(latent, t, appearance, motion):
    return 0.5 * np.tanh(latent)


@pytest.mark.parametrize("mode", ["fixed_zT", "independent_per_frame"])
def test_unbounded_memory_is_constant(mode):
    rng = np.random.default_rng(0)

    def stream(n):
        for _ in range(n):
            yield rng.standard_normal(SHAPE)

    resident = []
    cfg = FeedbackConfig(beta=0.05, seed=1, noise_mode=mode, cfg_scale=1.0)
    probe = lambda sampler: resident.append(sampler.resident_latents())
    tracemalloc.start()
    snapshots = []
    for i, _ in enumerate(generate_unbounded(smooth, stream(400), SCHED, cfg, 1.0, probe=probe)):
        if i in (50, 399):
            snapshots.append(tracemalloc.get_traced_memory()[0])
    tracemalloc.stop()
    assert max(resident) <= 3
    # only the probe list grows (one small int slot per frame)
    assert snapshots[1] - snapshots[0] < 16 * 1024
