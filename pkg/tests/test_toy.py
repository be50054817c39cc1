import json

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from clcgen.diffusion import cfg_combine, make_linear_schedule
from clcgen.errors import ParameterError, ShapeError
from clcgen.metrics import shape_mask, toy_keypoints
from clcgen.toy.codec import APPEARANCE_DIM, BlockCodec, MotionEncoder, appearance_features
from clcgen.toy.model import ModelConfig, TorchDenoiser, ToyDenoiser, load_checkpoint, save_checkpoint
from clcgen.toy.scene import SceneSpec, Trajectory, random_scene, render_clip
from clcgen.toy.train import TrainHyper, train_toy

SCHED = make_linear_schedule()


# --------------------------------------------------------------------------- scenes

def test_static_trajectory_gives_identical_frames():
    clip = render_clip(SceneSpec(), 6)
    assert len(clip) == 6
    for f in clip.frames[1:]:
        np.testing.assert_array_equal(f, clip.frames[0])


def test_linear_clip_length_and_fps():
    spec = SceneSpec(trajectory=Trajectory("linear", (15.0, 32.0), (0.6, 0.0)))
    clip = render_clip(spec, 50, fps=20)
    assert len(clip) == 50 and clip.fps == 20 and clip.resolution == (64, 64)


def test_render_errors():
    with pytest.raises(ParameterError):
        render_clip(SceneSpec(), 0)
    with pytest.raises(ParameterError):
        render_clip(SceneSpec(trajectory=Trajectory("linear", (32.0, 32.0), (3.0, 0.0))), 20)
    with pytest.raises(ParameterError):
        SceneSpec(radius=0)


def test_keypoint_follows_trajectory():
    spec = SceneSpec(trajectory=Trajectory("linear", (14.0, 20.0), (1.0, 0.5)), background=(30, 30, 30))
    clip = render_clip(spec, 30)
    kp = toy_keypoints(clip)
    expected = np.array([spec.trajectory(k) for k in range(30)])
    assert kp.valid["torso"].all()
    np.testing.assert_allclose(kp.landmarks["torso"][:, 0], expected, atol=0.35)


def test_scene_dict_round_trip():
    spec = random_scene(np.random.default_rng(4), 24)
    back = SceneSpec.from_dict(json.loads(json.dumps(spec.to_dict())))
    assert back == spec
    np.testing.assert_array_equal(render_clip(back, 5).frames, render_clip(spec, 5).frames)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_random_scenes_stay_inside_and_are_detectable(seed):
    spec = random_scene(np.random.default_rng(seed), 50)
    clip = render_clip(spec, 50)
    kp = toy_keypoints(clip)
    assert kp.valid["torso"].all()
    err = np.linalg.norm(kp.landmarks["torso"][:, 0] - np.array([spec.trajectory(k) for k in range(50)]), axis=1)
    assert err.max() < 1.0


# --------------------------------------------------------------------------- codec

@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), f=st.sampled_from([2, 4]))
def test_codec_round_trip(seed, f):
    frame = np.random.default_rng(seed).integers(0, 256, (64, 64, 3), dtype=np.uint8)
    codec = BlockCodec(f)
    out = codec.decode(codec.encode(frame))
    assert np.abs(out.astype(int) - frame).max() <= 1


def test_codec_float_inverse_is_exact():
    img = np.random.default_rng(0).uniform(-1, 1, (64, 64, 3))
    codec = BlockCodec()
    np.testing.assert_allclose(codec.from_latent(codec.to_latent(img)), img, atol=1e-12)


def test_codec_shapes_and_errors():
    codec = BlockCodec(4)
    grid = codec.encode(np.zeros((64, 64, 3), np.uint8))
    assert grid.shape == (48, 16, 16) and grid.downsample_factor == 4
    with pytest.raises(ShapeError):
        codec.encode(np.zeros((63, 64, 3), np.uint8))
    with pytest.raises(ParameterError):
        BlockCodec(3)


def test_motion_encoding_peaks_at_keypoint():
    codec = BlockCodec()
    m = MotionEncoder(codec)((40.5, 12.5), (64, 64))
    heat = codec.from_latent(m)[..., 0]
    y, x = np.unravel_index(np.argmax(heat), heat.shape)
    assert (x, y) == (40, 12)
    assert heat.max() == pytest.approx(MotionEncoder().gain, rel=1e-9)


def test_appearance_features_describe_the_shape():
    spec = SceneSpec(shape="square", color=(200, 40, 40), radius=6, background=(40, 90, 40))
    frame = render_clip(spec, 1).frames[0]
    a = appearance_features(frame)
    assert a.shape == (APPEARANCE_DIM,)
    np.testing.assert_allclose((a[:3] + 1) * 127.5, [200, 40, 40], atol=3)
    np.testing.assert_allclose((a[5:] + 1) * 127.5, [40, 90, 40], atol=1)
    disc = appearance_features(render_clip(SceneSpec(radius=6), 1).frames[0])
    assert a[4] > 0.5 > disc[4]


# --------------------------------------------------------------------------- network and training

def test_denoiser_shape_size_and_eval_determinism():
    net = ToyDenoiser(ModelConfig(width=32))
    assert net.n_params() < 2_000_000
    den = TorchDenoiser(net)
    rng = np.random.default_rng(0)
    z, m = rng.standard_normal((2, 48, 16, 16))
    a = rng.standard_normal(APPEARANCE_DIM)
    out = den(z, 500, a, m)
    assert out.shape == z.shape
    np.testing.assert_array_equal(out, den(z, 500, a, m))
    vc, vu = den.predict_pair(z + m, z, 500, a, m)
    np.testing.assert_allclose(vc, den(z + m, 500, a, m), atol=1e-5)
    np.testing.assert_allclose(vu, den(z, 500, None, None), atol=1e-5)


def _clips(n, frames=8, seed=0):
    rng = np.random.default_rng(seed)
    return [render_clip(random_scene(rng, frames), frames) for _ in range(n)]


def test_seeded_training_is_reproducible():
    clips = _clips(2)
    hyper = TrainHyper(steps=12, batch_size=4, width=16, eval_every=4)
    _, h1 = train_toy(clips, SCHED, hyper)
    _, h2 = train_toy(clips, SCHED, hyper)
    assert h1.train_loss == h2.train_loss and h1.val_loss == h2.val_loss


def test_training_rejects_empty_dataset():
    with pytest.raises(ParameterError):
        train_toy([], SCHED, TrainHyper(steps=1))


def test_without_conditioning_cfg_has_no_effect():
    net, _ = train_toy(_clips(2), SCHED, TrainHyper(steps=30, batch_size=4, width=16, p_drop=1.0))
    den = TorchDenoiser(net)
    rng = np.random.default_rng(1)
    z, m = rng.standard_normal((2, 48, 16, 16))
    a = rng.standard_normal(APPEARANCE_DIM)
    # the zero-initialized conditioning pathways never receive a gradient
    vc, vu = den(z, 700, a, m), den(z, 700, None, None)
    np.testing.assert_array_equal(vc, vu)
    for scale in (0.0, 3.5, 7.0):
        np.testing.assert_array_equal(cfg_combine(vu, vc, scale), vc)


@pytest.mark.slow
def test_overfit_single_clip():
    clip = _clips(1, frames=6, seed=3)
    _, hist = train_toy(clip, SCHED, TrainHyper(steps=2000, batch_size=8, width=16, eval_every=1000, lr=3e-3))
    assert hist.val_loss[-1] < 0.1 * hist.val_loss[0]


def test_checkpoint_round_trip(tmp_path):
    net = ToyDenoiser(ModelConfig(width=16))
    path = save_checkpoint(net, tmp_path / "m.npz", {"schedule_fingerprint": SCHED.fingerprint(), "dataset_seed": 7})
    manifest = json.loads(path.with_suffix(".json").read_text())
    assert manifest["dataset_seed"] == 7 and manifest["model_config"]["width"] == 16
    assert manifest["parameters"]["conv_in.weight"] == list(net.conv_in.weight.shape)
    back, _ = load_checkpoint(path)
    for (k, v), (k2, v2) in zip(net.state_dict().items(), back.state_dict().items()):
        assert k == k2 and torch.equal(v, v2)


# --------------------------------------------------------------------------- trained reference model

def test_generated_shape_follows_driving_keypoints(reference_suite):
    errs = []
    for real, gen in zip(reference_suite.real, reference_suite.generated):
        kr, kg = toy_keypoints(real), toy_keypoints(gen)
        ok = kr.valid["torso"] & kg.valid["torso"]
        assert ok.mean() > 0.9
        errs.append(np.linalg.norm(kr.landmarks["torso"][ok, 0] - kg.landmarks["torso"][ok, 0], axis=1).mean())
    assert np.mean(errs) < 2.0


def _shape_color(trace, codec):
    colors = []
    for z in trace.z0_hats:
        frame = codec.decode(z)
        mask = shape_mask(frame)
        if mask.sum() > 20:
            colors.append(frame[mask].mean(axis=0))
    assert len(colors) >= 10
    return np.mean(colors, axis=0)


def test_appearance_transfers_to_another_trajectory(reference_runs):
    from clcgen.sampler import FeedbackConfig, generate_video
    from clcgen.toy.suite import conditioning_for, validation_scenes

    codec = BlockCodec()
    enc = MotionEncoder(codec)
    a_spec, b_spec = validation_scenes(2, 12)
    a_clip, b_clip = render_clip(a_spec, 12), render_clip(b_spec, 12)

    def reenact(source, driving):
        cond = conditioning_for(source.frames[0], driving, enc)
        return _shape_color(generate_video(reference_runs.denoiser, cond, reference_runs.sched,
                                           FeedbackConfig(beta=0.05), 12), codec)

    # color follows the appearance source, not the driving video
    transfer, self_a = reenact(a_clip, b_clip), reenact(a_clip, a_clip)
    np.testing.assert_allclose(transfer, self_a, atol=10)
    a_true = a_clip.frames[0][shape_mask(a_clip.frames[0])].mean(axis=0)
    b_true = b_clip.frames[0][shape_mask(b_clip.frames[0])].mean(axis=0)
    assert np.linalg.norm(transfer - a_true) < np.linalg.norm(transfer - b_true)
