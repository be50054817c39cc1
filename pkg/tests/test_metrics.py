import math
import stat

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from skimage.metrics import structural_similarity

from clcgen.errors import (
    ParameterError, ScorerParseError, ShapeError, UndefinedMetricError, UnsupportedMetricError,
)
from clcgen.metrics import (
    KeypointSet, MetricRow, ScorerRegistry, akd, akd_adjust, clip_mean, external_score,
    joint_validity, psnr_float, psnr_int, rows_to_csv, ssim, tje, tje_curve, to_luma, toy_keypoints,
)
from clcgen.video import VideoClip


def naive_tje(real, gen, delta):
    """Pixel-loop reference."""
    n, h, w, c = real.shape
    per_t = []
    for t in range(n - delta):
        acc = 0.0
        for y in range(h):
            for x in range(w):
                for ch in range(c):
                    dr = float(real[t + delta, y, x, ch]) - float(real[t, y, x, ch])
                    dg = float(gen[t + delta, y, x, ch]) - float(gen[t, y, x, ch])
                    acc += abs(dr - dg)
        per_t.append(acc / (h * w * c))
    return per_t


def one_pixel_clip(values):
    return VideoClip(np.array(values, dtype=np.uint8).reshape(-1, 1, 1, 1).repeat(3, axis=-1))


def random_clip(rng, n=5, h=8, w=8):
    return VideoClip(rng.integers(0, 256, (n, h, w, 3), dtype=np.uint8))


def test_tje_hand_example():
    r = tje(one_pixel_clip([0, 2, 4]), one_pixel_clip([0, 1, 4]), 1)
    np.testing.assert_array_equal(r.per_t_errors, [1.0, 1.0])
    assert r.mean_error == 1.0


def test_tje_identical_is_zero():
    clip = random_clip(np.random.default_rng(0), n=10)
    for d in range(1, 10):
        assert tje(clip, clip, d).mean_error == 0.0


@pytest.mark.parametrize("delta", [1, 2, 4])
def test_tje_matches_pixel_loop(delta):
    rng = np.random.default_rng(delta)
    a, b = random_clip(rng), random_clip(rng)
    res = tje(a, b, delta)
    np.testing.assert_allclose(res.per_t_errors, naive_tje(a.frames, b.frames, delta), atol=1e-9)
    assert len(res.per_t_errors) == 5 - delta


def test_tje_symmetric():
    rng = np.random.default_rng(3)
    a, b = random_clip(rng, n=9), random_clip(rng, n=9)
    for d in (1, 2, 4, 8):
        assert tje(a, b, d).mean_error == tje(b, a, d).mean_error


def test_tje_curve_four_offsets():
    rng = np.random.default_rng(4)
    a, b = random_clip(rng, n=12), random_clip(rng, n=12)
    results = tje_curve(a, b)
    assert [r.delta for r in results] == [1, 2, 4, 8]


def test_tje_errors():
    rng = np.random.default_rng(5)
    a = random_clip(rng, n=4)
    with pytest.raises(ParameterError):
        tje(a, a, 4)
    with pytest.raises(ParameterError):
        tje(a, a, 0)
    with pytest.raises(ShapeError):
        tje(a, random_clip(rng, n=4, h=6), 1)


def uniform(v, shape=(16, 16, 3)):
    return np.full(shape, v, dtype=np.uint8)


def test_psnr_float_values():
    assert psnr_float(uniform(3), uniform(3)) == math.inf
    assert psnr_float(uniform(0), uniform(255)) == 0.0
    assert psnr_float(uniform(0), uniform(128)) == pytest.approx(10 * math.log10(255 ** 2 / 128 ** 2), abs=1e-12)
    assert psnr_float(uniform(0), uniform(128)) == pytest.approx(5.987, abs=1e-3)
    with pytest.raises(ShapeError):
        psnr_float(uniform(0), uniform(0, (4, 4, 3)))


def test_psnr_int_wraps():
    assert psnr_int(uniform(9), uniform(9)) == math.inf
    # 0 - 255 wraps to 1 in uint8, so MSE is 1
    assert psnr_int(uniform(0), uniform(255)) == pytest.approx(10 * math.log10(255 ** 2), abs=1e-12)
    assert psnr_int(uniform(0), uniform(255)) == pytest.approx(48.13, abs=0.01)
    with pytest.raises(ShapeError):
        psnr_int(uniform(0), uniform(0, (4, 4, 3)))


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_psnr_variants_agree_without_wrap(seed):
    rng = np.random.default_rng(seed)
    a = rng.integers(15, 241, (8, 8, 3))
    b = np.clip(a + rng.integers(-15, 16, a.shape), 0, 255)
    a, b = a.astype(np.uint8), b.astype(np.uint8)
    pf, pi = psnr_float(a, b), psnr_int(a, b)
    if math.isinf(pf):
        assert math.isinf(pi)
    else:
        assert pi == pytest.approx(pf, abs=1e-9)


def test_psnr_float_decreases_with_mse():
    base = uniform(100)
    values = [psnr_float(base, uniform(100 + d)) for d in (1, 2, 5, 20, 100)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_ssim_basic():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, (32, 32, 3), dtype=np.uint8)
    assert ssim(img, img) == pytest.approx(1.0, abs=1e-12)
    assert ssim(uniform(0, (32, 32, 3)), uniform(255, (32, 32, 3))) < 0.01
    noisy = np.clip(img.astype(int) + rng.integers(-20, 21, img.shape), 0, 255).astype(np.uint8)
    val = ssim(img, noisy)
    assert 0.01 < val < 1.0
    with pytest.raises(ParameterError):
        ssim(uniform(0, (8, 8, 3)), uniform(0, (8, 8, 3)))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_ssim_matches_skimage_and_bounds(seed):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 256, (24, 20, 3), dtype=np.uint8)
    b = rng.integers(0, 256, (24, 20, 3), dtype=np.uint8)
    ref = structural_similarity(to_luma(a), to_luma(b), data_range=255.0, gaussian_weights=True,
                                sigma=1.5, use_sample_covariance=False)
    val = ssim(a, b)
    assert -1.0 <= val <= 1.0
    assert val == pytest.approx(ref, abs=1e-9)


def test_clip_mean_propagates_inf():
    clip = VideoClip(np.stack([uniform(1), uniform(2)]))
    assert clip_mean(psnr_float, clip, clip) == math.inf


def kp(points, valid=None):
    pts = np.asarray(points, dtype=float).reshape(len(points), 1, 2)
    return KeypointSet({"torso": pts}, {"torso": np.ones(len(points), bool) if valid is None else np.asarray(valid)})


def test_akd_examples():
    a = kp([[1, 2], [3, 4]])
    assert akd(a, a, "torso") == (0.0, 1.0)
    assert akd(kp([[0, 0]]), kp([[3, 4]]), "torso") == (5.0, 1.0)
    real = kp([[0, 0]] * 4)
    gen = kp([[3, 4], [0, 1], [100, 100], [100, 100]], valid=[True, True, False, False])
    raw, frac = akd(real, gen, "torso")
    assert frac == 0.5
    assert raw == pytest.approx(3.0)


def test_akd_joint_mask_and_undefined():
    real = kp([[0, 0]] * 3)
    gen = kp([[3, 4], [0, 1], [0, 2]])
    other = kp([[0, 0]] * 3, valid=[False, True, True])
    mask = joint_validity([real, gen, other], "torso")
    raw, frac = akd(real, gen, "torso", mask)
    assert raw == pytest.approx(1.5) and frac == 1.0
    with pytest.raises(UndefinedMetricError):
        akd(real, kp([[0, 0]] * 3, valid=[False] * 3), "torso")


def test_akd_adjust():
    assert round(akd_adjust(1.45, 0.95207), 3) == 1.523
    assert round(akd_adjust(2.91, 0.28898), 3) == 10.070
    assert akd_adjust(2.5, 1.0) == 2.5
    with pytest.raises(UndefinedMetricError):
        akd_adjust(1.0, 0.0)


@settings(max_examples=50, deadline=None)
@given(raw=st.floats(0, 100), f1=st.floats(0.01, 1), f2=st.floats(0.01, 1))
def test_akd_adjust_monotone(raw, f1, f2):
    lo, hi = sorted((f1, f2))
    assert akd_adjust(raw, lo) >= akd_adjust(raw, hi) >= raw - 1e-12


def disc_frame(cx, cy, r, color=(220, 40, 40), bg=(20, 20, 20), size=64):
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    frame = np.empty((size, size, 3), np.uint8)
    frame[:] = bg
    frame[(xx - cx) ** 2 + (yy - cy) ** 2 <= r * r] = color
    return frame


def test_toy_keypoints():
    clip = VideoClip(np.stack([disc_frame(32, 20, 6), uniform(20, (64, 64, 3))]))
    ks = toy_keypoints(clip)
    x, y = ks.landmarks["torso"][0, 0]
    assert abs(x - 32) <= 0.5 and abs(y - 20) <= 0.5
    assert ks.valid["torso"].tolist() == [True, False]
    full = VideoClip(uniform(200, (1, 64, 64, 3)))
    ks = toy_keypoints(full, background=np.zeros(3))
    np.testing.assert_allclose(ks.landmarks["torso"][0, 0], [32.0, 32.0])


def test_external_score_registry(tmp_path):
    reg = ScorerRegistry()
    with pytest.raises(UnsupportedMetricError):
        external_score("fvd", tmp_path, tmp_path, reg)
    reg.register("fvd", lambda r, g: "203.11\n")
    assert external_score("fvd", tmp_path, tmp_path, reg) == 203.11
    reg.register("fid_vid", lambda r, g: "not a number")
    with pytest.raises(ScorerParseError):
        external_score("fid_vid", tmp_path, tmp_path, reg)


def test_external_score_executable_discovery(tmp_path):
    exe = tmp_path / "fvd"
    exe.write_text("#!/bin/sh\necho 203.11\n")
    exe.chmod(exe.stat().st_mode | stat.S_IEXEC)
    reg = ScorerRegistry(search_path=str(tmp_path))
    assert external_score("fvd", tmp_path, tmp_path, reg) == 203.11


def test_csv_schema():
    text = rows_to_csv([MetricRow("v0", "clc", "psnr_float", math.inf),
                        MetricRow("v0", "clc", "tje", 1.5, delta=4),
                        MetricRow("v0", "clc", "akd_torso", 2.0, detection_fraction=0.5)])
    lines = text.splitlines()
    assert lines[0] == "video_id,method,metric,delta,value,detection_fraction"
    assert lines[1] == "v0,clc,psnr_float,,inf,"
    assert lines[2] == "v0,clc,tje,4,1.5,"
    assert lines[3] == "v0,clc,akd_torso,,2.0,0.5"
