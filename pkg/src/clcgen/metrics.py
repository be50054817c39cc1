"""Video evaluation: temporal jittering error, PSNR variants, SSIM, keypoint distance.

Frames are 8-bit RGB arrays ``(H, W, 3)``; clips are :class:`~clcgen.video.VideoClip`.
Learned metrics (FVD, FID-VID, LPIPS, ...) are only reachable through
registered external scorers.
"""
from __future__ import annotations

import csv
import io
import math
import os
import shutil
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import ndimage

from .errors import (
    ParameterError, ScorerParseError, ShapeError, UndefinedMetricError, UnsupportedMetricError,
)
from .video import VideoClip

DEFAULT_DELTAS = (1, 2, 4, 8)
REGIONS = ("face", "hands", "torso", "lip")
SCORER_PATH_ENV = "CLCGEN_SCORER_PATH"


# --------------------------------------------------------------------------- TJE

@dataclass
class TJEResult:
    delta: int
    per_t_errors: np.ndarray
    mean_error: float


def tje(real: VideoClip, gen: VideoClip, delta: int) -> TJEResult:
    """Temporal jittering error at frame offset ``delta``.

    For every valid ``t`` the frame-difference maps ``I[t+delta] - I[t]`` of
    both videos are compared by mean absolute difference over all pixels and
    channels jointly, on the 0-255 scale.
    """
    r = np.asarray(real.frames, dtype=np.float64)
    g = np.asarray(gen.frames, dtype=np.float64)
    if r.shape[1:] != g.shape[1:]:
        raise ShapeError(f"resolution mismatch: {r.shape[1:]} vs {g.shape[1:]}")
    if r.shape[0] != g.shape[0]:
        raise ShapeError(f"frame count mismatch: {r.shape[0]} vs {g.shape[0]}")
    n = r.shape[0]
    if not 1 <= delta <= n - 1:
        raise ParameterError(f"delta must be in [1, {n - 1}], got {delta}")
    d_real = r[delta:] - r[:-delta]
    d_gen = g[delta:] - g[:-delta]
    per_t = np.abs(d_real - d_gen).reshape(n - delta, -1).mean(axis=1)
    return TJEResult(int(delta), per_t, float(per_t.mean()))


def tje_curve(real: VideoClip, gen: VideoClip, deltas: Iterable[int] = DEFAULT_DELTAS) -> list[TJEResult]:
    return [tje(real, gen, d) for d in deltas]


# --------------------------------------------------------------------------- PSNR / SSIM

def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr_float(a: np.ndarray, b: np.ndarray) -> float:
    a, b = _pair(a, b)
    mse = np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2)
    if mse == 0:
        return math.inf
    return float(10.0 * math.log10(255.0 ** 2 / mse))


def psnr_int(a: np.ndarray, b: np.ndarray) -> float:
    """PSNR with the legacy uint8 pipeline: difference and square both wrap mod 256.

    Intentionally defective; kept so the inflation relative to
    :func:`psnr_float` can be reproduced.
    """
    a, b = _pair(a, b)
    a8, b8 = a.astype(np.uint8), b.astype(np.uint8)
    diff = a8 - b8
    sq = diff * diff
    mse = np.mean(sq, dtype=np.float64)
    if mse == 0:
        return math.inf
    return float(10.0 * math.log10(255.0 ** 2 / mse))


def to_luma(img: np.ndarray) -> np.ndarray:
    """BT.601 luma on the 0-255 scale; 2-D inputs pass through."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    return img[..., 0] * 0.299 + img[..., 1] * 0.587 + img[..., 2] * 0.114


SSIM_WIN = 11
SSIM_SIGMA = 1.5


def ssim(a: np.ndarray, b: np.ndarray, data_range: float = 255.0) -> float:
    """Gaussian-windowed SSIM (11x11, sigma 1.5, K1=0.01, K2=0.03) on the luma channel.

    Border pixels within half a window of the edge are excluded from the mean.
    """
    a, b = _pair(a, b)
    x, y = to_luma(a), to_luma(b)
    if min(x.shape) < SSIM_WIN:
        raise ParameterError(f"image {x.shape} smaller than the {SSIM_WIN}x{SSIM_WIN} window")
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2

    def blur(z):
        return ndimage.gaussian_filter(z, SSIM_SIGMA, truncate=3.5, mode="reflect")

    mx, my = blur(x), blur(y)
    sxx = blur(x * x) - mx * mx
    syy = blur(y * y) - my * my
    sxy = blur(x * y) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    pad = (SSIM_WIN - 1) // 2
    smap = (num / den)[pad:-pad, pad:-pad]
    return float(np.clip(smap.mean(), -1.0, 1.0))


def clip_mean(metric: Callable[[np.ndarray, np.ndarray], float], real: VideoClip, gen: VideoClip) -> float:
    """Frame-wise metric averaged over a clip (+inf propagates, never capped)."""
    if real.frames.shape != gen.frames.shape:
        raise ShapeError(f"clip shape mismatch: {real.frames.shape} vs {gen.frames.shape}")
    return float(np.mean([metric(a, b) for a, b in zip(real.frames, gen.frames)]))


# --------------------------------------------------------------------------- AKD

@dataclass
class KeypointSet:
    """Per-region landmarks ``(n_frames, n_landmarks, 2)`` with per-frame validity."""

    landmarks: dict[str, np.ndarray]
    valid: dict[str, np.ndarray]

    def __post_init__(self):
        for region, arr in self.landmarks.items():
            arr = np.asarray(arr, dtype=np.float64)
            if arr.ndim != 3 or arr.shape[-1] != 2:
                raise ShapeError(f"{region}: landmarks must be (n, L, 2), got {arr.shape}")
            self.landmarks[region] = arr
            mask = np.asarray(self.valid.get(region, np.ones(arr.shape[0], bool)), dtype=bool)
            if mask.shape != (arr.shape[0],):
                raise ShapeError(f"{region}: validity must be ({arr.shape[0]},)")
            self.valid[region] = mask

    def n_frames(self, region: str) -> int:
        return self.landmarks[region].shape[0]


def joint_validity(sets: Sequence[KeypointSet], region: str) -> np.ndarray:
    """Frames where ``region`` was detected in every one of ``sets``."""
    masks = [s.valid[region] for s in sets]
    if len({m.shape for m in masks}) != 1:
        raise ShapeError("keypoint sets disagree on frame count")
    return np.logical_and.reduce(masks)


def akd(real_kp: KeypointSet, gen_kp: KeypointSet, region: str,
        joint_mask: np.ndarray | None = None) -> tuple[float, float]:
    """Average keypoint distance for one region.

    Returns ``(raw, detection_fraction)``. ``raw`` averages the Euclidean
    landmark distance over frames valid in both sets (and in ``joint_mask``,
    typically the cross-method validity from :func:`joint_validity`).
    ``detection_fraction`` is the share of all frames where ``gen_kp`` found
    the region.
    """
    if region not in real_kp.landmarks or region not in gen_kp.landmarks:
        raise ParameterError(f"region {region!r} missing from keypoint sets")
    r, g = real_kp.landmarks[region], gen_kp.landmarks[region]
    if r.shape != g.shape:
        raise ShapeError(f"landmark arrays differ: {r.shape} vs {g.shape}")
    mask = real_kp.valid[region] & gen_kp.valid[region]
    if joint_mask is not None:
        mask = mask & np.asarray(joint_mask, dtype=bool)
    if not mask.any():
        raise UndefinedMetricError(f"no jointly valid frames for region {region!r}")
    dist = np.linalg.norm(r[mask] - g[mask], axis=-1)
    return float(dist.mean()), float(gen_kp.valid[region].mean())


def akd_adjust(raw: float, detection_fraction: float) -> float:
    if not detection_fraction > 0:
        raise UndefinedMetricError(f"detection fraction must be > 0, got {detection_fraction}")
    if detection_fraction > 1:
        raise ParameterError(f"detection fraction must be <= 1, got {detection_fraction}")
    return raw / detection_fraction


def _border_plane(frame: np.ndarray, margin: int = 2) -> np.ndarray:
    """Least-squares plane per channel fitted to the frame border, evaluated everywhere."""
    h, w = frame.shape[:2]
    yy, xx = np.mgrid[0:h, 0:w]
    border = np.zeros((h, w), bool)
    border[:margin] = border[-margin:] = True
    border[:, :margin] = border[:, -margin:] = True
    design = np.stack([np.ones(border.sum()), xx[border], yy[border]], axis=1)
    coef, *_ = np.linalg.lstsq(design, frame[border].astype(np.float64), rcond=None)
    full = np.stack([np.ones(h * w), xx.ravel(), yy.ravel()], axis=1) @ coef
    return full.reshape(h, w, -1)


def shape_mask(frame: np.ndarray, background: np.ndarray | None = None, threshold: float = 40.0) -> np.ndarray:
    """Pixels deviating from the background by more than ``threshold`` in some channel.

    Without an explicit background, a linear ramp fitted to the frame border is used.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if background is None:
        bg = _border_plane(frame)
    else:
        bg = np.broadcast_to(np.asarray(background, dtype=np.float64), frame.shape)
    return np.max(np.abs(frame - bg), axis=-1) > threshold


def toy_keypoints(clip: VideoClip, background: np.ndarray | None = None,
                  threshold: float = 40.0) -> KeypointSet:
    """Centroid of the foreground shape per frame, as a single ``torso`` landmark.

    Keypoints are ``(x, y)`` in continuous canvas coordinates, pixel ``(i, j)``
    covering ``[j, j+1) x [i, i+1)``. Frames with no
    foreground pixels are flagged invalid.
    """
    n = len(clip)
    pts = np.zeros((n, 1, 2))
    valid = np.zeros(n, bool)
    for i, frame in enumerate(clip.frames):
        mask = shape_mask(frame, background, threshold)
        if mask.any():
            ys, xs = np.nonzero(mask)
            pts[i, 0] = xs.mean() + 0.5, ys.mean() + 0.5
            valid[i] = True
    return KeypointSet({"torso": pts}, {"torso": valid})


# --------------------------------------------------------------------------- external scorers

Scorer = Callable[[Path, Path], "float | str"]


@dataclass
class ScorerRegistry:
    """Adapters for learned metrics.

    Adapters are either registered callables or executables named after the
    metric, found in the directory named by ``$CLCGEN_SCORER_PATH``. An
    executable is invoked as ``<exe> REAL_DIR GEN_DIR`` and must print one number.
    """

    adapters: dict[str, Scorer] = field(default_factory=dict)
    search_path: str | None = None

    def register(self, name: str, fn: Scorer) -> None:
        self.adapters[name.lower()] = fn

    def _discover(self, name: str) -> Scorer | None:
        root = self.search_path or os.environ.get(SCORER_PATH_ENV)
        if not root:
            return None
        exe = shutil.which(name, path=root)
        if exe is None:
            return None

        def run(real_dir: Path, gen_dir: Path) -> str:
            proc = subprocess.run([exe, str(real_dir), str(gen_dir)], capture_output=True, text=True, check=True)
            return proc.stdout

        return run

    def get(self, name: str) -> Scorer:
        fn = self.adapters.get(name.lower()) or self._discover(name.lower())
        if fn is None:
            raise UnsupportedMetricError(f"no external scorer registered for {name!r}")
        return fn


default_registry = ScorerRegistry()


def external_score(name: str, real_dir: str | Path, gen_dir: str | Path,
                   registry: ScorerRegistry | None = None) -> float:
    fn = (registry or default_registry).get(name)
    out = fn(Path(real_dir), Path(gen_dir))
    if isinstance(out, (int, float)) and not isinstance(out, bool):
        return float(out)
    text = str(out).strip()
    try:
        value = float(text)
    except ValueError:
        raise ScorerParseError(f"scorer {name!r} returned unparseable output {text[:80]!r}") from None
    if not math.isfinite(value):
        raise ScorerParseError(f"scorer {name!r} returned non-finite value {text!r}")
    return value


# --------------------------------------------------------------------------- reports

CSV_COLUMNS = ("video_id", "method", "metric", "delta", "value", "detection_fraction")


@dataclass
class MetricRow:
    video_id: str
    method: str
    metric: str
    value: float | str
    delta: int | None = None
    detection_fraction: float | None = None


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def rows_to_csv(rows: Iterable[MetricRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([r.video_id, r.method, r.metric, "" if r.delta is None else r.delta,
                    format_value(r.value), format_value(r.detection_fraction)])
    return buf.getvalue()


def read_csv_rows(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
