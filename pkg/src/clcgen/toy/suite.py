"""Self-reenactment evaluation suite on synthetic videos."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..diffusion import NoiseSchedule, make_linear_schedule
from ..metrics import DEFAULT_DELTAS, tje, toy_keypoints
from ..sampler import ConditioningBundle, Denoiser, FeedbackConfig, generate_video
from ..video import VideoClip
from .codec import BlockCodec, MotionEncoder, appearance_features
from .model import ToyDenoiser
from .scene import SceneSpec, random_scene, render_clip
from .train import TrainHistory, TrainHyper, train_toy

VALIDATION_SEED_BASE = 10_000


def validation_scenes(n_videos: int = 10, n_frames: int = 24, seed_base: int = VALIDATION_SEED_BASE) -> list[SceneSpec]:
    """Held-out scenes; seeds never overlap the training range used by ``training_scenes``."""
    return [random_scene(np.random.default_rng(seed_base + i), n_frames) for i in range(n_videos)]


def training_scenes(n_clips: int, n_frames: int = 24, seed: int = 0) -> list[SceneSpec]:
    rng = np.random.default_rng(seed)
    return [random_scene(rng, n_frames) for _ in range(n_clips)]


def conditioning_for(source: np.ndarray, driving: VideoClip, motion_enc: MotionEncoder) -> ConditioningBundle:
    """Appearance from ``source``; one motion encoding per driving frame from its detected keypoint."""
    kps = toy_keypoints(driving)
    h, w = driving.resolution
    pts = [tuple(p[0]) if ok else (w / 2, h / 2) for p, ok in zip(kps.landmarks["torso"], kps.valid["torso"])]
    return ConditioningBundle(appearance_features(source), [motion_enc(p, (h, w)) for p in pts])


def stack_bundles(bundles: Sequence[ConditioningBundle]) -> ConditioningBundle:
    """Merge per-video bundles so several videos advance through the sampler in lockstep."""
    n = min(len(b.motion) for b in bundles)
    return ConditioningBundle(np.stack([b.appearance for b in bundles]),
                              [np.stack([b.motion[k] for b in bundles]) for k in range(n)])


@dataclass
class SuiteResult:
    real: list[VideoClip]
    generated: list[VideoClip]

    def tje_matrix(self, deltas: Sequence[int] = DEFAULT_DELTAS) -> np.ndarray:
        """Mean TJE per (video, delta)."""
        return np.array([[tje(r, g, d).mean_error for d in deltas] for r, g in zip(self.real, self.generated)])


def animate_batch(denoiser: Denoiser, real: Sequence[VideoClip], sched: NoiseSchedule, cfg: FeedbackConfig,
                  codec: BlockCodec = BlockCodec(), motion_enc: MotionEncoder | None = None,
                  n_frames: int | None = None) -> list[VideoClip]:
    """Reenact each clip from its first frame, all videos sharing one sampler pass."""
    motion_enc = motion_enc or MotionEncoder(codec)
    bundles = [conditioning_for(clip.frames[0], clip, motion_enc) for clip in real]
    cond = stack_bundles(bundles)
    n = n_frames or len(cond.motion)
    trace = generate_video(denoiser, cond, sched, cfg, n)
    lat = np.stack(trace.z0_hats, axis=1)  # (videos, frames, C, h, w)
    return [VideoClip(np.stack([codec.decode(z) for z in video]), real[i].fps) for i, video in enumerate(lat)]


def run_suite(denoiser: Denoiser, scenes: Sequence[SceneSpec], sched: NoiseSchedule, cfg: FeedbackConfig,
              n_frames: int, codec: BlockCodec = BlockCodec()) -> SuiteResult:
    real = [render_clip(s, n_frames) for s in scenes]
    return SuiteResult(real, animate_batch(denoiser, real, sched, cfg, codec))


@dataclass(frozen=True)
class ReferenceRecipe:
    """Reference toy experiment: training set, network, schedule and evaluation suite in one place."""

    n_train_clips: int = 200
    n_val: int = 10
    n_frames: int = 24
    beta_min: float = 0.00085
    beta_max: float = 0.012
    ddim_count: int = 30
    steps: int = 4000
    width: int = 32
    batch_size: int = 16
    cfg_scale: float = 3.5
    seed: int = 0

    def schedule(self) -> NoiseSchedule:
        return make_linear_schedule(1000, self.beta_min, self.beta_max, self.ddim_count)

    def hyper(self) -> TrainHyper:
        return TrainHyper(steps=self.steps, batch_size=self.batch_size, width=self.width, seed=self.seed)

    def validation(self) -> list[SceneSpec]:
        return validation_scenes(self.n_val, self.n_frames)


def train_reference(recipe: ReferenceRecipe = ReferenceRecipe()) -> tuple[ToyDenoiser, TrainHistory]:
    clips = [render_clip(s, recipe.n_frames) for s in training_scenes(recipe.n_train_clips, recipe.n_frames,
                                                                        recipe.seed)]
    val = [render_clip(s, recipe.n_frames) for s in recipe.validation()]
    return train_toy(clips, recipe.schedule(), recipe.hyper(), val_clips=val)
