"""Autoregressive frame-by-frame sampling with closed-loop feedback.

Each frame runs a full deterministic DDIM chain. The chain for frame ``k+1``
starts from ``x_{k+1} = z_T + beta * (z0_k - z_T)``, a blend of the shared
initial noise and the previous frame's clean latent. The per-frame motion
encoding is added to the network input at every denoising step.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import enum
import logging
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator, Protocol, Sequence

import numpy as np

from .diffusion import NoiseSchedule, cfg_combine, ddim_step, step_pairs
from .errors import NumericDivergenceError, ParameterError, ShapeError

log = logging.getLogger(__name__)

BETA_WARN = 0.2


class NoiseMode(str, enum.Enum):
    FIXED = "fixed_zT"
    INDEPENDENT = "independent_per_frame"


@dataclass(frozen=True)
class FeedbackConfig:
    beta: float = 0.05
    noise_mode: NoiseMode = NoiseMode.FIXED
    seed: int = 0
    cfg_scale: float = 3.5

    def __post_init__(self):
        object.__setattr__(self, "noise_mode", NoiseMode(self.noise_mode))
        if not 0.0 <= self.beta <= 1.0:
            raise ParameterError(f"feedback gain must be in [0, 1], got {self.beta}")
        if self.beta > BETA_WARN:
            log.warning("feedback gain %.3g above %.1f; expect distorted frames", self.beta, BETA_WARN)
        if self.cfg_scale < 0:
            raise ParameterError("cfg_scale must be >= 0")


@dataclass
class ConditioningBundle:
    """Appearance features for the whole video plus one motion encoding per frame."""

    appearance: Any
    motion: Sequence[np.ndarray]


class Denoiser(Protocol):
    """v-prediction network.

    ``appearance`` and ``motion`` are ``None`` for the unconditional branch of
    classifier-free guidance. ``latent`` is the network input, i.e. the
    running latent with the motion encoding already added on the conditional
    branch.
    """

    def __call__(self, latent: np.ndarray, t: int, appearance: Any, motion: np.ndarray | None) -> np.ndarray: ...


def feedback_update(z_T: np.ndarray, z0_hat: np.ndarray, beta: float) -> np.ndarray:
    """Next frame's sampling input ``z_T + beta * (z0_hat - z_T)``."""
    z_T, z0_hat = np.asarray(z_T), np.asarray(z0_hat)
    if z_T.shape != z0_hat.shape:
        raise ShapeError(f"shape mismatch: {z_T.shape} vs {z0_hat.shape}")
    if beta == 0:
        return z_T.copy()
    if beta == 1:
        return z0_hat.copy()
    return z_T + beta * (z0_hat - z_T)


def guided_v(denoiser: Denoiser, z: np.ndarray, t: int, appearance: Any, motion: np.ndarray,
             scale: float) -> np.ndarray:
    """Conditional and unconditional v-predictions combined by classifier-free guidance."""
    cond_in = z + motion
    if scale == 1.0:
        return denoiser(cond_in, t, appearance, motion)
    pair = getattr(denoiser, "predict_pair", None)
    if pair is not None:
        v_cond, v_uncond = pair(cond_in, z, t, appearance, motion)
    else:
        v_cond = denoiser(cond_in, t, appearance, motion)
        v_uncond = denoiser(z, t, None, None)
    return cfg_combine(v_uncond, v_cond, scale)


class CLCSampler:
    """Stateful per-video sampler; create one per generated video.

    Between frames it keeps at most three latents: the feedback anchor
    ``z_T``, the next sampling input (or, in independent-noise mode, the
    previous clean latent), and the current frame's clean latent.
    """

    def __init__(self, denoiser: Denoiser, appearance: Any, sched: NoiseSchedule, cfg: FeedbackConfig,
                 latent_shape: tuple[int, ...]):
        self.denoiser = denoiser
        self.appearance = appearance
        self.sched = sched
        self.cfg = cfg
        self.latent_shape = tuple(latent_shape)
        self.rng = np.random.default_rng(cfg.seed)
        self.k = 0
        self.z_T: np.ndarray | None = None
        self.x_next: np.ndarray | None = None
        self.prev_z0: np.ndarray | None = None
        self.current: np.ndarray | None = None
        if cfg.noise_mode is NoiseMode.FIXED:
            self.z_T = self.rng.standard_normal(self.latent_shape)
            self.x_next = self.z_T

    def resident_latents(self) -> int:
        return sum(a is not None for a in (self.z_T, self.x_next, self.prev_z0, self.current))

    def _input_for_frame(self) -> tuple[np.ndarray, np.ndarray]:
        if self.cfg.noise_mode is NoiseMode.FIXED:
            return self.z_T, self.x_next
        anchor = self.rng.standard_normal(self.latent_shape)
        if self.prev_z0 is None:
            return anchor, anchor
        return anchor, feedback_update(anchor, self.prev_z0, self.cfg.beta)

    def step(self, motion: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Generate one frame. Returns ``(x_k, anchor_k, z0_k)``."""
        motion = np.asarray(motion, dtype=np.float64)
        if motion.shape != self.latent_shape:
            raise ShapeError(f"motion encoding {motion.shape} does not match latent {self.latent_shape}")
        self.current = None
        anchor, x = self._input_for_frame()
        z = x
        for t_cur, t_next in step_pairs(self.sched):
            v = guided_v(self.denoiser, z, t_cur, self.appearance, motion, self.cfg.cfg_scale)
            if np.shape(v) != self.latent_shape:
                raise ShapeError(f"denoiser returned {np.shape(v)}, expected {self.latent_shape}")
            with np.errstate(over="ignore", invalid="ignore"):
                z = ddim_step(z, v, t_cur, t_next, self.sched)
            if not np.all(np.isfinite(z)):
                raise NumericDivergenceError(self.k, t_cur)
        self.current = z
        if self.cfg.noise_mode is NoiseMode.FIXED:
            self.x_next = feedback_update(self.z_T, z, self.cfg.beta)
        else:
            self.prev_z0 = z
        self.k += 1
        return x, anchor, z


@dataclass
class GenerationTrace:
    z0_hats: list[np.ndarray] = field(default_factory=list)
    inputs: list[np.ndarray] = field(default_factory=list)
    anchors: list[np.ndarray] = field(default_factory=list)
    frames: list[np.ndarray] = field(default_factory=list)

    @property
    def z_T(self) -> np.ndarray | None:
        return self.anchors[0] if self.anchors else None

    def __len__(self) -> int:
        return len(self.z0_hats)

    def save_latents(self, path: str | Path) -> Path:
        """Latent dump as ``.npz`` with arrays ``z_T``, ``anchors``, ``inputs``, ``z0_hats``."""
        path = Path(path)
        with open(path, "wb") as fh:
            np.savez(fh, z_T=self.z_T, anchors=np.stack(self.anchors), inputs=np.stack(self.inputs),
                     z0_hats=np.stack(self.z0_hats))
        return path


def _latent_shape(cond: ConditioningBundle, n: int) -> tuple[int, ...]:
    if n < 1:
        raise ParameterError("n_frames must be >= 1")
    if len(cond.motion) < n:
        raise ParameterError(f"{len(cond.motion)} motion encodings for {n} frames")
    return np.shape(cond.motion[0])


def generate_video(denoiser: Denoiser, cond: ConditioningBundle, sched: NoiseSchedule, cfg: FeedbackConfig,
                   n_frames: int, decoder: Callable[[np.ndarray], np.ndarray] | None = None) -> GenerationTrace:
    shape = _latent_shape(cond, n_frames)
    sampler = CLCSampler(denoiser, cond.appearance, sched, cfg, shape)
    trace = GenerationTrace()
    for k in range(n_frames):
        x, anchor, z0 = sampler.step(cond.motion[k])
        trace.inputs.append(x)
        trace.anchors.append(anchor)
        trace.z0_hats.append(z0)
        if decoder is not None:
            trace.frames.append(decoder(z0))
    return trace


def generate_unbounded(denoiser: Denoiser, cond_stream: Iterable[np.ndarray], sched: NoiseSchedule,
                       cfg: FeedbackConfig, appearance: Any,
                       decoder: Callable[[np.ndarray], np.ndarray] | None = None,
                       probe: Callable[[CLCSampler], None] | None = None) -> Iterator[np.ndarray]:
    """Stream frames for an unbounded motion stream in constant memory.

    Yields decoded frames (or clean latents without a decoder). ``probe`` is
    called with the sampler after every frame, for memory audits.
    """
    sampler = None
    for motion in cond_stream:
        if sampler is None:
            sampler = CLCSampler(denoiser, appearance, sched, cfg, np.shape(motion))
        _, _, z0 = sampler.step(motion)
        out = decoder(z0) if decoder is not None else z0.copy()
        if probe is not None:
            probe(sampler)
        yield out
