"""Noise schedules, forward noising, v-parameterization and deterministic DDIM.

All functions are pure and operate on numpy arrays shaped like a latent grid
``(c, h, w)`` (any shape works as long as the operands agree). The
v-prediction is the canonical network output; the noise and clean-latent
estimates are derived from it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import hashlib
import json
from typing import Callable

import numpy as np

from .errors import ParameterError, ShapeError


@dataclass(frozen=True)
class NoiseSchedule:
    t_train: int
    alpha_bar: np.ndarray = field(repr=False)
    ddim_steps: tuple[int, ...]
    beta_min: float | None = None
    beta_max: float | None = None

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        if ab.shape != (self.t_train + 1,):
            raise ParameterError(f"alpha_bar must have length t_train+1={self.t_train + 1}")
        if ab[0] != 1.0 or np.any(np.diff(ab) >= 0) or ab[-1] <= 0:
            raise ParameterError("alpha_bar must start at 1 and decrease strictly within (0, 1]")
        steps = tuple(int(s) for s in self.ddim_steps)
        if not steps or any(s < 1 or s > self.t_train for s in steps):
            raise ParameterError("ddim_steps must lie in [1, t_train]")
        if any(b >= a for a, b in zip(steps, steps[1:])):
            raise ParameterError("ddim_steps must be strictly decreasing")
        ab.setflags(write=False)
        object.__setattr__(self, "alpha_bar", ab)
        object.__setattr__(self, "ddim_steps", steps)

    @property
    def ddim_count(self) -> int:
        return len(self.ddim_steps)

    def to_config(self) -> dict:
        """Keys of the plain-text config format; only linear schedules round-trip."""
        if self.beta_min is None:
            raise ParameterError("schedule was not built from linear betas")
        return {
            "t_train": self.t_train,
            "beta_min": self.beta_min,
            "beta_max": self.beta_max,
            "ddim_count": self.ddim_count,
        }

    @classmethod
    def from_config(cls, cfg: dict) -> "NoiseSchedule":
        extra = set(cfg) - {"t_train", "beta_min", "beta_max", "ddim_count"}
        if extra:
            raise ParameterError(f"unknown schedule keys: {sorted(extra)}")
        return make_linear_schedule(
            int(cfg["t_train"]), float(cfg["beta_min"]), float(cfg["beta_max"]), int(cfg["ddim_count"])
        )

    def fingerprint(self) -> str:
        h = hashlib.sha256(np.ascontiguousarray(self.alpha_bar).tobytes())
        h.update(json.dumps(self.ddim_steps).encode())
        return h.hexdigest()[:16]

    def training_fingerprint(self) -> str:
        """Hash of the training schedule only; sampling step count may differ from training."""
        return hashlib.sha256(np.ascontiguousarray(self.alpha_bar).tobytes()).hexdigest()[:16]


def make_linear_schedule(t_train: int = 1000, beta_min: float = 1e-4, beta_max: float = 0.02,
                         ddim_count: int = 30) -> NoiseSchedule:
    if not (isinstance(t_train, (int, np.integer)) and isinstance(ddim_count, (int, np.integer))):
        raise ParameterError("t_train and ddim_count must be integers")
    if not (t_train >= ddim_count >= 1):
        raise ParameterError(f"need t_train >= ddim_count >= 1, got {t_train}, {ddim_count}")
    if not (0.0 < beta_min <= beta_max < 1.0):
        raise ParameterError(f"need 0 < beta_min <= beta_max < 1, got {beta_min}, {beta_max}")
    betas = np.linspace(beta_min, beta_max, t_train, dtype=np.float64)
    alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    steps = np.round(np.linspace(t_train, 1, ddim_count)).astype(int)
    return NoiseSchedule(int(t_train), alpha_bar, tuple(steps.tolist()), float(beta_min), float(beta_max))


def _coeffs(t: int, sched: NoiseSchedule) -> tuple[float, float]:
    if not 0 <= t <= sched.t_train:
        raise ParameterError(f"timestep {t} outside [0, {sched.t_train}]")
    ab = float(sched.alpha_bar[t])
    return np.sqrt(ab), np.sqrt(1.0 - ab)


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if np.shape(a) != np.shape(b):
        raise ShapeError(f"shape mismatch: {np.shape(a)} vs {np.shape(b)}")


def add_noise(z0: np.ndarray, eps: np.ndarray, t: int, sched: NoiseSchedule) -> np.ndarray:
    _same_shape(z0, eps)
    a, s = _coeffs(t, sched)
    return a * np.asarray(z0) + s * np.asarray(eps)


def v_from_eps_z0(eps: np.ndarray, z0: np.ndarray, t: int, sched: NoiseSchedule) -> np.ndarray:
    """Training target ``v = sqrt(ab)*eps - sqrt(1-ab)*z0``."""
    _same_shape(eps, z0)
    a, s = _coeffs(t, sched)
    return a * np.asarray(eps) - s * np.asarray(z0)


def z0_eps_from_v(zt: np.ndarray, v: np.ndarray, t: int, sched: NoiseSchedule) -> tuple[np.ndarray, np.ndarray]:
    _same_shape(zt, v)
    a, s = _coeffs(t, sched)
    zt, v = np.asarray(zt), np.asarray(v)
    return a * zt - s * v, s * zt + a * v


def ddim_step(zt: np.ndarray, v_hat: np.ndarray, t_cur: int, t_next: int, sched: NoiseSchedule) -> np.ndarray:
    """Deterministic (eta=0) DDIM move from ``t_cur`` to ``t_next``."""
    if t_next >= t_cur:
        raise ParameterError(f"DDIM step must decrease time, got {t_cur} -> {t_next}")
    z0_hat, eps_hat = z0_eps_from_v(zt, v_hat, t_cur, sched)
    if t_next == 0:
        return z0_hat
    a, s = _coeffs(t_next, sched)
    return a * z0_hat + s * eps_hat


def cfg_combine(uncond: np.ndarray, cond: np.ndarray, scale: float) -> np.ndarray:
    _same_shape(uncond, cond)
    if scale < 0:
        raise ParameterError(f"guidance scale must be >= 0, got {scale}")
    if scale == 1.0:
        return np.array(cond, copy=True)
    uncond = np.asarray(uncond)
    return uncond + scale * (np.asarray(cond) - uncond)


def step_pairs(sched: NoiseSchedule) -> list[tuple[int, int]]:
    """(t_cur, t_next) pairs walking the DDIM sub-sequence down to 0."""
    steps = list(sched.ddim_steps)
    return list(zip(steps, steps[1:] + [0]))


def ddim_sample(z_start: np.ndarray, predict_v: Callable[[np.ndarray, int], np.ndarray],
                sched: NoiseSchedule) -> np.ndarray:
    """Run the full DDIM chain from ``z_start`` (at the first sub-sequence step) to a clean latent."""
    z = np.asarray(z_start, dtype=np.float64)
    for t_cur, t_next in step_pairs(sched):
        z = ddim_step(z, predict_v(z, t_cur), t_cur, t_next, sched)
    return z
