"""Procedural moving-shape videos used as a stand-in dataset."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
import math

import numpy as np

from ..errors import ParameterError
from ..video import VideoClip

SUPERSAMPLE = 4
# background ramp directions, in units of pi/4
N_GRADIENTS = 8


@dataclass(frozen=True)
class Trajectory:
    """Center path ``(x, y)`` of the shape as a function of frame index.

    ``kind`` is one of ``static``, ``linear`` or ``sine``. For ``linear`` the
    center is ``start + velocity * k``; for ``sine`` it is
    ``start + amplitude * sin(2*pi*freq*k + phase)`` per axis.
    """

    kind: str = "static"
    start: tuple[float, float] = (32.0, 32.0)
    velocity: tuple[float, float] = (0.0, 0.0)
    amplitude: tuple[float, float] = (0.0, 0.0)
    freq: tuple[float, float] = (0.0, 0.0)
    phase: tuple[float, float] = (0.0, 0.0)

    def __call__(self, k: int) -> tuple[float, float]:
        sx, sy = self.start
        if self.kind == "static":
            return sx, sy
        if self.kind == "linear":
            return sx + self.velocity[0] * k, sy + self.velocity[1] * k
        if self.kind == "sine":
            return tuple(
                s + a * math.sin(2 * math.pi * f * k + p)
                for s, a, f, p in zip(self.start, self.amplitude, self.freq, self.phase)
            )
        raise ParameterError(f"unknown trajectory kind {self.kind!r}")


@dataclass(frozen=True)
class SceneSpec:
    canvas: tuple[int, int] = (64, 64)
    shape: str = "disc"
    color: tuple[int, int, int] = (220, 60, 40)
    radius: float = 7.0
    trajectory: Trajectory = field(default_factory=Trajectory)
    background: tuple[int, int, int] = (40, 40, 60)
    gradient_id: int = 0
    gradient_amp: float = 0.0
    # linear shading across the shape; its direction is never visible to the appearance encoder
    shade_angle: float = 0.0
    shade_amp: float = 0.0

    def __post_init__(self):
        if self.radius <= 0:
            raise ParameterError("radius must be positive")
        if self.shape not in ("disc", "square"):
            raise ParameterError(f"unknown shape {self.shape!r}")
        if not 0 <= self.gradient_id <= N_GRADIENTS:
            raise ParameterError(f"gradient_id must be in [0, {N_GRADIENTS}]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        d["trajectory"] = Trajectory(**{k: tuple(v) if isinstance(v, list) else v for k, v in d["trajectory"].items()})
        for key in ("canvas", "color", "background"):
            d[key] = tuple(d[key])
        return cls(**d)


def background_image(spec: SceneSpec) -> np.ndarray:
    """Float background (H, W, 3): flat color plus an optional linear ramp.

    ``gradient_id`` 0 is flat; ids 1-8 select a ramp direction at multiples of
    45 degrees, bounded by ``+-gradient_amp`` at the canvas border.
    """
    h, w = spec.canvas
    bg = np.empty((h, w, 3))
    bg[:] = spec.background
    if spec.gradient_id:
        theta = (spec.gradient_id - 1) * math.pi / 4
        yy, xx = np.mgrid[0:h, 0:w] + 0.5
        u = (xx - w / 2) / (w / 2) * math.cos(theta) + (yy - h / 2) / (h / 2) * math.sin(theta)
        u /= abs(math.cos(theta)) + abs(math.sin(theta))
        bg += spec.gradient_amp * u[..., None]
    return bg


def coverage(spec: SceneSpec, center: tuple[float, float]) -> np.ndarray:
    """Anti-aliased shape coverage in [0, 1] from supersampled point tests."""
    h, w = spec.canvas
    s = SUPERSAMPLE
    off = (np.arange(s) + 0.5) / s
    ys = (np.arange(h)[:, None] + off[None, :]).ravel()
    xs = (np.arange(w)[:, None] + off[None, :]).ravel()
    cx, cy = center
    dx = xs[None, :] - cx
    dy = ys[:, None] - cy
    if spec.shape == "disc":
        inside = dx ** 2 + dy ** 2 <= spec.radius ** 2
    else:
        inside = (np.abs(dx) <= spec.radius) & (np.abs(dy) <= spec.radius)
    return inside.reshape(h, s, w, s).mean(axis=(1, 3))


def _check_inside(spec: SceneSpec, center: tuple[float, float], margin: float = 2.0) -> None:
    h, w = spec.canvas
    cx, cy = center
    r = spec.radius
    if cx - r < margin or cy - r < margin or cx + r > w - margin or cy + r > h - margin:
        raise ParameterError(f"trajectory leaves the canvas at center ({cx:.2f}, {cy:.2f})")


def shape_colors(spec: SceneSpec, center: tuple[float, float]) -> np.ndarray:
    """Per-pixel shape color (H, W, 3): base color plus a ramp of +-shade_amp across the radius."""
    h, w = spec.canvas
    color = np.broadcast_to(np.asarray(spec.color, float), (h, w, 3))
    if not spec.shade_amp:
        return color
    yy, xx = np.mgrid[0:h, 0:w] + 0.5
    u = ((xx - center[0]) * math.cos(spec.shade_angle) + (yy - center[1]) * math.sin(spec.shade_angle)) / spec.radius
    return color + spec.shade_amp * np.clip(u, -1, 1)[..., None]


def render_frame(spec: SceneSpec, center: tuple[float, float], bg: np.ndarray | None = None) -> np.ndarray:
    bg = background_image(spec) if bg is None else bg
    cov = coverage(spec, center)[..., None]
    img = bg * (1 - cov) + shape_colors(spec, center) * cov
    return np.clip(np.round(img), 0, 255).astype(np.uint8)


def render_clip(spec: SceneSpec, n_frames: int, fps: float = 20.0) -> VideoClip:
    if n_frames < 1:
        raise ParameterError("n_frames must be >= 1")
    centers = [spec.trajectory(k) for k in range(n_frames)]
    for c in centers:
        _check_inside(spec, c)
    bg = background_image(spec)
    return VideoClip(np.stack([render_frame(spec, c, bg) for c in centers]), fps)


def random_scene(rng: np.random.Generator, n_frames: int = 50, canvas: tuple[int, int] = (64, 64),
                 gradient_amp: float = 45.0, shade_amp: float = 40.0, min_contrast: float = 50.0) -> SceneSpec:
    """Random scene whose trajectory stays inside the canvas for ``n_frames`` frames."""
    h, w = canvas
    shape = "disc" if rng.random() < 0.5 else "square"
    radius = float(rng.uniform(5.0, 8.0))
    grad = int(rng.integers(1, N_GRADIENTS + 1))
    # shape color must stand out from every background pixel
    while True:
        base = rng.integers(50, 206, 3)
        color = rng.integers(shade_amp, 256 - shade_amp, 3)
        if np.max(np.abs(color - base)) - gradient_amp - shade_amp >= min_contrast:
            break
    margin = radius + 3.0
    amp = rng.uniform(4.0, 14.0, 2)
    start = (float(rng.uniform(margin + amp[0], w - margin - amp[0])),
             float(rng.uniform(margin + amp[1], h - margin - amp[1])))
    traj = Trajectory(
        kind="sine",
        start=start,
        amplitude=(float(amp[0]), float(amp[1])),
        freq=tuple(float(f) for f in rng.uniform(0.01, 0.05, 2)),
        phase=tuple(float(p) for p in rng.uniform(0, 2 * math.pi, 2)),
    )
    return SceneSpec(canvas, shape, tuple(int(c) for c in color), radius, traj,
                     tuple(int(c) for c in base), grad, float(gradient_amp),
                     float(rng.uniform(0, 2 * math.pi)), float(shade_amp))
