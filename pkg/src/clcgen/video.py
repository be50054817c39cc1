"""Video clip container and frame-directory I/O."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ParameterError, ShapeError

FRAME_DIGITS = 5


@dataclass
class VideoClip:
    """Ordered 8-bit RGB frames, shape ``(n, H, W, 3)``."""

    frames: np.ndarray
    fps: float = 20.0

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        if self.frames.dtype != np.uint8:
            raise ParameterError(f"frames must be uint8, got {self.frames.dtype}")
        if self.frames.ndim != 4 or self.frames.shape[-1] != 3:
            raise ShapeError(f"frames must be (n, H, W, 3), got {self.frames.shape}")
        if self.fps <= 0:
            raise ParameterError("fps must be positive")

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def resolution(self) -> tuple[int, int]:
        return self.frames.shape[1], self.frames.shape[2]


def frame_name(index: int) -> str:
    return f"{index:0{FRAME_DIGITS}d}.png"


def write_frame(directory: Path, index: int, frame: np.ndarray) -> Path:
    path = Path(directory) / frame_name(index)
    Image.fromarray(np.asarray(frame, dtype=np.uint8), mode="RGB").save(path, format="PNG", optimize=False)
    return path


def write_clip(directory: str | Path, clip: VideoClip) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(clip.frames):
        write_frame(directory, i, frame)
    return directory


def read_clip(directory: str | Path, fps: float = 20.0) -> VideoClip:
    directory = Path(directory)
    files = sorted(directory.glob("*.png"))
    if not files:
        raise FileNotFoundError(f"no frames in {directory}")
    frames = np.stack([np.asarray(Image.open(f).convert("RGB")) for f in files])
    return VideoClip(frames, fps)
