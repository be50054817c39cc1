"""Fixed block autoencoder and the toy appearance/motion encoders."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import dctn, idctn

from ..errors import ParameterError, ShapeError
from ..metrics import shape_mask


@dataclass
class LatentGrid:
    data: np.ndarray
    downsample_factor: int

    def __post_init__(self):
        f = self.downsample_factor
        if f < 1 or f & (f - 1):
            raise ParameterError(f"downsample factor must be a power of two, got {f}")
        if self.data.ndim != 3:
            raise ShapeError(f"latent must be (c, h, w), got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ParameterError("latent contains non-finite values")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class BlockCodec:
    """Training-free invertible codec: an orthonormal 2-D DCT on each f x f pixel block.

    Pixels are scaled to [-1, 1]; a ``(H, W, 3)`` frame maps to a
    ``(3 f^2, H/f, W/f)`` latent whose first channel per color is the block
    mean (times ``f * scale``). Decoding inverts exactly up to 8-bit rounding.
    """

    factor: int = 4
    scale: float = 8.0

    def __post_init__(self):
        if self.factor < 1 or self.factor & (self.factor - 1):
            raise ParameterError(f"factor must be a power of two, got {self.factor}")
        if self.scale <= 0:
            raise ParameterError("scale must be positive")

    def latent_shape(self, canvas: tuple[int, int]) -> tuple[int, int, int]:
        h, w = canvas
        f = self.factor
        return 3 * f * f, h // f, w // f

    def to_latent(self, img: np.ndarray) -> np.ndarray:
        """Block DCT of a float image ``(H, W, C)`` without value rescaling."""
        h, w, c = img.shape
        f = self.factor
        if h % f or w % f:
            raise ShapeError(f"frame {h}x{w} not divisible by factor {f}")
        x = np.asarray(img, dtype=np.float64).reshape(h // f, f, w // f, f, c).transpose(4, 1, 3, 0, 2)
        x = dctn(x, axes=(1, 2), norm="ortho") * self.scale
        return x.reshape(c * f * f, h // f, w // f)

    def from_latent(self, z: np.ndarray) -> np.ndarray:
        cff, hh, ww = z.shape
        f = self.factor
        c = cff // (f * f)
        if c * f * f != cff:
            raise ShapeError(f"latent channels {cff} not a multiple of {f * f}")
        x = idctn(np.asarray(z, dtype=np.float64).reshape(c, f, f, hh, ww) / self.scale, axes=(1, 2), norm="ortho")
        return x.transpose(3, 1, 4, 2, 0).reshape(hh * f, ww * f, c)

    def encode(self, frame: np.ndarray) -> LatentGrid:
        frame = np.asarray(frame)
        return LatentGrid(self.to_latent(frame.astype(np.float64) / 127.5 - 1.0), self.factor)

    def decode(self, latent: LatentGrid | np.ndarray) -> np.ndarray:
        z = latent.data if isinstance(latent, LatentGrid) else np.asarray(latent)
        img = (self.from_latent(z) + 1.0) * 127.5
        return np.clip(np.round(img), 0, 255).astype(np.uint8)


APPEARANCE_DIM = 8


def appearance_features(frame: np.ndarray) -> np.ndarray:
    """Lossy appearance summary of a source frame.

    ``[shape color (3), radius / 16, squareness, background mean color (3)]``
    with colors scaled to [-1, 1]. Background structure beyond its mean is not
    encoded, so a generator has to supply it.
    """
    frame = np.asarray(frame, dtype=np.float64)
    mask = shape_mask(frame)
    out = np.zeros(APPEARANCE_DIM)
    if mask.any():
        ys, xs = np.nonzero(mask)
        area = mask.sum()
        out[:3] = frame[mask].mean(axis=0) / 127.5 - 1
        out[3] = np.sqrt(area / np.pi) / 16.0
        bbox = (xs.max() - xs.min() + 1) * (ys.max() - ys.min() + 1)
        # disc fills pi/4 of its bounding box, a square fills all of it
        out[4] = (area / bbox - np.pi / 4) / (1 - np.pi / 4) * 2 - 1
    bg = frame[~mask] if (~mask).any() else frame.reshape(-1, 3)
    out[5:] = bg.mean(axis=0) / 127.5 - 1
    return out


@dataclass(frozen=True)
class MotionEncoder:
    """Renders a keypoint as a Gaussian heatmap and folds it into latent layout."""

    codec: BlockCodec = BlockCodec()
    sigma: float = 3.0
    gain: float = 1.0

    def __call__(self, keypoint: tuple[float, float], canvas: tuple[int, int] = (64, 64)) -> np.ndarray:
        h, w = canvas
        yy, xx = np.mgrid[0:h, 0:w] + 0.5
        x, y = keypoint
        heat = self.gain * np.exp(-((xx - x) ** 2 + (yy - y) ** 2) / (2 * self.sigma ** 2))
        return self.codec.to_latent(np.repeat(heat[..., None], 3, axis=-1))
