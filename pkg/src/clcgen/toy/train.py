"""Per-frame training of the toy denoiser on (source, driving) frame pairs."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
import logging
import math
from typing import Iterable, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from ..diffusion import NoiseSchedule
from ..errors import ParameterError, TrainingDivergenceError
from ..metrics import toy_keypoints
from ..video import VideoClip
from .codec import BlockCodec, MotionEncoder, appearance_features
from .model import ModelConfig, ToyDenoiser

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainHyper:
    steps: int = 4000
    batch_size: int = 16
    lr: float = 2e-3
    warmup: int = 100
    p_drop: float = 0.1
    target: str = "v"  # "v" or "eps"
    seed: int = 0
    eval_every: int = 250
    width: int = 32

    def __post_init__(self):
        if self.target not in ("v", "eps"):
            raise ParameterError(f"target must be 'v' or 'eps', got {self.target!r}")
        if not 0.0 <= self.p_drop <= 1.0:
            raise ParameterError("p_drop must be in [0, 1]")


@dataclass
class TrainHistory:
    steps: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    val_steps: list[int] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)


@dataclass
class PairBank:
    """Per-frame latents, motion encodings and appearance vectors for a set of clips."""

    latents: torch.Tensor     # (clips, frames, C, h, w)
    motion: torch.Tensor      # (clips, frames, C, h, w)
    appearance: torch.Tensor  # (clips, frames, A)

    @classmethod
    def from_clips(cls, clips: Iterable[VideoClip], codec: BlockCodec, motion_enc: MotionEncoder) -> "PairBank":
        lat, mot, app = [], [], []
        for clip in clips:
            kps = toy_keypoints(clip)
            canvas = clip.resolution
            lat.append(np.stack([codec.encode(f).data for f in clip.frames]))
            # frames without a detected shape fall back to the canvas center
            pts = [tuple(p[0]) if ok else (canvas[1] / 2, canvas[0] / 2)
                   for p, ok in zip(kps.landmarks["torso"], kps.valid["torso"])]
            mot.append(np.stack([motion_enc(p, canvas) for p in pts]))
            app.append(np.stack([appearance_features(f) for f in clip.frames]))
        if not lat:
            raise ParameterError("training dataset is empty")
        n = min(len(x) for x in lat)
        f32 = lambda xs: torch.as_tensor(np.stack([x[:n] for x in xs]), dtype=torch.float32)
        return cls(f32(lat), f32(mot), f32(app))

    def sample(self, g: torch.Generator, batch: int):
        n_clips, n_frames = self.latents.shape[:2]
        ci = torch.randint(0, n_clips, (batch,), generator=g)
        src = torch.randint(0, n_frames, (batch,), generator=g)
        drv = torch.randint(0, n_frames, (batch,), generator=g)
        return self.latents[ci, drv], self.motion[ci, drv], self.appearance[ci, src]


def _loss(net, bank_batch, sched_ab, hyper, g, t_train, p_drop):
    z0, motion, app = bank_batch
    b = z0.shape[0]
    t = torch.randint(1, t_train + 1, (b,), generator=g)
    eps = torch.randn(z0.shape, generator=g)
    ab = sched_ab[t][:, None, None, None]
    zt = ab.sqrt() * z0 + (1 - ab).sqrt() * eps
    keep = (torch.rand(b, generator=g) >= p_drop).float()
    net_in = zt + motion * keep[:, None, None, None]
    pred = net(net_in, t, app, motion * keep[:, None, None, None], keep)
    target = ab.sqrt() * eps - (1 - ab).sqrt() * z0 if hyper.target == "v" else eps
    return F.l1_loss(pred, target)


def validation_loss(net: ToyDenoiser, bank: PairBank, sched: NoiseSchedule, hyper: TrainHyper,
                    batches: int = 4, seed: int = 12345) -> float:
    """L1 loss on a fixed, seeded set of held-out pairs (conditioning always on)."""
    g = torch.Generator().manual_seed(seed)
    ab = torch.tensor(sched.alpha_bar, dtype=torch.float32)
    net.eval()
    with torch.no_grad():
        vals = [float(_loss(net, bank.sample(g, hyper.batch_size), ab, hyper, g, sched.t_train, 0.0))
                for _ in range(batches)]
    net.train()
    return float(np.mean(vals))


def train_toy(clips: Sequence[VideoClip], sched: NoiseSchedule, hyper: TrainHyper = TrainHyper(),
              val_clips: Sequence[VideoClip] | None = None, codec: BlockCodec = BlockCodec(),
              motion_enc: MotionEncoder | None = None) -> tuple[ToyDenoiser, TrainHistory]:
    """Train on random (source, driving) pairs with an L1 loss on the v (or eps) target.

    Conditioning (appearance and motion together) is dropped with probability
    ``p_drop`` so guidance can be used at inference.
    """
    motion_enc = motion_enc or MotionEncoder(codec)
    bank = PairBank.from_clips(clips, codec, motion_enc)
    val_bank = PairBank.from_clips(val_clips, codec, motion_enc) if val_clips else bank
    torch.manual_seed(hyper.seed)
    g = torch.Generator().manual_seed(hyper.seed)
    net = ToyDenoiser(ModelConfig(latent_channels=bank.latents.shape[2], width=hyper.width, t_train=sched.t_train))
    opt = torch.optim.AdamW(net.parameters(), lr=hyper.lr, weight_decay=0.0)

    def lr_at(step):
        if step < hyper.warmup:
            return (step + 1) / hyper.warmup
        return 0.5 * (1 + math.cos(math.pi * (step - hyper.warmup) / max(1, hyper.steps - hyper.warmup)))

    sched_lr = torch.optim.lr_scheduler.LambdaLR(opt, lr_at)
    ab = torch.tensor(sched.alpha_bar, dtype=torch.float32)
    hist = TrainHistory()
    net.train()
    for step in range(hyper.steps):
        if step % hyper.eval_every == 0:
            hist.val_steps.append(step)
            hist.val_loss.append(validation_loss(net, val_bank, sched, hyper))
        loss = _loss(net, bank.sample(g, hyper.batch_size), ab, hyper, g, sched.t_train, hyper.p_drop)
        if not torch.isfinite(loss):
            raise TrainingDivergenceError(step, float(loss))
        opt.zero_grad(set_to_none=True)
        loss.backward()
        torch.nn.utils.clip_grad_norm_(net.parameters(), 1.0)
        opt.step()
        sched_lr.step()
        hist.steps.append(step)
        hist.train_loss.append(loss.item())
    hist.val_steps.append(hyper.steps)
    hist.val_loss.append(validation_loss(net, val_bank, sched, hyper))
    net.eval()
    return net, hist


def hyper_dict(hyper: TrainHyper) -> dict:
    return asdict(hyper)
