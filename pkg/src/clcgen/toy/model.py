"""Compact conditioned v-prediction network for the toy world."""
from __future__ import annotations

from dataclasses import asdict, dataclass
import json
import math
from pathlib import Path

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from .codec import APPEARANCE_DIM


@dataclass(frozen=True)
class ModelConfig:
    latent_channels: int = 48
    width: int = 32
    t_train: int = 1000
    appearance_dim: int = APPEARANCE_DIM
    emb_dim: int = 128


def timestep_embedding(t: torch.Tensor, dim: int, t_train: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(10_000.0) * torch.arange(half, dtype=torch.float32) / half)
    args = (t.float() / t_train * 1000.0)[:, None] * freqs[None]
    return torch.cat([torch.sin(args), torch.cos(args)], dim=1)


class ResBlock(nn.Module):
    def __init__(self, ch_in: int, ch_out: int, emb_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(8, ch_in)
        self.conv1 = nn.Conv2d(ch_in, ch_out, 3, padding=1)
        self.film = nn.Linear(emb_dim, 2 * ch_out)
        self.norm2 = nn.GroupNorm(8, ch_out)
        self.conv2 = nn.Conv2d(ch_out, ch_out, 3, padding=1)
        # whole-canvas context so global background structure stays coherent
        self.ctx = nn.Linear(ch_out, ch_out)
        self.skip = nn.Conv2d(ch_in, ch_out, 1) if ch_in != ch_out else nn.Identity()

    def forward(self, x, emb):
        h = self.conv1(F.silu(self.norm1(x)))
        scale, shift = self.film(emb)[:, :, None, None].chunk(2, dim=1)
        h = self.norm2(h) * (1 + scale) + shift
        h = h + self.ctx(h.mean(dim=(2, 3)))[:, :, None, None]
        h = self.conv2(F.silu(h))
        return self.skip(x) + h


class ToyDenoiser(nn.Module):
    """Two-level conv net predicting v from (latent, t, appearance, motion).

    Appearance and motion enter through side branches whose last layers start
    at zero and are masked off on the unconditional path, so a model never
    trained with conditioning has identical conditional and unconditional outputs.
    """

    def __init__(self, cfg: ModelConfig = ModelConfig()):
        super().__init__()
        self.cfg = cfg
        c, w, e = cfg.latent_channels, cfg.width, cfg.emb_dim
        self.time_mlp = nn.Sequential(nn.Linear(e, e), nn.SiLU(), nn.Linear(e, e))
        self.app_mlp = nn.Sequential(nn.Linear(cfg.appearance_dim, e), nn.SiLU(), nn.Linear(e, e))
        nn.init.zeros_(self.app_mlp[-1].weight)
        nn.init.zeros_(self.app_mlp[-1].bias)
        self.guider = nn.Sequential(nn.Conv2d(c, w, 3, padding=1), nn.SiLU(), nn.Conv2d(w, w, 3, padding=1))
        nn.init.zeros_(self.guider[-1].weight)
        nn.init.zeros_(self.guider[-1].bias)
        self.conv_in = nn.Conv2d(c, w, 3, padding=1)
        self.down1 = ResBlock(w, w, e)
        self.down2 = ResBlock(w, 2 * w, e)
        self.pool = nn.Conv2d(2 * w, 2 * w, 3, stride=2, padding=1)
        self.mid1 = ResBlock(2 * w, 2 * w, e)
        self.mid2 = ResBlock(2 * w, 2 * w, e)
        self.up = nn.ConvTranspose2d(2 * w, 2 * w, 2, stride=2)
        self.up1 = ResBlock(4 * w, w, e)
        self.up2 = ResBlock(w, w, e)
        self.norm_out = nn.GroupNorm(8, w)
        self.conv_out = nn.Conv2d(w, c, 3, padding=1)
        # time-dependent per-channel gain on the raw input: the noise part of v
        # is nearly a rescaled copy of the input, which the narrow trunk cannot carry
        self.skip_gain = nn.Linear(e, c)
        nn.init.zeros_(self.skip_gain.weight)
        nn.init.zeros_(self.skip_gain.bias)

    def forward(self, z, t, appearance, motion, cond_mask):
        """``cond_mask`` (B,) is 1 where conditioning is present, 0 for the null branch."""
        t_emb = self.time_mlp(timestep_embedding(t, self.cfg.emb_dim, self.cfg.t_train))
        m = cond_mask[:, None]
        emb = t_emb + m * self.app_mlp(appearance)
        h = self.conv_in(z) + self.guider(motion) * cond_mask[:, None, None, None]
        h1 = self.down1(h, emb)
        h2 = self.down2(h1, emb)
        h = self.pool(h2)
        h = self.mid2(self.mid1(h, emb), emb)
        h = self.up(h)
        h = self.up1(torch.cat([h, h2], dim=1), emb)
        h = self.up2(h, emb)
        return self.conv_out(F.silu(self.norm_out(h))) + self.skip_gain(t_emb)[:, :, None, None] * z

    def n_params(self) -> int:
        return sum(p.numel() for p in self.parameters())


class TorchDenoiser:
    """numpy-facing wrapper satisfying the sampler's denoiser protocol.

    Latents may carry a leading batch axis ``(B, C, h, w)`` to advance several
    videos in lockstep; appearance is then ``(B, A)``.
    """

    def __init__(self, net: ToyDenoiser):
        self.net = net.eval()

    def _run(self, z, t, appearance, motion, mask):
        with torch.no_grad():
            tt = torch.full((z.shape[0],), int(t), dtype=torch.long)
            out = self.net(torch.as_tensor(z, dtype=torch.float32), tt,
                           torch.as_tensor(appearance, dtype=torch.float32),
                           torch.as_tensor(motion, dtype=torch.float32),
                           torch.as_tensor(mask, dtype=torch.float32))
            return out.double().numpy()

    def _null(self, latent):
        lead = latent.shape[:-3]
        return np.zeros(lead + (self.net.cfg.appearance_dim,)), np.zeros_like(latent)

    def __call__(self, latent, t, appearance, motion):
        latent = np.asarray(latent)
        batched = latent.ndim == 4
        z = latent if batched else latent[None]
        if appearance is None:
            a, m = self._null(z)
            mask = np.zeros(len(z))
        else:
            a = np.asarray(appearance).reshape(len(z), -1)
            m = np.asarray(motion).reshape(z.shape)
            mask = np.ones(len(z))
        out = self._run(z, t, a, m, mask)
        return out if batched else out[0]

    def predict_pair(self, cond_latent, uncond_latent, t, appearance, motion):
        cond_latent = np.asarray(cond_latent)
        batched = cond_latent.ndim == 4
        zc = cond_latent if batched else cond_latent[None]
        zu = np.asarray(uncond_latent).reshape(zc.shape)
        n = len(zc)
        a = np.asarray(appearance).reshape(n, -1)
        m = np.asarray(motion).reshape(zc.shape)
        out = self._run(np.concatenate([zc, zu]), t, np.concatenate([a, np.zeros_like(a)]),
                        np.concatenate([m, np.zeros_like(m)]), np.r_[np.ones(n), np.zeros(n)])
        vc, vu = out[:n], out[n:]
        return (vc, vu) if batched else (vc[0], vu[0])


def save_checkpoint(net: ToyDenoiser, path: str | Path, manifest: dict) -> Path:
    """Parameters as ``.npz`` plus a ``.json`` manifest next to it."""
    path = Path(path)
    state = {k: v.detach().cpu().numpy() for k, v in net.state_dict().items()}
    with open(path, "wb") as fh:
        np.savez(fh, **state)
    full = {
        "model_config": asdict(net.cfg),
        "parameters": {k: list(v.shape) for k, v in state.items()},
        **manifest,
    }
    path.with_suffix(".json").write_text(json.dumps(full, indent=2, sort_keys=True) + "\n")
    return path


def load_checkpoint(path: str | Path) -> tuple[ToyDenoiser, dict]:
    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text())
    net = ToyDenoiser(ModelConfig(**manifest["model_config"]))
    with np.load(path) as data:
        state = {k: torch.from_numpy(data[k]) for k in data.files}
    net.load_state_dict(state)
    return net.eval(), manifest
