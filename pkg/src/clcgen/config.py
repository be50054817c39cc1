"""Experiment configuration: one flat YAML mapping with documented keys.

Relative paths resolve against the directory holding the config file.
Unknown keys are rejected so the docs and the code cannot drift apart.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import yaml

from .diffusion import NoiseSchedule, make_linear_schedule
from .errors import ConfigError, ParameterError
from .metrics import DEFAULT_DELTAS
from .sampler import FeedbackConfig, NoiseMode

DEFAULT_BETA_GRID = (0.0, 0.01, 0.05, 0.1, 0.2)
DEFAULT_METRICS = ("tje", "psnr_float", "psnr_int", "ssim", "akd_torso")
SWEEP_OBJECTIVES = ("tje", "psnr_float", "ssim")
PATH_KEYS = ("data_dir", "checkpoint", "output_dir", "driving")


@dataclass
class ExperimentConfig:
    # paths
    data_dir: str = "data"
    checkpoint: str = "checkpoints/toy.npz"
    output_dir: str = "runs"
    seed: int = 0
    # closed-loop sampling
    beta: float = 0.05
    noise_mode: str = NoiseMode.FIXED.value
    cfg_scale: float = 3.5
    # noise schedule
    t_train: int = 1000
    beta_min: float = 0.00085
    beta_max: float = 0.012
    ddim_count: int = 30
    # synthetic data
    n_train_clips: int = 200
    n_val_clips: int = 10
    n_frames: int = 24
    # toy training
    train_steps: int = 4000
    batch_size: int = 16
    lr: float = 2e-3
    p_drop: float = 0.1
    loss_target: str = "v"
    width: int = 32
    # generation / evaluation
    method: str = "clc"
    driving: str = "val"
    frames: int | None = None
    metrics: list = field(default_factory=lambda: list(DEFAULT_METRICS))
    deltas: list = field(default_factory=lambda: list(DEFAULT_DELTAS))
    beta_grid: list = field(default_factory=lambda: list(DEFAULT_BETA_GRID))
    sweep_objective: str = "tje"
    # curation fixture and thresholds
    curate_identities: int = 12
    curate_max_videos: int = 3
    curate_threshold: float = 0.4
    curate_spectral: bool = False
    curate_clip_len: int = 50
    curate_train_frac: float = 0.9
    curate_max_yaw: float = 30.0
    curate_crop: int = 512

    def validate(self) -> "ExperimentConfig":
        try:
            self.feedback()
            self.schedule()
        except (ParameterError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        if not self.deltas or any(int(d) < 1 for d in self.deltas):
            raise ConfigError("deltas must be a non-empty list of positive offsets")
        if not self.beta_grid:
            raise ConfigError("beta_grid is empty")
        if any(not 0.0 <= float(b) <= 1.0 for b in self.beta_grid):
            raise ConfigError("beta_grid entries must lie in [0, 1]")
        if not self.metrics:
            raise ConfigError("metrics list is empty")
        if self.sweep_objective not in SWEEP_OBJECTIVES:
            raise ConfigError(f"sweep_objective must be one of {SWEEP_OBJECTIVES}")
        if self.loss_target not in ("v", "eps"):
            raise ConfigError("loss_target must be 'v' or 'eps'")
        if self.frames is not None and int(self.frames) < 1:
            raise ConfigError("frames must be >= 1")
        for key in ("n_frames", "n_val_clips", "n_train_clips", "train_steps", "batch_size", "width"):
            if int(getattr(self, key)) < 1:
                raise ConfigError(f"{key} must be >= 1")
        if "/" in self.method or not self.method:
            raise ConfigError("method must be a plain directory name")
        return self

    def feedback(self, beta: float | None = None) -> FeedbackConfig:
        return FeedbackConfig(beta=float(self.beta if beta is None else beta), noise_mode=self.noise_mode,
                              seed=int(self.seed), cfg_scale=float(self.cfg_scale))

    def schedule(self) -> NoiseSchedule:
        return make_linear_schedule(int(self.t_train), float(self.beta_min), float(self.beta_max),
                                    int(self.ddim_count))

    def path(self, key: str) -> Path:
        return Path(getattr(self, key))

    def to_dict(self) -> dict:
        return asdict(self)


KNOWN_KEYS = tuple(f.name for f in fields(ExperimentConfig))


def _coerce(name: str, value: Any, default: Any) -> Any:
    if value is None:
        return None
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int) or name == "frames":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{name}: expected a list, got {value!r}")
        return list(value)
    if not isinstance(value, str):
        raise ConfigError(f"{name}: expected a string, got {value!r}")
    return value


def _resolve_paths(raw: dict, base_dir: Path) -> dict:
    out = dict(raw)
    for key in PATH_KEYS:
        val = out.get(key)
        if not isinstance(val, str) or Path(val).is_absolute():
            continue
        # a bare driving value names a split or video id, not a path
        if key == "driving" and "/" not in val:
            continue
        out[key] = str(base_dir / val)
    return out


def from_mapping(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping of keys to values")
    unknown = sorted(set(raw) - set(KNOWN_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    defaults = ExperimentConfig()
    values = {k: _coerce(k, v, getattr(defaults, k)) for k, v in raw.items()}
    return replace(defaults, **values).validate()


def parse_override(text: str) -> tuple[str, Any]:
    """``key=value`` with the value parsed as YAML (so ``0.1`` is a float, ``[1,2]`` a list)."""
    if "=" not in text:
        raise ConfigError(f"override must look like key=value, got {text!r}")
    key, val = text.split("=", 1)
    try:
        return key.strip(), yaml.safe_load(val)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse override {text!r}: {exc}") from None


def load_config(path: str | Path | None, overrides: dict | None = None) -> ExperimentConfig:
    """Read ``path`` (optional) and apply ``overrides``; override paths stay relative to the cwd."""
    raw: dict = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        try:
            raw = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping of keys to values")
        raw = _resolve_paths(raw, path.parent)
    return from_mapping({**raw, **(overrides or {})})
