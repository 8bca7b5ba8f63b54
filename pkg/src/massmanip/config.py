"""Run configuration: paths, model hyperparameters, and pipeline knobs."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError


@dataclass
class RunConfig:
    dataset_dir: str = "data/dataset"
    checkpoint_dir: str = "data/checkpoints"
    output_dir: str = "data/outputs"

    n_frames: int = 180
    fps: float = 50.0
    radius: float = 0.1
    l_hand: int = 256
    seed: int = 0

    traj_widths: tuple = (64, 128)
    traj_T: int = 300
    traj_steps: int = 20000
    traj_batch: int = 8
    hand_widths: tuple = (16, 32)
    hand_T: int = 150
    hand_steps: int = 4000
    hand_batch: int = 4
    connet_hidden: int = 64
    connet_steps: int = 2000
    rationet_steps: int = 6000
    rationet_batch: int = 24
    lr: float = 1e-4

    fit_iters: int = 500
    fit_tolerance: float = 1e-6

    host: str = "127.0.0.1"
    port: int = 8077

    def __post_init__(self):
        self.traj_widths = tuple(self.traj_widths)
        self.hand_widths = tuple(self.hand_widths)
        if self.n_frames < 8 or self.n_frames % 2:
            raise ConfigError(f"n_frames must be an even value >= 8, got {self.n_frames}")
        if self.fps <= 0 or self.radius <= 0:
            raise ConfigError("fps and radius must be positive")

    @staticmethod
    def load(path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
        known = {f.name for f in fields(RunConfig)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return RunConfig(**data)

    def save(self, path):
        Path(path).write_text(json.dumps(asdict(self), indent=1, sort_keys=True))

    def require_paths(self, *names):
        """Validate that the named directories exist (dataset/checkpoints)."""
        for name in names:
            p = Path(getattr(self, name))
            if not p.exists():
                raise ConfigError(f"{name} does not exist: {p}")

    def checkpoint(self, model_name: str) -> Path:
        return Path(self.checkpoint_dir) / f"{model_name}.ckpt"
