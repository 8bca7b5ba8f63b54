"""Noise schedules. Diffusion steps are 1-based: alpha[t-1] = prod_{i<=t}(1-beta_i)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError


@dataclass(frozen=True)
class DiffusionSchedule:
    T: int
    beta: np.ndarray   # (T,)
    alpha: np.ndarray  # (T,) cumulative products, strictly decreasing

    def __post_init__(self):
        if self.T < 2:
            raise ConfigError(f"schedule needs T >= 2, got {self.T}")
        if self.beta.shape != (self.T,) or self.alpha.shape != (self.T,):
            raise ConfigError("schedule arrays must have length T")
        if np.any(self.beta <= 0) or np.any(self.beta >= 1):
            raise ConfigError("beta values must lie in (0, 1)")
        if np.any(np.diff(self.alpha) >= 0):
            raise ConfigError("alpha must be strictly decreasing")

    def alpha_at(self, t) -> np.ndarray:
        """Cumulative alpha for 1-based step(s) t."""
        t = np.asarray(t)
        if np.any(t < 1) or np.any(t > self.T):
            raise ConfigError(f"diffusion step out of range [1, {self.T}]: {t}")
        return self.alpha[t - 1]

    def beta_at(self, t) -> np.ndarray:
        t = np.asarray(t)
        if np.any(t < 1) or np.any(t > self.T):
            raise ConfigError(f"diffusion step out of range [1, {self.T}]: {t}")
        return self.beta[t - 1]

    @staticmethod
    def from_beta(beta) -> "DiffusionSchedule":
        beta = np.asarray(beta, dtype=np.float64)
        return DiffusionSchedule(T=len(beta), beta=beta, alpha=np.cumprod(1.0 - beta))


def make_schedule(T: int, kind: str = "linear") -> DiffusionSchedule:
    """Linear (reference-1000 range scaled by 1000/T) or cosine schedule.

    The scaling keeps the terminal alpha near zero for short horizons such
    as T=150/300, so reverse sampling can start from N(0, I).
    """
    if T < 2:
        raise ConfigError(f"make_schedule needs T >= 2, got {T}")
    if kind == "linear":
        scale = 1000.0 / T
        beta = np.linspace(1e-4 * scale, 2e-2 * scale, T)
        beta = np.clip(beta, 1e-8, 0.999)
        return DiffusionSchedule.from_beta(beta)
    if kind == "cosine":
        s = 0.008
        steps = np.arange(T + 1, dtype=np.float64) / T
        f = np.cos((steps + s) / (1.0 + s) * np.pi / 2.0) ** 2
        abar = f / f[0]
        beta = np.clip(1.0 - abar[1:] / abar[:-1], 1e-8, 0.999)
        return DiffusionSchedule.from_beta(beta)
    raise ConfigError(f"unknown schedule kind {kind!r}")
