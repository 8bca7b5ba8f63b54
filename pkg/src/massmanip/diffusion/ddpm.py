"""DDPM core: forward noising, x0 recovery, ancestral reverse steps, training.

Conventions: data batches are (B, *item_shape) float32; diffusion steps t
are 1-based ints or (B,) int arrays; the posterior variance is beta_t.
q_sample / reverse_step are plain numpy (never differentiated); approx_x0
also accepts an autodiff Tensor for the predicted noise so geometric losses
can backpropagate into the denoiser.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, NumericError, UntrainedModelError
from ..numerics import rng
from ..numerics.tensor import Tensor, no_grad
from .schedule import DiffusionSchedule


@dataclass
class Condition:
    """Mass (kg) plus optional one-hot action label."""

    m: float
    a: np.ndarray | None = None

    def __post_init__(self):
        if self.m <= 0:
            raise ConfigError(f"mass must be positive, got {self.m}")
        if self.a is not None:
            self.a = np.asarray(self.a, dtype=np.float32).reshape(-1)
            if self.a.shape != (6,) or not np.isclose(self.a.sum(), 1.0) or np.count_nonzero(self.a == 1.0) != 1:
                raise ConfigError("action label must be a one-hot vector in R^6")

    @property
    def mass_feature(self) -> float:
        """log(m / 1kg): equalizes sensitivity across the 0.05-10 kg range."""
        return float(np.log(self.m))


def _coef_shape(val: np.ndarray, target_ndim: int) -> np.ndarray:
    """Reshape per-item coefficients (B,) for broadcasting over item dims."""
    val = np.asarray(val, dtype=np.float64)
    if val.ndim == 0:
        return val
    return val.reshape(val.shape + (1,) * (target_ndim - 1))


def q_sample(x0: np.ndarray, t, eps: np.ndarray, sched: DiffusionSchedule) -> np.ndarray:
    """Forward noising: x_t = sqrt(alpha_t) x0 + sqrt(1 - alpha_t) eps."""
    x0 = np.asarray(x0)
    eps = np.asarray(eps)
    if eps.shape != x0.shape:
        raise ConfigError(f"q_sample: eps shape {eps.shape} vs x0 {x0.shape}")
    a = _coef_shape(sched.alpha_at(t), x0.ndim)
    return (np.sqrt(a) * x0 + np.sqrt(1.0 - a) * eps).astype(x0.dtype)


def approx_x0(xt, t, eps_hat, sched: DiffusionSchedule):
    """Invert q_sample with the predicted noise: x0_hat = xt/sqrt(a) - sqrt(1/a - 1) eps_hat.

    Returns a Tensor when eps_hat is a Tensor (gradients flow through it).
    """
    if isinstance(eps_hat, Tensor):
        a = _coef_shape(sched.alpha_at(t), eps_hat.ndim)
        inv = np.asarray(1.0 / np.sqrt(a), dtype=eps_hat.dtype)
        coef = np.asarray(np.sqrt(1.0 / a - 1.0), dtype=eps_hat.dtype)
        xt_arr = xt.data if isinstance(xt, Tensor) else np.asarray(xt, dtype=eps_hat.dtype)
        return Tensor(inv * xt_arr) - eps_hat * Tensor(coef * np.ones_like(xt_arr))
    xt = np.asarray(xt)
    a = _coef_shape(sched.alpha_at(t), xt.ndim)
    return (xt / np.sqrt(a) - np.sqrt(1.0 / a - 1.0) * np.asarray(eps_hat)).astype(xt.dtype)


def reverse_step(xt: np.ndarray, t: int, eps_hat: np.ndarray, sched: DiffusionSchedule,
                 noise: np.ndarray | None = None) -> np.ndarray:
    """One ancestral step: x_{t-1} = mu(x_t, eps_hat) + sqrt(beta_t) z; deterministic at t=1."""
    t = int(t)
    beta = float(sched.beta_at(t))
    alpha_bar = float(sched.alpha_at(t))
    mu = (xt - beta / np.sqrt(1.0 - alpha_bar) * eps_hat) / np.sqrt(1.0 - beta)
    if t == 1:
        return mu.astype(xt.dtype)
    if noise is None:
        raise ConfigError("reverse_step needs noise for t > 1")
    return (mu + np.sqrt(beta) * noise).astype(xt.dtype)


def sample_sequence(model, cond, shape: tuple, seed: int) -> np.ndarray:
    """Full reverse chain from N(0, I); deterministic per (model, cond, shape, seed).

    `model` must expose predict_eps(x (B,...), t int, cond) -> array and a
    schedule attribute `sched`. Batch items draw from independent streams.
    """
    sched: DiffusionSchedule = model.sched
    _require_trained(model)
    B = shape[0]
    item = shape[1:]
    x = np.stack([rng.stream(seed, i, 0).standard_normal(item) for i in range(B)]).astype(np.float32)
    with no_grad():
        for t in range(sched.T, 0, -1):
            eps_hat = model.predict_eps(x, t, cond)
            if not np.isfinite(eps_hat).all():
                raise NumericError(f"non-finite denoiser output at diffusion step {t}")
            if t == 1:
                x = reverse_step(x, t, eps_hat, sched)
            else:
                noise = np.stack([rng.stream(seed, i, t).standard_normal(item) for i in range(B)]).astype(np.float32)
                x = reverse_step(x, t, eps_hat, sched, noise)
    return x


def _require_trained(model):
    if getattr(model, "steps_trained", 0) <= 0:
        raise UntrainedModelError(f"{type(model).__name__} has no trained parameters")
    for k, p in model.params.items():
        if not np.isfinite(p).all():
            raise NumericError(f"parameter {k!r} contains non-finite values")


def lambda_geo(t, T: int):
    """Geometric-loss weight 10/exp(10 t / T); decreasing in t, ~10 near t=0."""
    return 10.0 / np.exp(10.0 * np.asarray(t, dtype=np.float64) / T)


def diffusion_train_step(model, x0: np.ndarray, cond, geo_loss_fn=None,
                         lambda_geo_fn=lambda_geo, seed: int = 0) -> dict:
    """One training step: L_simple + lambda_geo(t) * L_geo, Adam update on the model.

    geo_loss_fn(x0_hat Tensor, x0 array, weights (B,)) -> (scalar Tensor, term dict).
    Reduction: sum over item dims, mean over the batch. Aborts on non-finite
    loss, reporting the sampled diffusion steps.
    """
    sched: DiffusionSchedule = model.sched
    B = x0.shape[0]
    step_id = model.opt.step
    g = rng.stream(seed, 0xD1F, step_id)
    t = g.integers(1, sched.T + 1, size=B)
    eps = np.stack([rng.stream(seed, 0xE95, step_id, i).standard_normal(x0.shape[1:])
                    for i in range(B)]).astype(np.float32)
    xt = q_sample(x0, t, eps, sched)

    wrapped = model.wrap_params()
    eps_hat = model.forward_t(xt, t, cond, wrapped)
    diff = eps_hat - Tensor(eps)
    simple = (diff * diff).sum() * (1.0 / B)

    terms = {}
    if geo_loss_fn is not None:
        x0_hat = approx_x0(xt, t, eps_hat, sched)
        w = np.asarray(lambda_geo_fn(t, sched.T), dtype=np.float64)
        geo, terms = geo_loss_fn(x0_hat, x0, w)
        total = simple + geo
        geo_val = float(geo.data)
    else:
        total = simple
        geo_val = 0.0

    val = float(total.data)
    if not np.isfinite(val):
        raise NumericError(f"non-finite training loss at diffusion steps t={t.tolist()}")
    total.backward()
    model.apply_grads(wrapped)
    out = {"simple": float(simple.data), "geo": geo_val, "total": val}
    out.update(terms)
    return out
