"""User-path retiming: uniform resampling, ratio estimation, NTT construction.

A user polyline is resampled to 720 arc-length-uniform points; a 3-layer
perceptron (1024 -> 512 -> 180, ELU hidden, sigmoid output) maps the path
residuals, mass, and total length to 180 per-frame traversal ratio updates
whose cumulative sum indexes the resampled path (the normalized target
trajectory). The output trajectory carries identity rotations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateInputError, NumericError, ShapeError, UntrainedModelError
from .numerics import OptimState, adam_step, rng
from .numerics.tensor import Tensor, no_grad
from .trajdiff import ObjectTrajectory

N_FIX = 720
N_FRAMES = 180
_COND_REPEAT = 16                      # mass/length features tiled for emphasis
_IN_DIM = (N_FIX - 1) * 3 + 2 * _COND_REPEAT


@dataclass
class RatioVector:
    """r (180,) non-negative ratio updates; cumulative sum indexes the path."""

    r: np.ndarray

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=np.float32).reshape(-1)
        if self.r.shape != (N_FRAMES,):
            raise ShapeError(f"RatioVector needs ({N_FRAMES},), got {self.r.shape}")
        if np.any(self.r < 0):
            raise ShapeError("ratio updates must be non-negative")

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.r.astype(np.float64))


def resample_uniform(points, n_fix: int = N_FIX):
    """Arc-length-uniform resampling of a polyline (piecewise linear).

    Returns (phi_fix (n_fix, 3) float64, d_user). d_user is the total path
    length of the resampled polyline (sum of consecutive segment norms).
    Rejects paths with zero total length.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 2:
        raise ShapeError(f"user trajectory needs (N>=2, 3) points, got {pts.shape}")
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    total = float(seg.sum())
    if total <= 1e-12:
        raise DegenerateInputError("degenerate user trajectory: zero path length")
    s = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.linspace(0.0, total, n_fix)
    phi = np.stack([np.interp(targets, s, pts[:, d]) for d in range(3)], axis=1)
    d_user = float(np.linalg.norm(np.diff(phi, axis=0), axis=1).sum())
    return phi, d_user


def path_residuals(phi_fix: np.ndarray) -> np.ndarray:
    """Consecutive-point differences: translation-invariant path encoding."""
    return np.diff(np.asarray(phi_fix, dtype=np.float64), axis=0)


class RatioNetModel:
    """MLP 2159 -> 1024 -> 512 -> 180; ELU hidden, sigmoid output."""

    def __init__(self, lr: float = 1e-4, seed: int = 0):
        g = rng.stream(seed, 0x4A7)

        def dense(cin, cout):
            return (g.standard_normal((cin, cout)) * np.sqrt(2.0 / cin)).astype(np.float32)

        self.params = {
            "w1": dense(_IN_DIM, 1024), "b1": np.zeros(1024, dtype=np.float32),
            "w2": dense(1024, 512), "b2": np.zeros(512, dtype=np.float32),
            "w3": dense(512, N_FRAMES), "b3": np.full(N_FRAMES, -5.19, dtype=np.float32),
        }
        # output bias near logit(1/180) so initial ratios roughly sum to 1
        self.opt = OptimState.for_params(self.params, lr=lr)
        self.steps_trained = 0

    # residual steps are ~d/720 meters; keep their influence modest (the
    # timing profile depends mostly on mass and total length, and large shape
    # features hurt the sum(r)=1 generalization)
    RESID_SCALE = 2.0

    def _features(self, phi_fix, mass, d_user) -> np.ndarray:
        """Batch feature matrix (B, 2159); accepts single or batched inputs."""
        phi = np.asarray(phi_fix, dtype=np.float64)
        if phi.ndim == 2:
            phi = phi[None]
        masses = np.atleast_1d(np.asarray(mass, dtype=np.float64))
        ds = np.atleast_1d(np.asarray(d_user, dtype=np.float64))
        if np.any(masses <= 0):
            raise ConfigError("mass must be positive")
        if not (len(phi) == len(masses) == len(ds)):
            raise ShapeError(f"batch sizes differ: {len(phi)} paths, {len(masses)} masses, {len(ds)} lengths")
        resid = np.diff(phi, axis=1).reshape(len(phi), -1) * self.RESID_SCALE
        cond = np.concatenate([np.repeat(np.log(masses)[:, None], _COND_REPEAT, axis=1),
                               np.repeat(ds[:, None], _COND_REPEAT, axis=1)], axis=1)
        feat = np.concatenate([resid, cond], axis=1)
        return feat.astype(np.float32)

    def _forward(self, x: np.ndarray, wrapped=None) -> Tensor:
        def p(k):
            return wrapped[k] if wrapped is not None else Tensor(self.params[k])

        h = (Tensor(x) @ p("w1") + p("b1")).elu()
        h = (h @ p("w2") + p("b2")).elu()
        return (h @ p("w3") + p("b3")).sigmoid()

    def spec_dict(self) -> dict:
        return {"kind": "rationet"}

    def save(self, path):
        from .numerics import save_checkpoint
        save_checkpoint(path, self.params, spec=self.spec_dict(), step=self.opt.step,
                        meta={"steps_trained": self.steps_trained})

    @classmethod
    def load(cls, path) -> "RatioNetModel":
        from .numerics import load_checkpoint, restore_into
        header, arrays = load_checkpoint(path)
        model = cls()
        restore_into(model.params, arrays)
        model.steps_trained = header["meta"].get("steps_trained", header["step"])
        return model


def estimate_ratios(model: RatioNetModel, phi_fix: np.ndarray, mass: float,
                    d_user: float) -> RatioVector:
    """Predict the 180 ratio updates for a resampled path and mass."""
    if model.steps_trained <= 0:
        raise UntrainedModelError("RatioNet has no trained parameters")
    x = model._features(phi_fix, mass, d_user)
    with no_grad():
        out = model._forward(x)
    return RatioVector(out.data[0])


def build_ntt(ratios, phi_fix: np.ndarray) -> np.ndarray:
    """Normalized target trajectory: phi_ntt[t] = phi_fix[round(cum_t * N_fix)].

    Indices are clamped to [0, N_fix - 1] and are monotone non-decreasing
    for non-negative ratios.
    """
    r = ratios.r if isinstance(ratios, RatioVector) else np.asarray(ratios, dtype=np.float64)
    if np.any(r < 0):
        raise ShapeError("ratios must be non-negative")
    phi_fix = np.asarray(phi_fix, dtype=np.float64)
    n_fix = phi_fix.shape[0]
    cum = np.cumsum(r.astype(np.float64))
    ids = np.clip(np.round(cum * n_fix).astype(np.int64), 0, n_fix - 1)
    return phi_fix[ids]


def ntt_to_trajectory(phi_ntt: np.ndarray, mass: float | None = None,
                      fps: float = 50.0) -> ObjectTrajectory:
    """Wrap an NTT as an object trajectory with identity rotations."""
    n = phi_ntt.shape[0]
    poses = np.zeros((n, 9), dtype=np.float32)
    poses[:, :3] = phi_ntt
    poses[:, 3] = 1.0
    poses[:, 7] = 1.0
    return ObjectTrajectory(poses, fps=fps, mass=mass)


def ratio_train_step(model: RatioNetModel, phi_fix, mass, d_user, r_hat) -> float:
    """L2 on ratios, their velocities and accelerations, plus (sum(r)-1)^2.

    All terms carry equal weight; batched inputs are averaged over the batch.
    Ground-truth ratio vectors must each sum to ~1.
    """
    r_hat = np.asarray(r_hat, dtype=np.float32)
    if r_hat.ndim == 1:
        r_hat = r_hat[None]
    if r_hat.shape[1:] != (N_FRAMES,):
        raise ShapeError(f"ground-truth ratios need (B, {N_FRAMES}), got {r_hat.shape}")
    sums = r_hat.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-3):
        raise ConfigError(f"ground-truth ratios sum to {sums}, expected ~1")
    x = model._features(phi_fix, mass, d_user)
    if x.shape[0] != r_hat.shape[0]:
        raise ShapeError(f"{x.shape[0]} inputs vs {r_hat.shape[0]} ratio targets")
    b = x.shape[0]
    wrapped = {k: Tensor(v, requires_grad=True) for k, v in model.params.items()}
    r = model._forward(x, wrapped)                     # (B, 180)
    gt = Tensor(r_hat)
    d = r - gt
    loss = (d * d).sum()
    dv = (r[:, 1:] - r[:, :-1]) - Tensor(r_hat[:, 1:] - r_hat[:, :-1])
    loss = loss + (dv * dv).sum()
    acc_pred = r[:, 2:] - r[:, 1:-1] * 2.0 + r[:, :-2]
    da = acc_pred - Tensor(r_hat[:, 2:] - 2 * r_hat[:, 1:-1] + r_hat[:, :-2])
    loss = loss + (da * da).sum()
    one = r.sum(axis=1) - 1.0
    loss = (loss + (one * one).sum()) * (1.0 / b)
    val = float(loss.data)
    if not np.isfinite(val):
        raise NumericError("non-finite ratio loss")
    loss.backward()
    grads = {k: (w.grad if w.grad is not None else np.zeros_like(w.data)) for k, w in wrapped.items()}
    model.params, model.opt = adam_step(model.params, grads, model.opt)
    model.steps_trained += 1
    return val


def train_rationet(model: RatioNetModel, data, steps: int, batch: int = 16, seed: int = 0) -> list:
    """Minibatch training loop over datagen ratio examples; returns the loss curve."""
    losses = []
    g = rng.stream(seed, 0x7AB)
    phis = np.stack([ex["phi_fix"] for ex in data])
    masses = np.array([ex["mass"] for ex in data])
    ds = np.array([ex["d_user"] for ex in data])
    rh = np.stack([ex["r_hat"] for ex in data])
    for _ in range(steps):
        idx = g.choice(len(data), size=min(batch, len(data)), replace=False)
        losses.append(ratio_train_step(model, phis[idx], masses[idx], ds[idx], rh[idx]))
    return losses


def retime_user_path(model: RatioNetModel, points, mass: float):
    """Full pipeline: resample, estimate ratios, build the NTT trajectory."""
    phi_fix, d_user = resample_uniform(points)
    ratios = estimate_ratios(model, phi_fix, mass, d_user)
    phi_ntt = build_ntt(ratios, phi_fix)
    return ntt_to_trajectory(phi_ntt, mass=mass), ratios, phi_fix, d_user


def uniform_interpolation_ntt(phi_fix: np.ndarray, n: int = N_FRAMES) -> np.ndarray:
    """Baseline: uniform sampling of the path over the horizon."""
    ids = np.clip(np.round(np.linspace(0, 1, n) * phi_fix.shape[0]).astype(np.int64),
                  0, phi_fix.shape[0] - 1)
    return np.asarray(phi_fix, dtype=np.float64)[ids]
