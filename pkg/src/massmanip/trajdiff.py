"""Object trajectory synthesis conditioned on mass and action.

Rotations are synthesized as six reference-vertex positions in the object
frame (plus a global translation track) and recovered per frame by
orthogonal Procrustes against the template vertices. State layout per
frame: 21 = 18 reference-vertex coords + 3 translation.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diffusion import DenoiserUNet1D, diffusion_train_step, sample_sequence
from .errors import ConfigError, ShapeError
from .handmodel import matrix_to_rot6d, rot6d_to_matrix
from .numerics.tensor import Tensor

STATE_DIM = 21
N_REFS = 6
N_PAIRS = 15
GEO_WEIGHTS = {"rec": 1.0, "vel": 5.0, "acc": 5.0, "ref": 1.0}

_PAIR_I, _PAIR_J = np.triu_indices(N_REFS, k=1)


def template_vertices(radius: float = 0.1) -> np.ndarray:
    """Six canonical points: +-radius on each object axis, centroid at origin."""
    if radius <= 0:
        raise ConfigError(f"template radius must be positive, got {radius}")
    t = np.zeros((6, 3))
    t[0, 0], t[1, 0] = radius, -radius
    t[2, 1], t[3, 1] = radius, -radius
    t[4, 2], t[5, 2] = radius, -radius
    return t


@dataclass
class ObjectTrajectory:
    """poses (N, 9): [tau (3), rot6 (6)] per frame at a fixed fps."""

    poses: np.ndarray
    fps: float = 50.0
    mass: float | None = None
    action: int | None = None
    degenerate_frames: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        self.poses = np.asarray(self.poses, dtype=np.float32)
        if self.poses.ndim != 2 or self.poses.shape[1] != 9:
            raise ShapeError(f"trajectory poses must be (N, 9), got {self.poses.shape}")

    @property
    def n_frames(self) -> int:
        return self.poses.shape[0]

    @property
    def tau(self) -> np.ndarray:
        return self.poses[:, :3]

    @property
    def rot6(self) -> np.ndarray:
        return self.poses[:, 3:]

    def rotations(self) -> np.ndarray:
        return rot6d_to_matrix(self.poses[:, 3:])

    @staticmethod
    def stationary(n: int, fps: float = 50.0) -> "ObjectTrajectory":
        poses = np.zeros((n, 9), dtype=np.float32)
        poses[:, 3] = 1.0
        poses[:, 7] = 1.0
        return ObjectTrajectory(poses, fps=fps)


@dataclass
class RefVertexTrack:
    """p_ref (N, 6, 3) object-frame reference vertices; tau (N, 3) translations."""

    p_ref: np.ndarray
    tau: np.ndarray

    def __post_init__(self):
        self.p_ref = np.asarray(self.p_ref, dtype=np.float32)
        self.tau = np.asarray(self.tau, dtype=np.float32)
        if self.p_ref.ndim != 3 or self.p_ref.shape[1:] != (6, 3) or self.tau.shape != (self.p_ref.shape[0], 3):
            raise ShapeError(f"RefVertexTrack shapes: p_ref {self.p_ref.shape}, tau {self.tau.shape}")

    def to_state(self) -> np.ndarray:
        """(N, 21) = [refs flat, tau]."""
        n = self.p_ref.shape[0]
        return np.concatenate([self.p_ref.reshape(n, 18), self.tau], axis=1)

    @staticmethod
    def from_state(state: np.ndarray) -> "RefVertexTrack":
        state = np.asarray(state)
        if state.ndim != 2 or state.shape[1] != STATE_DIM:
            raise ShapeError(f"state must be (N, {STATE_DIM}), got {state.shape}")
        return RefVertexTrack(state[:, :18].reshape(-1, 6, 3), state[:, 18:])


def pose_to_refs(traj: ObjectTrajectory, p_temp: np.ndarray) -> RefVertexTrack:
    """Rotate the template by each frame's rotation (object frame); copy tau."""
    r = traj.rotations()                       # (N,3,3)
    p_ref = np.einsum("nij,kj->nki", r, p_temp)
    return RefVertexTrack(p_ref, traj.tau.copy())


def refs_to_pose(track: RefVertexTrack, p_temp: np.ndarray, fps: float = 50.0) -> ObjectTrajectory:
    """Per-frame Kabsch alignment of the template onto the reference vertices.

    Rank-deficient frames (noisy collinear refs) reuse the previous frame's
    rotation and are listed in degenerate_frames (identity for frame 0).
    """
    n = track.p_ref.shape[0]
    a = p_temp - p_temp.mean(axis=0)
    rot6 = np.zeros((n, 6), dtype=np.float64)
    prev = np.eye(3)
    degenerate = []
    for i in range(n):
        b = track.p_ref[i].astype(np.float64)
        b = b - b.mean(axis=0)
        h = a.T @ b
        u, s, vt = np.linalg.svd(h)
        if s[1] < 1e-9 * max(s[0], 1e-12) or s[0] < 1e-15:
            degenerate.append(i)
            r = prev
        else:
            d = np.sign(np.linalg.det(vt.T @ u.T))
            r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
        rot6[i] = matrix_to_rot6d(r)
        prev = r
    poses = np.concatenate([track.tau.astype(np.float64), rot6], axis=1)
    return ObjectTrajectory(poses, fps=fps,
                            degenerate_frames=np.asarray(degenerate, dtype=np.int64))


def pairwise_distances(p_ref) -> np.ndarray:
    """(..., 6, 3) -> (..., 15) distances between all reference-vertex pairs."""
    diff = p_ref[..., _PAIR_I, :] - p_ref[..., _PAIR_J, :]
    return np.linalg.norm(diff, axis=-1)


def _pairwise_t(p_ref: Tensor) -> Tensor:
    diff = p_ref[..., _PAIR_I, :] - p_ref[..., _PAIR_J, :]
    return ((diff * diff).sum(axis=-1) + 1e-12).sqrt()


def traj_geo_losses(x0_hat, x0) -> dict:
    """Unweighted geometric losses on (N, 21) tracks: rec/vel/acc on the full
    state, ref on reference vertices plus their pairwise distances."""
    x0_hat = np.asarray(x0_hat, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    if x0_hat.shape != x0.shape:
        raise ShapeError(f"traj_geo_losses: {x0_hat.shape} vs {x0.shape}")
    d = x0_hat - x0
    rec = float(np.sum(d * d))
    dv = np.diff(x0_hat, axis=0) - np.diff(x0, axis=0)
    vel = float(np.sum(dv * dv))
    da = np.diff(x0_hat, 2, axis=0) - np.diff(x0, 2, axis=0)
    acc = float(np.sum(da * da))
    refs_hat = x0_hat[:, :18].reshape(-1, 6, 3)
    refs = x0[:, :18].reshape(-1, 6, 3)
    dref = refs_hat - refs
    drel = pairwise_distances(refs_hat) - pairwise_distances(refs)
    ref = float(np.sum(dref * dref) + np.sum(drel * drel))
    return {"rec": rec, "vel": vel, "acc": acc, "ref": ref}


def traj_geo_loss_t(x0_hat: Tensor, x0: np.ndarray, weights: np.ndarray):
    """Batched Tensor version: both (B, 21, N) channels-first, per-item
    lambda_geo weights; returns (weighted scalar, term dict)."""
    b = x0_hat.shape[0]
    x0_t = np.asarray(x0, dtype=np.float32)                            # (B,21,N)
    d = x0_hat - Tensor(x0_t)
    rec = (d * d).sum(axis=(1, 2))
    dv = (x0_hat[:, :, 1:] - x0_hat[:, :, :-1]) - Tensor(x0_t[:, :, 1:] - x0_t[:, :, :-1])
    vel = (dv * dv).sum(axis=(1, 2))
    acc_hat = x0_hat[:, :, 2:] - x0_hat[:, :, 1:-1] * 2.0 + x0_hat[:, :, :-2]
    acc_gt = x0_t[:, :, 2:] - 2.0 * x0_t[:, :, 1:-1] + x0_t[:, :, :-2]
    da = acc_hat - Tensor(acc_gt)
    acc = (da * da).sum(axis=(1, 2))
    refs_hat = x0_hat[:, :18].swapaxes(1, 2).reshape(b, -1, 6, 3)
    refs_gt = np.transpose(x0_t[:, :18], (0, 2, 1)).reshape(b, -1, 6, 3)
    dref = refs_hat - Tensor(refs_gt)
    ref_pos = (dref * dref).sum(axis=(1, 2, 3))
    drel = _pairwise_t(refs_hat) - Tensor(pairwise_distances(refs_gt).astype(np.float32))
    ref = ref_pos + (drel * drel).sum(axis=(1, 2))
    w = GEO_WEIGHTS
    per_item = rec * w["rec"] + vel * w["vel"] + acc * w["acc"] + ref * w["ref"]
    weighted = (per_item * Tensor(weights.astype(np.float32))).sum() * (1.0 / b)
    terms = {"geo_rec": float(rec.data.mean()), "geo_vel": float(vel.data.mean()),
             "geo_acc": float(acc.data.mean()), "geo_ref": float(ref.data.mean())}
    return weighted, terms


class TrajDiffModel(DenoiserUNet1D):
    """1D UNet denoiser over (21, N) states, conditioned on mass and action."""

    COND_CH = 7  # log-mass + one-hot action

    def __init__(self, n_frames: int = 180, widths=(64, 128), T: int = 300,
                 radius: float = 0.1, lr: float = 1e-4, seed: int = 0,
                 use_mass: bool = True, sched_kind: str = "linear"):
        super().__init__(data_ch=STATE_DIM, cond_ch=self.COND_CH, widths=widths,
                         T=T, sched_kind=sched_kind, lr=lr, seed=seed)
        self.n_frames = n_frames
        self.radius = radius
        self.use_mass = use_mass

    def encode_cond(self, masses, actions, n: int | None = None) -> np.ndarray:
        """(B, 7, N) conditioning image; mass channel zeroed when use_mass=False."""
        n = n or self.n_frames
        masses = np.atleast_1d(np.asarray(masses, dtype=np.float64))
        b = len(masses)
        feat = np.zeros((b, self.COND_CH, n), dtype=np.float32)
        if self.use_mass:
            if np.any(masses <= 0):
                raise ConfigError("masses must be positive")
            feat[:, 0, :] = np.log(masses)[:, None]
        if actions is not None:
            acts = np.atleast_1d(np.asarray(actions, dtype=np.int64))
            if np.any(acts < 0) or np.any(acts > 5):
                raise ConfigError("action labels must be in [0, 5]")
            for i, a in enumerate(acts):
                feat[i, 1 + a, :] = 1.0
        return feat

    def train_step(self, states: np.ndarray, masses, actions, seed: int = 0) -> dict:
        """states (B, N, 21) ground-truth tracks."""
        x = np.transpose(np.asarray(states, dtype=np.float32), (0, 2, 1))
        cond = self.encode_cond(masses, actions, n=x.shape[2])
        return diffusion_train_step(self, x, cond, geo_loss_fn=traj_geo_loss_t, seed=seed)

    def sample_states(self, masses, actions, n: int | None = None, seed: int = 0) -> np.ndarray:
        """(B, N, 21) sampled reference-vertex states."""
        n = n or self.n_frames
        cond = self.encode_cond(masses, actions, n=n)
        x = sample_sequence(self, cond, (cond.shape[0], STATE_DIM, n), seed)
        return np.transpose(x, (0, 2, 1))

    def spec_dict(self) -> dict:
        return {"kind": "trajdiff", "n_frames": self.n_frames, "widths": list(self.widths),
                "T": self.sched.T, "radius": self.radius, "use_mass": self.use_mass}

    def save(self, path):
        from .numerics import save_checkpoint
        save_checkpoint(path, self.params, spec=self.spec_dict(), step=self.opt.step,
                        meta={"steps_trained": self.steps_trained})

    @classmethod
    def load(cls, path) -> "TrajDiffModel":
        from .numerics import load_checkpoint, restore_into
        header, arrays = load_checkpoint(path)
        s = header["spec"]
        model = cls(n_frames=s["n_frames"], widths=tuple(s["widths"]), T=s["T"],
                    radius=s["radius"], use_mass=s["use_mass"])
        restore_into(model.params, arrays)
        model.steps_trained = header["meta"].get("steps_trained", header["step"])
        return model


def synthesize_trajectory(model: TrajDiffModel, mass: float, action: int | None,
                          n: int | None = None, seed: int = 0) -> ObjectTrajectory:
    """Sample a (N, 21) state track and recover object poses via Procrustes."""
    if mass <= 0:
        raise ConfigError(f"mass must be positive, got {mass}")
    states = model.sample_states([mass], None if action is None else [action], n=n, seed=seed)
    track = RefVertexTrack.from_state(states[0])
    traj = refs_to_pose(track, template_vertices(model.radius))
    traj.mass = mass
    traj.action = action
    return traj


def rotation_jitter(traj: ObjectTrajectory) -> float:
    """Mean angular acceleration magnitude (rad/s^2): smoothness diagnostic."""
    r = traj.rotations()
    if len(r) < 3:
        return 0.0
    rel = np.einsum("nij,nkj->nik", r[1:], r[:-1])        # R_t @ R_{t-1}^T
    tr = np.trace(rel, axis1=1, axis2=2)
    ang = np.arccos(np.clip((tr - 1) / 2, -1.0, 1.0)) * traj.fps
    return float(np.mean(np.abs(np.diff(ang))) * traj.fps)


def save_traj(path, traj: ObjectTrajectory):
    header = {"n": traj.n_frames, "fps": traj.fps, "mass": traj.mass, "action": traj.action}
    hb = json.dumps(header).encode()
    with open(path, "wb") as f:
        f.write(struct.pack("<I", len(hb)))
        f.write(hb)
        f.write(np.ascontiguousarray(traj.poses, dtype="<f4").tobytes())
    return Path(path)


def load_traj(path) -> ObjectTrajectory:
    with open(path, "rb") as f:
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode())
        blob = f.read()
    poses = np.frombuffer(blob, dtype="<f4").reshape(header["n"], 9).copy()
    return ObjectTrajectory(poses, fps=header["fps"], mass=header["mass"], action=header["action"])
