"""Hand joint motion synthesis conditioned on an object trajectory and mass.

Joint tracks are (N, 3K) with K=42 (21 joints per hand, left then right).
The denoiser is a 2D UNet over a (3, N, 42) xyz-channel image; the object
pose (9), mass feature (1), and optional action one-hot (6) are broadcast
as constant-width conditioning channels.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .diffusion import DenoiserUNet2D, diffusion_train_step, sample_sequence
from .errors import ConfigError, ShapeError
from .handmodel import bone_edges
from .numerics.tensor import Tensor
from .trajdiff import ObjectTrajectory

K_JOINTS = 42
K_BONES = 40
GEO_WEIGHTS = {"rec": 1.0, "vel": 5.0, "acc": 5.0, "blen": 10.0}

_EDGES = bone_edges()


@dataclass
class JointTrack:
    """joints (N, 126) meters; 50 fps."""

    joints: np.ndarray
    fps: float = 50.0

    def __post_init__(self):
        self.joints = np.asarray(self.joints, dtype=np.float32)
        if self.joints.ndim != 2 or self.joints.shape[1] != 3 * K_JOINTS:
            raise ShapeError(f"JointTrack needs (N, {3 * K_JOINTS}), got {self.joints.shape}")
        if not np.isfinite(self.joints).all():
            raise ShapeError("JointTrack contains non-finite values")

    @property
    def n_frames(self) -> int:
        return self.joints.shape[0]

    def as_points(self) -> np.ndarray:
        return self.joints.reshape(self.n_frames, K_JOINTS, 3)


def d_blen(joints) -> np.ndarray:
    """Per-frame bone lengths (N, 40) in the documented skeleton edge order."""
    j = np.asarray(joints, dtype=np.float64)
    if j.ndim == 2:
        j = j.reshape(j.shape[0], K_JOINTS, 3)
    seg = j[:, _EDGES[:, 0]] - j[:, _EDGES[:, 1]]
    return np.linalg.norm(seg, axis=2)


def hand_geo_losses(j_hat, j_gt) -> dict:
    """Unweighted losses {rec, vel, acc, blen} on (N, 126) tracks.

    Reduction: plain sums of squares; callers weight with GEO_WEIGHTS
    (1, 5, 5, 10)."""
    a = np.asarray(j_hat, dtype=np.float64)
    b = np.asarray(j_gt, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"hand_geo_losses: {a.shape} vs {b.shape}")
    d = a - b
    rec = float(np.sum(d * d))
    dv = np.diff(a, axis=0) - np.diff(b, axis=0)
    vel = float(np.sum(dv * dv))
    da = np.diff(a, 2, axis=0) - np.diff(b, 2, axis=0)
    acc = float(np.sum(da * da))
    dl = d_blen(a) - d_blen(b)
    blen = float(np.sum(dl * dl))
    return {"rec": rec, "vel": vel, "acc": acc, "blen": blen}


def _blen_t(x: Tensor) -> Tensor:
    """x (B, 3, N, 42) -> bone lengths (B, N, 40)."""
    seg = x[:, :, :, _EDGES[:, 0]] - x[:, :, :, _EDGES[:, 1]]
    return ((seg * seg).sum(axis=1) + 1e-12).sqrt()


def hand_geo_loss_t(x0_hat: Tensor, x0: np.ndarray, weights: np.ndarray):
    """Batched training version on (B, 3, N, 42); per-item lambda_geo weights."""
    bsz = x0_hat.shape[0]
    gt = np.asarray(x0, dtype=np.float32)
    d = x0_hat - Tensor(gt)
    rec = (d * d).sum(axis=(1, 2, 3))
    dv = (x0_hat[:, :, 1:] - x0_hat[:, :, :-1]) - Tensor(gt[:, :, 1:] - gt[:, :, :-1])
    vel = (dv * dv).sum(axis=(1, 2, 3))
    acc_hat = x0_hat[:, :, 2:] - x0_hat[:, :, 1:-1] * 2.0 + x0_hat[:, :, :-2]
    da = acc_hat - Tensor(gt[:, :, 2:] - 2.0 * gt[:, :, 1:-1] + gt[:, :, :-2])
    acc = (da * da).sum(axis=(1, 2, 3))
    dl = _blen_t(x0_hat) - Tensor(_blen_np(gt))
    blen = (dl * dl).sum(axis=(1, 2))
    w = GEO_WEIGHTS
    per_item = rec * w["rec"] + vel * w["vel"] + acc * w["acc"] + blen * w["blen"]
    weighted = (per_item * Tensor(weights.astype(np.float32))).sum() * (1.0 / bsz)
    terms = {"geo_rec": float(rec.data.mean()), "geo_vel": float(vel.data.mean()),
             "geo_acc": float(acc.data.mean()), "geo_blen": float(blen.data.mean())}
    return weighted, terms


def _blen_np(x: np.ndarray) -> np.ndarray:
    seg = x[:, :, :, _EDGES[:, 0]] - x[:, :, :, _EDGES[:, 1]]
    return np.sqrt(np.sum(seg * seg, axis=1) + 1e-12).astype(np.float32)


def track_to_image(joints: np.ndarray) -> np.ndarray:
    """(N, 126) -> (3, N, 42)."""
    n = joints.shape[0]
    return np.ascontiguousarray(joints.reshape(n, K_JOINTS, 3).transpose(2, 0, 1))


def image_to_track(img: np.ndarray) -> np.ndarray:
    """(3, N, 42) -> (N, 126)."""
    return np.ascontiguousarray(img.transpose(1, 2, 0).reshape(img.shape[1], 3 * K_JOINTS))


class HandDiffModel(DenoiserUNet2D):
    """2D UNet denoiser over (3, N, 42) joint images."""

    COND_CH = 16  # object pose 9 + log-mass 1 + action one-hot 6

    def __init__(self, n_frames: int = 180, widths=(16, 32), T: int = 150,
                 lr: float = 1e-4, seed: int = 0, use_action: bool = False,
                 sched_kind: str = "linear"):
        super().__init__(data_ch=3, cond_ch=self.COND_CH, widths=widths,
                         T=T, sched_kind=sched_kind, lr=lr, seed=seed)
        self.n_frames = n_frames
        self.use_action = use_action

    def encode_cond(self, trajs, masses, actions=None) -> np.ndarray:
        """(B, 16, N, 42): pose channels vary along time, constant across joints."""
        masses = np.atleast_1d(np.asarray(masses, dtype=np.float64))
        b = len(masses)
        n = self.n_frames
        feat = np.zeros((b, self.COND_CH, n, K_JOINTS), dtype=np.float32)
        for i, traj in enumerate(trajs):
            poses = traj.poses if isinstance(traj, ObjectTrajectory) else np.asarray(traj, dtype=np.float32)
            if poses.shape != (n, 9):
                raise ConfigError(f"conditioning trajectory must be ({n}, 9), got {poses.shape}")
            feat[i, :9] = poses.T[:, :, None]
        if np.any(masses <= 0):
            raise ConfigError("masses must be positive")
        feat[:, 9] = np.log(masses)[:, None, None]
        if self.use_action and actions is not None:
            for i, a in enumerate(np.atleast_1d(actions)):
                if not 0 <= int(a) <= 5:
                    raise ConfigError(f"action label out of range: {a}")
                feat[i, 10 + int(a)] = 1.0
        return feat

    def train_step(self, joint_batch: np.ndarray, trajs, masses, actions=None, seed: int = 0) -> dict:
        """joint_batch (B, N, 126)."""
        x = np.stack([track_to_image(j) for j in joint_batch])
        cond = self.encode_cond(trajs, masses, actions)
        return diffusion_train_step(self, x, cond, geo_loss_fn=hand_geo_loss_t, seed=seed)

    def sample_joints(self, trajs, masses, actions=None, seed: int = 0) -> np.ndarray:
        """(B, N, 126) sampled joint tracks."""
        cond = self.encode_cond(trajs, masses, actions)
        x = sample_sequence(self, cond, (cond.shape[0], 3, self.n_frames, K_JOINTS), seed)
        return np.stack([image_to_track(img) for img in x])

    def spec_dict(self) -> dict:
        return {"kind": "handdiff", "n_frames": self.n_frames, "widths": list(self.widths),
                "T": self.sched.T, "use_action": self.use_action}

    def save(self, path):
        from .numerics import save_checkpoint
        save_checkpoint(path, self.params, spec=self.spec_dict(), step=self.opt.step,
                        meta={"steps_trained": self.steps_trained})

    @classmethod
    def load(cls, path) -> "HandDiffModel":
        from .numerics import load_checkpoint, restore_into
        header, arrays = load_checkpoint(path)
        s = header["spec"]
        model = cls(n_frames=s["n_frames"], widths=tuple(s["widths"]), T=s["T"],
                    use_action=s["use_action"])
        restore_into(model.params, arrays)
        model.steps_trained = header["meta"].get("steps_trained", header["step"])
        return model


def synthesize_hands(model: HandDiffModel, traj: ObjectTrajectory, mass: float,
                     action: int | None = None, seed: int = 0) -> JointTrack:
    """Reverse-diffuse a joint track conditioned on (trajectory, mass, action)."""
    if traj.n_frames != model.n_frames:
        raise ConfigError(f"trajectory horizon {traj.n_frames} does not match "
                          f"model horizon {model.n_frames}")
    joints = model.sample_joints([traj], [mass], None if action is None else [action], seed=seed)
    return JointTrack(joints[0], fps=traj.fps)


def pad_track(joints: np.ndarray, n: int):
    """Zero-pad (M, 126) to (n, 126); returns (padded, validity mask)."""
    m = joints.shape[0]
    if m > n:
        raise ShapeError(f"track length {m} exceeds horizon {n}")
    out = np.zeros((n, joints.shape[1]), dtype=np.float32)
    out[:m] = joints
    mask = np.zeros(n, dtype=bool)
    mask[:m] = True
    return out, mask


def save_jnt(path, track: JointTrack):
    header = {"n": track.n_frames, "k": K_JOINTS, "fps": track.fps}
    hb = json.dumps(header).encode()
    with open(path, "wb") as f:
        f.write(struct.pack("<I", len(hb)))
        f.write(hb)
        f.write(np.ascontiguousarray(track.joints, dtype="<f4").tobytes())


def load_jnt(path) -> JointTrack:
    with open(path, "rb") as f:
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode())
        blob = f.read()
    joints = np.frombuffer(blob, dtype="<f4").reshape(header["n"], 3 * header["k"]).copy()
    return JointTrack(joints, fps=header["fps"])
