"""Per-vertex hand contact probability estimation.

Three 1-D convolution layers over time with ELU hidden activations and a
sigmoid output, as a plain temporal conv net: input channels are the raw
joint track (126), object poses (9), and the condition vector (log-mass +
action one-hot, 7); output channels are the hand vertex count l.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError, ShapeError, UntrainedModelError
from .numerics import OptimState, adam_step, rng
from .numerics.tensor import Tensor, conv1d, no_grad
from .trajdiff import ObjectTrajectory

IN_CH = 126 + 9 + 7


@dataclass
class ContactMap:
    """b (N, l) contact probabilities in [0, 1]."""

    b: np.ndarray

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=np.float32)
        if self.b.ndim != 2:
            raise ShapeError(f"ContactMap needs (N, l), got {self.b.shape}")
        if self.b.min() < 0.0 or self.b.max() > 1.0:
            raise ShapeError("contact probabilities must lie in [0, 1]")

    @property
    def n_frames(self) -> int:
        return self.b.shape[0]


class ConNetModel:
    """conv1d(142->h) -> ELU -> conv1d(h->h) -> ELU -> conv1d(h->l) -> sigmoid."""

    def __init__(self, n_vertices: int = 512, hidden: int = 64, kernel: int = 5,
                 lr: float = 1e-4, seed: int = 0):
        self.n_vertices = n_vertices
        self.hidden = hidden
        self.kernel = kernel
        g = rng.stream(seed, 0xC0)
        k = kernel

        def w(cout, cin, k):
            return (g.standard_normal((cout, cin, k)) * np.sqrt(2.0 / (cin * k))).astype(np.float32)

        self.params = {
            "w1": w(hidden, IN_CH, k), "b1": np.zeros(hidden, dtype=np.float32),
            "w2": w(hidden, hidden, k), "b2": np.zeros(hidden, dtype=np.float32),
            "w3": w(n_vertices, hidden, k), "b3": np.zeros(n_vertices, dtype=np.float32),
        }
        self.opt = OptimState.for_params(self.params, lr=lr)
        self.steps_trained = 0

    def _features(self, joints: np.ndarray, poses: np.ndarray, mass: float, action) -> np.ndarray:
        n = joints.shape[0]
        if poses.shape[0] != n:
            raise ShapeError(f"frame mismatch: joints {n} vs trajectory {poses.shape[0]}")
        if mass <= 0:
            raise ConfigError(f"mass must be positive, got {mass}")
        cond = np.zeros((n, 7), dtype=np.float32)
        cond[:, 0] = np.log(mass)
        if action is not None:
            a = int(action)
            if not 0 <= a <= 5:
                raise ConfigError(f"action label out of range: {a}")
            cond[:, 1 + a] = 1.0
        feats = np.concatenate([joints, poses, cond], axis=1)      # (N, 142)
        return feats.T[None].astype(np.float32)                    # (1, 142, N)

    def _forward(self, x: np.ndarray, wrapped=None) -> Tensor:
        def p(k):
            return wrapped[k] if wrapped is not None else Tensor(self.params[k])

        h = conv1d(Tensor(x), p("w1"), p("b1")).elu()
        h = conv1d(h, p("w2"), p("b2")).elu()
        return conv1d(h, p("w3"), p("b3")).sigmoid()

    def spec_dict(self) -> dict:
        return {"kind": "connet", "n_vertices": self.n_vertices, "hidden": self.hidden,
                "kernel": self.kernel}

    def save(self, path):
        from .numerics import save_checkpoint
        save_checkpoint(path, self.params, spec=self.spec_dict(), step=self.opt.step,
                        meta={"steps_trained": self.steps_trained})

    @classmethod
    def load(cls, path) -> "ConNetModel":
        from .numerics import load_checkpoint, restore_into
        header, arrays = load_checkpoint(path)
        s = header["spec"]
        model = cls(n_vertices=s["n_vertices"], hidden=s["hidden"], kernel=s["kernel"])
        restore_into(model.params, arrays)
        model.steps_trained = header["meta"].get("steps_trained", header["step"])
        return model


def estimate_contacts(model: ConNetModel, joints, traj, cond) -> ContactMap:
    """Contact probabilities for a joint track against an object trajectory.

    joints: (N, 126) or JointTrack; traj: ObjectTrajectory or (N, 9);
    cond: diffusion.Condition (mass + optional action).
    """
    if model.steps_trained <= 0:
        raise UntrainedModelError("ConNet has no trained parameters")
    j = joints.joints if hasattr(joints, "joints") else np.asarray(joints, dtype=np.float32)
    poses = traj.poses if isinstance(traj, ObjectTrajectory) else np.asarray(traj, dtype=np.float32)
    x = model._features(j, poses, cond.m, None if cond.a is None else int(np.argmax(cond.a)))
    with no_grad():
        out = model._forward(x)
    return ContactMap(out.data[0].T)


def connet_train_step(model: ConNetModel, joints, poses, mass: float, action,
                      labels: np.ndarray) -> float:
    """One BCE training step against binary labels (N, l)."""
    labels = np.asarray(labels)
    if not np.isin(labels, (0, 1)).all():
        raise ConfigError("contact labels must be binary {0, 1}")
    labels = labels.astype(np.float32)
    x = model._features(np.asarray(joints, dtype=np.float32),
                        np.asarray(poses, dtype=np.float32), mass, action)
    if labels.shape != (x.shape[2], model.n_vertices):
        raise ShapeError(f"labels shape {labels.shape} vs (N={x.shape[2]}, l={model.n_vertices})")
    wrapped = {k: Tensor(v, requires_grad=True) for k, v in model.params.items()}
    prob = model._forward(x, wrapped)                 # (1, l, N)
    y = Tensor(labels.T[None])
    eps = 1e-7
    p_clamped = prob * (1.0 - 2 * eps) + eps
    bce = -(y * p_clamped.log() + (1.0 - y) * (1.0 - p_clamped).log()).mean()
    val = float(bce.data)
    if not np.isfinite(val):
        raise NumericError("non-finite BCE loss")
    bce.backward()
    grads = {k: (w.grad if w.grad is not None else np.zeros_like(w.data)) for k, w in wrapped.items()}
    model.params, model.opt = adam_step(model.params, grads, model.opt)
    model.steps_trained += 1
    return val


def effective_contact_sets(cmap: ContactMap, threshold: float = 0.5) -> list:
    """Per-frame vertex index arrays where b > threshold."""
    return [np.flatnonzero(row > threshold) for row in cmap.b]


def save_con(path, cmap: ContactMap):
    header = {"n": cmap.n_frames, "l": cmap.b.shape[1]}
    hb = json.dumps(header).encode()
    with open(path, "wb") as f:
        f.write(struct.pack("<I", len(hb)))
        f.write(hb)
        f.write(np.ascontiguousarray(cmap.b, dtype="<f4").tobytes())


def load_con(path) -> ContactMap:
    with open(path, "rb") as f:
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode())
        blob = f.read()
    return ContactMap(np.frombuffer(blob, dtype="<f4").reshape(header["n"], header["l"]).copy())
