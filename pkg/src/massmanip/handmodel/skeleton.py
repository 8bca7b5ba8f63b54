"""Two-hand kinematic template and forward kinematics.

Layout (fixed, documented):
  joints per hand, 21: [wrist, thumb(mcp,pip,dip,tip), index(...), middle,
  ring, pinky]; hand 0 = left, hand 1 = right; K = 42 joints total.
  Articulated joints per hand, 15: mcp/pip/dip of each finger, Euler xyz
  angles, flexion about +x curls toward the palm normal +z. Tips are leaves.
  Bones per hand, 20, finger-major: [wrist->mcp, mcp->pip, pip->dip,
  dip->tip] x [thumb..pinky]; 40 bones total.

Offsets live in the parent joint's frame, meters. The left hand mirrors the
right template in x. Bone-length scales beta (16 = 8 per hand):
[global, palm, thumb, index, middle, ring, pinky, reserved] per hand.

Hand global translation tau is relative to the object center; the global
rotation is relative to the world frame (world joint = object_center + tau
+ rotated offsets).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from ..errors import ShapeError
from ..numerics.tensor import Tensor, as_tensor, concat, no_grad
from .rotations import euler_to_matrix_t, rot6d_to_matrix_t

N_JOINTS_HAND = 21
N_JOINTS = 42
N_ARTICULATED = 15
N_BONES_HAND = 20
N_BONES = 40
FINGERS = ("thumb", "index", "middle", "ring", "pinky")


def _load_template_json() -> dict:
    with resources.files("massmanip.assets").joinpath("hand_skeleton.json").open() as f:
        return json.load(f)


@dataclass(frozen=True)
class SkeletonTemplate:
    """Constant kinematic data shared by both hands (right-hand values)."""

    mcp_offsets: np.ndarray      # (5, 3) wrist -> mcp, right hand
    phalanx_offsets: np.ndarray  # (5, 3 segments, 3) mcp->pip, pip->dip, dip->tip
    capsule_radii: np.ndarray    # (4,) palm/proximal/intermediate/distal bone radius
    joint_names: tuple = ()

    @staticmethod
    def load() -> "SkeletonTemplate":
        d = _load_template_json()
        return SkeletonTemplate(
            mcp_offsets=np.asarray(d["mcp_offsets"], dtype=np.float64),
            phalanx_offsets=np.asarray(d["phalanx_offsets"], dtype=np.float64),
            capsule_radii=np.asarray(d["capsule_radii"], dtype=np.float64),
            joint_names=tuple(d["joint_names"]),
        )

    def hand_offsets(self, hand: int) -> tuple:
        """Mirrored offsets for hand 0 (left) / 1 (right)."""
        sign = -1.0 if hand == 0 else 1.0
        m = self.mcp_offsets.copy()
        p = self.phalanx_offsets.copy()
        m[:, 0] *= sign
        p[:, :, 0] *= sign
        return m, p


_TEMPLATE: SkeletonTemplate | None = None


def template() -> SkeletonTemplate:
    global _TEMPLATE
    if _TEMPLATE is None:
        _TEMPLATE = SkeletonTemplate.load()
    return _TEMPLATE


def bone_edges() -> np.ndarray:
    """(40, 2) joint-index pairs in the documented bone order."""
    edges = []
    for hand in range(2):
        base = hand * N_JOINTS_HAND
        for f in range(5):
            mcp = base + 1 + f * 4
            edges += [(base + 0, mcp), (mcp, mcp + 1), (mcp + 1, mcp + 2), (mcp + 2, mcp + 3)]
    return np.asarray(edges, dtype=np.int64)


@dataclass
class HandParams:
    """Per-frame two-hand model parameters.

    tau   (F, 2, 3)  global translation per hand, relative to object center
    rot6  (F, 2, 6)  global rotation per hand, 6D representation, world frame
    theta (F, 2, 15, 3) articulated Euler angles, radians
    beta  (16,)      bone-length scales, > 0
    """

    tau: np.ndarray
    rot6: np.ndarray
    theta: np.ndarray
    beta: np.ndarray = field(default_factory=lambda: np.ones(16, dtype=np.float32))

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=np.float32)
        self.rot6 = np.asarray(self.rot6, dtype=np.float32)
        self.theta = np.asarray(self.theta, dtype=np.float32)
        self.beta = np.asarray(self.beta, dtype=np.float32)
        f = self.tau.shape[0]
        if self.tau.shape != (f, 2, 3) or self.rot6.shape != (f, 2, 6) or self.theta.shape != (f, 2, 15, 3):
            raise ShapeError(f"HandParams shapes: tau {self.tau.shape}, rot6 {self.rot6.shape}, "
                             f"theta {self.theta.shape}")
        if self.beta.shape != (16,) or np.any(self.beta <= 0):
            raise ShapeError("beta must be 16 positive scales")

    @property
    def n_frames(self) -> int:
        return self.tau.shape[0]

    @staticmethod
    def rest(n_frames: int = 1) -> "HandParams":
        tau = np.zeros((n_frames, 2, 3), dtype=np.float32)
        rot6 = np.tile(np.array([1, 0, 0, 0, 1, 0], dtype=np.float32), (n_frames, 2, 1))
        theta = np.zeros((n_frames, 2, 15, 3), dtype=np.float32)
        return HandParams(tau, rot6, theta)


def _beta_scales(beta) -> tuple:
    """Per-hand (palm_scale (5,), finger_scale (5,)) from the 16-vector."""
    beta = np.asarray(beta, dtype=np.float64)
    out = []
    for hand in range(2):
        b = beta[hand * 8:(hand + 1) * 8]
        glob, palm = b[0], b[1]
        fingers = b[2:7]
        out.append((np.full(5, glob * palm), glob * fingers))
    return out


def fk_tensors(tau, rot6, theta, beta=None, obj_centers=None):
    """Differentiable forward kinematics.

    tau (F,2,3), rot6 (F,2,6), theta (F,2,15,3) as Tensors or arrays.
    Returns (joints (F,2,21,3), bone_rots (F,2,20,3,3), bone_starts (F,2,20,3)),
    bones in the documented finger-major order.
    """
    tau, rot6, theta = as_tensor(tau), as_tensor(rot6), as_tensor(theta)
    tpl = template()
    beta = np.ones(16, dtype=np.float64) if beta is None else np.asarray(beta, dtype=np.float64)
    scales = _beta_scales(beta)
    dtype = tau.dtype

    r_hand = rot6d_to_matrix_t(rot6)                        # (F,2,3,3)
    th = theta.reshape(theta.shape[0], 2, 5, 3, 3)          # (F,2,finger,level,xyz)
    r_lvl = [euler_to_matrix_t(th[:, :, :, i]) for i in range(3)]  # each (F,2,5,3,3)

    wrist = tau if obj_centers is None else tau + as_tensor(np.asarray(obj_centers, dtype=dtype)[:, None, :])

    per_hand_joints = []
    per_hand_rots = []
    per_hand_starts = []
    for hand in range(2):
        mcp_off, pha_off = tpl.hand_offsets(hand)
        palm_s, fing_s = scales[hand]
        mcp_local = Tensor((mcp_off * palm_s[:, None]).astype(dtype))       # (5,3)
        seg_local = [Tensor((pha_off[:, s] * fing_s[:, None]).astype(dtype)) for s in range(3)]

        rh = r_hand[:, hand:hand + 1]                        # (F,1,3,3)
        w = wrist[:, hand:hand + 1]                          # (F,1,3)

        mcp = w + _rotate_const(rh, mcp_local)               # (F,5,3)
        r1 = rh @ r_lvl[0][:, hand]                          # (F,5,3,3): broadcast (F,1,..) with (F,5,..)
        pip = mcp + _rotate_each(r1, seg_local[0])
        r2 = r1 @ r_lvl[1][:, hand]
        dip = pip + _rotate_each(r2, seg_local[1])
        r3 = r2 @ r_lvl[2][:, hand]
        tip = dip + _rotate_each(r3, seg_local[2])

        # joints: wrist + finger-major [mcp, pip, dip, tip]
        fj = concat([mcp.reshape(-1, 5, 1, 3), pip.reshape(-1, 5, 1, 3),
                     dip.reshape(-1, 5, 1, 3), tip.reshape(-1, 5, 1, 3)], axis=2)  # (F,5,4,3)
        joints_h = concat([w, fj.reshape(-1, 20, 3)], axis=1)                      # (F,21,3)
        per_hand_joints.append(joints_h.reshape(-1, 1, 21, 3))

        rwrist5 = rh @ Tensor(np.broadcast_to(np.eye(3, dtype=dtype), (5, 3, 3)).copy())
        rots_h = concat([rwrist5.reshape(-1, 5, 1, 3, 3), r1.reshape(-1, 5, 1, 3, 3),
                         r2.reshape(-1, 5, 1, 3, 3), r3.reshape(-1, 5, 1, 3, 3)], axis=2)
        per_hand_rots.append(rots_h.reshape(-1, 1, 20, 3, 3))

        starts_h = concat([(w + mcp * 0.0).reshape(-1, 5, 1, 3), mcp.reshape(-1, 5, 1, 3),
                           pip.reshape(-1, 5, 1, 3), dip.reshape(-1, 5, 1, 3)], axis=2)
        per_hand_starts.append(starts_h.reshape(-1, 1, 20, 3))

    joints = concat(per_hand_joints, axis=1)      # (F,2,21,3)
    bone_rots = concat(per_hand_rots, axis=1)     # (F,2,20,3,3)
    bone_starts = concat(per_hand_starts, axis=1)  # (F,2,20,3)
    return joints, bone_rots, bone_starts


def _rotate_const(r: Tensor, off: Tensor) -> Tensor:
    """r (F,1,3,3), off (G,3) -> (F,G,3)."""
    prod = r @ off.swapaxes(0, 1).reshape(1, 3, off.shape[0])   # (F,1,3,G) via broadcast
    return prod.reshape(prod.shape[0], 3, off.shape[0]).swapaxes(1, 2)


def _rotate_each(r: Tensor, off: Tensor) -> Tensor:
    """r (F,G,3,3), off (G,3) -> (F,G,3)."""
    return (r @ off.reshape(1, off.shape[0], 3, 1)).reshape(r.shape[0], off.shape[0], 3)


def forward_kinematics(h: HandParams, obj_centers=None) -> np.ndarray:
    """Joint positions (F, 42, 3), world frame (= object-relative when centers omitted)."""
    with no_grad():
        joints, _, _ = fk_tensors(h.tau, h.rot6, h.theta, h.beta, obj_centers)
    return joints.data.reshape(h.n_frames, N_JOINTS, 3)


def joints_flat(joints: np.ndarray) -> np.ndarray:
    """(F, 42, 3) -> (F, 126)."""
    return np.ascontiguousarray(joints.reshape(joints.shape[0], -1))
