"""Capsule skinning: per-bone capsule surfaces rigidly attached to the skeleton.

Each of the 40 bones carries a capsule; vertices are sampled on rings around
the bone axis plus a cap apex on distal bones. Local coefficients are
precomputed per (l_hand, beta), so posing a frame is a batched rotation +
offset. Vertex order: hand-major, bone-major (documented bone order),
pattern order within a bone; this order is stable and backs the region
labels used by the contact metrics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from ..numerics.tensor import Tensor, as_tensor, concat, no_grad
from . import skeleton
from .skeleton import HandParams, fk_tensors, template

DEFAULT_L_HAND = 256

REGIONS = ("palm", "proximal", "intermediate", "fingertip")


def _allocate(l_hand: int) -> np.ndarray:
    """Vertex counts per bone (20,), largest-remainder rounding to l_hand."""
    weights = np.array([2.0, 1.2, 1.0, 1.2] * 5, dtype=np.float64)  # per finger: palm,prox,inter,distal
    # bone order is finger-major, weights above already follow it
    raw = weights / weights.sum() * l_hand
    counts = np.floor(raw).astype(int)
    rem = l_hand - counts.sum()
    order = np.argsort(-(raw - np.floor(raw)))
    counts[order[:rem]] += 1
    return counts


def _capsule_coeffs(n: int, apex: bool) -> np.ndarray:
    """(n, 4) rows [a, axial, c1, c2]: v = a*bone_vec + r*(axial*dir + c1*n1 + c2*n2)."""
    rows = []
    if apex and n > 0:
        rows.append((1.0, 1.0, 0.0, 0.0))
    remaining = n - len(rows)
    if remaining > 0:
        n_rings = int(np.ceil(remaining / 4))
        ring_pos = np.linspace(0.15, 0.85, n_rings) if n_rings > 1 else np.array([0.5])
        idx = 0
        for ring, a in enumerate(ring_pos):
            k = min(4, remaining - idx)
            for j in range(k):
                phi = 2.0 * np.pi * (j + 0.5 * (ring % 2)) / 4.0
                rows.append((a, 0.0, np.cos(phi), np.sin(phi)))
            idx += k
    return np.asarray(rows, dtype=np.float64)


def _perp_frame(d: np.ndarray) -> tuple:
    ref = np.array([0.0, 0.0, 1.0]) if abs(d[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    n1 = np.cross(d, ref)
    n1 /= np.linalg.norm(n1)
    return n1, np.cross(d, n1)


_surface_cache: dict = {}


def surface_template(l_hand: int = DEFAULT_L_HAND, beta=None):
    """Per-hand local vertex/normal tables and labels.

    Returns dict with:
      local   (2, 20) list of (n_b, 3) local positions in the bone frame
      nlocal  matching local normals (unit)
      labels  dict of (2*l_hand,) arrays: hand, bone, finger, region
      tip_apex (2, 5) global vertex indices of the distal cap apices
    """
    beta = np.ones(16, dtype=np.float64) if beta is None else np.asarray(beta, dtype=np.float64)
    key = (l_hand, beta.tobytes())
    if key in _surface_cache:
        return _surface_cache[key]

    tpl = template()
    counts = _allocate(l_hand)
    scales = skeleton._beta_scales(beta)
    radii = tpl.capsule_radii  # palm, prox, inter, distal

    local = [[], []]
    nlocal = [[], []]
    hand_lab, bone_lab, finger_lab, region_lab = [], [], [], []
    tip_apex = np.full((2, 5), -1, dtype=np.int64)

    for hand in range(2):
        mcp_off, pha_off = tpl.hand_offsets(hand)
        palm_s, fing_s = scales[hand]
        v_idx = hand * l_hand
        for f in range(5):
            bone_vecs = [mcp_off[f] * palm_s[f]] + [pha_off[f, s] * fing_s[f] for s in range(3)]
            for s, vec in enumerate(bone_vecs):
                b = f * 4 + s                      # bone index within hand, finger-major
                n_verts = counts[b]
                r = radii[s]
                d = vec / np.linalg.norm(vec)
                n1, n2 = _perp_frame(d)
                apex = s == 3
                coeffs = _capsule_coeffs(n_verts, apex)
                pos = coeffs[:, 0:1] * vec + r * (coeffs[:, 1:2] * d + coeffs[:, 2:3] * n1 + coeffs[:, 3:4] * n2)
                nrm = coeffs[:, 1:2] * d + coeffs[:, 2:3] * n1 + coeffs[:, 3:4] * n2
                local[hand].append(pos)
                nlocal[hand].append(nrm)
                if apex and n_verts > 0:
                    tip_apex[hand, f] = v_idx
                hand_lab += [hand] * n_verts
                bone_lab += [b] * n_verts
                finger_lab += [f] * n_verts
                region_lab += [s] * n_verts       # 0 palm, 1 proximal, 2 intermediate, 3 fingertip
                v_idx += n_verts

    out = {
        "local": local,
        "nlocal": nlocal,
        "counts": counts,
        "labels": {
            "hand": np.asarray(hand_lab), "bone": np.asarray(bone_lab),
            "finger": np.asarray(finger_lab), "region": np.asarray(region_lab),
        },
        "tip_apex": tip_apex,
        "l_hand": l_hand,
    }
    _surface_cache[key] = out
    return out


@dataclass
class HandSurface:
    """vertices/normals (F, l, 3) with l = 2*l_hand; joints (F, 42, 3)."""

    vertices: np.ndarray
    normals: np.ndarray
    joints: np.ndarray

    def __post_init__(self):
        if self.vertices.shape != self.normals.shape or self.vertices.shape[0] != self.joints.shape[0]:
            raise ShapeError(f"HandSurface shapes: V {self.vertices.shape}, n {self.normals.shape}, "
                             f"J {self.joints.shape}")

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[1]


def skin_tensors(tau, rot6, theta, beta=None, obj_centers=None, l_hand: int = DEFAULT_L_HAND):
    """Differentiable skinning. Returns (verts (F,l,3), normals (F,l,3), joints (F,2,21,3))."""
    joints, bone_rots, bone_starts = fk_tensors(tau, rot6, theta, beta, obj_centers)
    tpl = surface_template(l_hand, beta)
    dtype = joints.dtype

    hand_chunks = []
    normal_chunks = []
    for hand in range(2):
        for b in range(20):
            loc = tpl["local"][hand][b]
            nloc = tpl["nlocal"][hand][b]
            if len(loc) == 0:
                continue
            both = np.concatenate([loc, nloc], axis=0).T.astype(dtype)    # (3, 2n)
            r = bone_rots[:, hand, b]                                     # (F,3,3)
            moved = r @ Tensor(both)                                      # (F,3,2n)
            moved = moved.swapaxes(1, 2)                                  # (F,2n,3)
            n_b = len(loc)
            start = bone_starts[:, hand, b].reshape(-1, 1, 3)
            hand_chunks.append(moved[:, :n_b] + start)
            normal_chunks.append(moved[:, n_b:])
    verts = concat(hand_chunks, axis=1)
    normals = concat(normal_chunks, axis=1)
    return verts, normals, joints


def skin_hand_surface(h: HandParams, obj_centers=None, l_hand: int = DEFAULT_L_HAND) -> HandSurface:
    """Pose the capsule surface for every frame (plain numpy output)."""
    with no_grad():
        verts, normals, joints = skin_tensors(h.tau, h.rot6, h.theta, h.beta, obj_centers, l_hand)
    return HandSurface(vertices=verts.data.astype(np.float32),
                       normals=normals.data.astype(np.float32),
                       joints=joints.data.reshape(h.n_frames, 42, 3).astype(np.float32))
