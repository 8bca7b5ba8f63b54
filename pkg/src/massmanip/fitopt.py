"""Contact-aware hand fitting: minimize data + touch + collision + prior energy.

The energy is built on the autodiff tape through forward kinematics and
capsule skinning, so gradients w.r.t. (tau, rot6, theta) are exact. For
spheres the nearest point and outward normal are differentiable functions
of the vertex; for meshes they are recomputed every few iterations and held
fixed in between (exact a.e. for the distance term). The contact vertex
sets come from ConNet; penetration sets are refreshed on a fixed cadence.

Normal convention: the cosine term scores a contact vertex by how
anti-parallel its outward hand normal is to the object's outward normal
(flush palm contact scores zero, range [0, 2] per vertex before weighting).
The touch energy mixes squared meters with cosine units; normal_weight
(default (5mm)^2 = 2.5e-5) makes a fully misaligned normal cost as much as
a 5 mm gap, without which the cosine sum dominates all metric terms and
drags hands off the object at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .connet import ContactMap, effective_contact_sets
from .errors import NumericError, ShapeError
from .handmodel import (HandParams, HandSurface, ObjectPose, ObjectShape,
                        object_surface_query, rot6d_to_matrix, matrix_to_rot6d,
                        forward_kinematics, skin_tensors, template)
from .numerics import OptimState, adam_step
from .numerics.tensor import Tensor, no_grad
from .trajdiff import ObjectTrajectory


@dataclass
class FitConfig:
    lambda_data: float = 1.0
    lambda_touch: float = 0.7
    lambda_col: float = 0.8
    lambda_prior: float = 0.001
    max_iters: int = 500
    tolerance: float = 1e-6          # relative total-energy change
    smooth_sigma: float = 3.0
    lr_pose: float = 1e-2
    lr_theta: float = 5e-3
    recompute_every: int = 10
    divergence_patience: int = 50
    l_hand: int = 256
    theta_clamp: float = float(np.pi / 2)
    normal_weight: float = 2.5e-5

    def __post_init__(self):
        for name in ("lambda_data", "lambda_touch", "lambda_col", "lambda_prior"):
            if getattr(self, name) < 0:
                raise ShapeError(f"{name} must be >= 0")
        if self.tolerance <= 0:
            raise ShapeError("tolerance must be positive")


@dataclass
class FitResult:
    params: HandParams
    surface: HandSurface
    report: dict
    frame_slices: list = field(default_factory=list)


def _contact_mask(b_idx, n_frames: int, n_verts: int) -> np.ndarray:
    mask = np.zeros((n_frames, n_verts), dtype=bool)
    for i, idx in enumerate(b_idx):
        if len(idx):
            mask[i, np.asarray(idx, dtype=np.int64)] = True
    return mask


def _sphere_energy_graph(tau, rot6, theta, beta, j_star, centers, radius, contact_mask,
                         pen_mask, cfg: FitConfig):
    """Total energy Tensor + term Tensors; sphere geometry stays in-graph."""
    verts, normals, joints = skin_tensors(tau, rot6, theta, beta, centers, cfg.l_hand)
    n = joints.shape[0]
    jt = joints.reshape(n, 126)
    dj = jt - Tensor(j_star.astype(jt.dtype))
    l_data = (dj * dj).sum()

    rel = verts - Tensor(centers.astype(verts.dtype)[:, None, :])
    dist_k = ((rel * rel).sum(axis=-1, keepdims=True) + 1e-12).sqrt()  # (N, l, 1)
    sd = dist_k[..., 0] - radius
    cm = Tensor(contact_mask.astype(verts.dtype))
    pm = Tensor(pen_mask.astype(verts.dtype))
    l_touch_pos = (cm * sd * sd).sum()
    unit = rel / dist_k
    # flush contact: hand outward normal anti-parallel to object outward normal
    cos_term = (normals * unit).sum(axis=-1) + 1.0
    l_touch = l_touch_pos + (cm * cos_term).sum() * cfg.normal_weight
    l_col = (pm * sd * sd).sum()
    l_prior = (theta * theta).sum()
    total = (l_data * cfg.lambda_data + l_touch * cfg.lambda_touch
             + l_col * cfg.lambda_col + l_prior * cfg.lambda_prior)
    return total, {"data": l_data, "touch": l_touch, "col": l_col, "prior": l_prior}


def _mesh_energy_graph(tau, rot6, theta, beta, j_star, centers, nearest_c, normal_c,
                       nearest_p, contact_mask, pen_mask, cfg: FitConfig):
    """Mesh variant: nearest points / normals precomputed and held constant."""
    verts, normals, joints = skin_tensors(tau, rot6, theta, beta, centers, cfg.l_hand)
    n = joints.shape[0]
    jt = joints.reshape(n, 126)
    dj = jt - Tensor(j_star.astype(jt.dtype))
    l_data = (dj * dj).sum()
    cm = Tensor(contact_mask.astype(verts.dtype))
    pm = Tensor(pen_mask.astype(verts.dtype))
    dt = verts - Tensor(nearest_c.astype(verts.dtype))
    cos_term = (normals * Tensor(normal_c.astype(verts.dtype))).sum(axis=-1) + 1.0
    l_touch = (cm * (dt * dt).sum(axis=-1)).sum() + (cm * cos_term).sum() * cfg.normal_weight
    dp = verts - Tensor(nearest_p.astype(verts.dtype))
    l_col = (pm * (dp * dp).sum(axis=-1)).sum()
    l_prior = (theta * theta).sum()
    total = (l_data * cfg.lambda_data + l_touch * cfg.lambda_touch
             + l_col * cfg.lambda_col + l_prior * cfg.lambda_prior)
    return total, {"data": l_data, "touch": l_touch, "col": l_col, "prior": l_prior}


def _query_state(h: HandParams, shape: ObjectShape, poses: np.ndarray, cfg: FitConfig):
    """Current surface vs object: penetration mask and (for meshes) query caches."""
    surf_v = _surface_vertices(h, poses[:, :3], cfg.l_hand)
    n, l = surf_v.shape[:2]
    if shape.kind == "sphere":
        rel = surf_v - poses[:, None, :3]
        dist = np.maximum(np.linalg.norm(rel, axis=2), 1e-12)
        unit = rel / dist[..., None]
        return dist - shape.radius, poses[:, None, :3] + shape.radius * unit, unit
    sd = np.zeros((n, l))
    nearest = np.zeros((n, l, 3))
    normal = np.zeros((n, l, 3))
    for i in range(n):
        q = object_surface_query(surf_v[i], shape, ObjectPose(poses[i, :3], poses[i, 3:]))
        sd[i] = q["signed_distance"]
        nearest[i] = q["nearest"]
        normal[i] = q["normal"]
    return sd, nearest, normal


def _surface_vertices(h: HandParams, centers: np.ndarray, l_hand: int) -> np.ndarray:
    with no_grad():
        verts, _, _ = skin_tensors(h.tau, h.rot6, h.theta, h.beta, centers, l_hand)
    return verts.data


def fitting_energy(h: HandParams, j_star, b_idx, shape: ObjectShape,
                   traj: ObjectTrajectory, cfg: FitConfig | None = None) -> dict:
    """Evaluate the four energy terms and the weighted total at h (floats)."""
    cfg = cfg or FitConfig()
    j_star = np.asarray(j_star.joints if hasattr(j_star, "joints") else j_star, dtype=np.float64)
    n = j_star.shape[0]
    contact_mask = _contact_mask(b_idx, n, 2 * cfg.l_hand)
    sd, nearest, normal = _query_state(h, shape, traj.poses.astype(np.float64), cfg)
    pen_mask = sd < 0
    centers = traj.poses[:, :3].astype(np.float64)
    with no_grad():
        if shape.kind == "sphere":
            total, terms = _sphere_energy_graph(Tensor(h.tau.astype(np.float64)),
                                                Tensor(h.rot6.astype(np.float64)),
                                                Tensor(h.theta.astype(np.float64)),
                                                h.beta, j_star, centers, shape.radius,
                                                contact_mask, pen_mask, cfg)
        else:
            total, terms = _mesh_energy_graph(Tensor(h.tau.astype(np.float64)),
                                              Tensor(h.rot6.astype(np.float64)),
                                              Tensor(h.theta.astype(np.float64)),
                                              h.beta, j_star, centers, nearest, normal,
                                              nearest, contact_mask, pen_mask, cfg)
    out = {k: float(v.data) for k, v in terms.items()}
    out["total"] = float(total.data)
    return out


def init_from_joints(j_star: np.ndarray, centers: np.ndarray) -> HandParams:
    """Initial guess: wrists at J*'s wrist joints, rotation via Kabsch on each hand."""
    n = j_star.shape[0]
    pts = j_star.reshape(n, 42, 3)
    tpl_rest = forward_kinematics(HandParams.rest(1))[0].reshape(2, 21, 3)
    tau = np.zeros((n, 2, 3), dtype=np.float32)
    rot6 = np.zeros((n, 2, 6), dtype=np.float32)
    for hand in range(2):
        a = tpl_rest[hand] - tpl_rest[hand][0]
        for i in range(n):
            b = pts[i, hand * 21:(hand + 1) * 21]
            wrist = b[0]
            tau[i, hand] = wrist - centers[i]
            bc = b - wrist
            hmat = a.T @ bc
            u, s, vt = np.linalg.svd(hmat)
            d = np.sign(np.linalg.det(vt.T @ u.T))
            r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
            rot6[i, hand] = matrix_to_rot6d(r)
    theta = np.zeros((n, 2, 15, 3), dtype=np.float32)
    return HandParams(tau, rot6, theta)


def fit_sequence(j_star, b: ContactMap, traj: ObjectTrajectory,
                 shape: ObjectShape | None = None, cfg: FitConfig | None = None,
                 init: HandParams | None = None) -> FitResult:
    """Fit hand parameters to synthesized joints and contacts for one sequence."""
    return _fit_frames(j_star, b, traj, shape, cfg, init, frame_slices=None)


def fit_batch(sequences, cfg: FitConfig | None = None) -> list:
    """Fit many sequences jointly (the energy has no cross-frame coupling).

    sequences: list of dicts with keys j_star, contacts (ContactMap),
    traj (ObjectTrajectory), and optional shape. Returns a list of FitResult.
    """
    if not sequences:
        return []
    shape = sequences[0].get("shape") or ObjectShape("sphere", 0.1)
    j_all, poses_all, b_all, slices = [], [], [], []
    off = 0
    for s in sequences:
        j = np.asarray(s["j_star"].joints if hasattr(s["j_star"], "joints") else s["j_star"],
                       dtype=np.float64)
        j_all.append(j)
        poses_all.append(s["traj"].poses)
        b_all.append(s["contacts"].b)
        slices.append(slice(off, off + j.shape[0]))
        off += j.shape[0]
    j_cat = np.concatenate(j_all)
    traj_cat = ObjectTrajectory(np.concatenate(poses_all))
    b_cat = ContactMap(np.concatenate(b_all))
    merged = _fit_frames(j_cat, b_cat, traj_cat, shape, cfg, None, frame_slices=slices)
    results = []
    for sl in slices:
        params = HandParams(merged.params.tau[sl], merged.params.rot6[sl],
                            merged.params.theta[sl], merged.params.beta)
        surf = HandSurface(merged.surface.vertices[sl], merged.surface.normals[sl],
                           merged.surface.joints[sl])
        results.append(FitResult(params, surf, dict(merged.report)))
    return results


def _fit_frames(j_star, b: ContactMap, traj: ObjectTrajectory, shape, cfg, init,
                frame_slices) -> FitResult:
    cfg = cfg or FitConfig()
    shape = shape or ObjectShape("sphere", 0.1)
    j_star = np.asarray(j_star.joints if hasattr(j_star, "joints") else j_star, dtype=np.float64)
    n = j_star.shape[0]
    if b.n_frames != n or traj.n_frames != n:
        raise ShapeError(f"frame mismatch: joints {n}, contacts {b.n_frames}, trajectory {traj.n_frames}")
    contact_mask = _contact_mask(effective_contact_sets(b), n, 2 * cfg.l_hand)
    centers = traj.poses[:, :3].astype(np.float64)

    h = init or init_from_joints(j_star, centers)
    tau = h.tau.astype(np.float32)
    rot6 = h.rot6.astype(np.float32)
    theta = h.theta.astype(np.float32)
    beta = h.beta
    j_star32 = j_star.astype(np.float32)
    centers32 = centers.astype(np.float32)

    pose_state = OptimState.for_params([tau, rot6], lr=cfg.lr_pose)
    theta_state = OptimState.for_params([theta], lr=cfg.lr_theta)

    best = {"energy": np.inf, "tau": tau, "rot6": rot6, "theta": theta, "terms": {}}
    rising = 0
    prev_energy = None
    pen_mask = np.zeros((n, 2 * cfg.l_hand), dtype=bool)
    nearest = normal = None
    history = []
    status = "max_iters"

    for it in range(cfg.max_iters):
        if it % cfg.recompute_every == 0:
            cur = HandParams(tau.astype(np.float32), rot6.astype(np.float32),
                             theta.astype(np.float32), beta)
            sd, nearest, normal = _query_state(cur, shape, traj.poses.astype(np.float64), cfg)
            pen_mask = sd < 0

        t_tau = Tensor(tau, requires_grad=True)
        t_rot6 = Tensor(rot6, requires_grad=True)
        t_theta = Tensor(theta, requires_grad=True)
        if shape.kind == "sphere":
            total, terms = _sphere_energy_graph(t_tau, t_rot6, t_theta, beta, j_star32,
                                                centers32, shape.radius, contact_mask,
                                                pen_mask, cfg)
        else:
            total, terms = _mesh_energy_graph(t_tau, t_rot6, t_theta, beta, j_star32,
                                              centers32, nearest, normal, nearest,
                                              contact_mask, pen_mask, cfg)
        energy = float(total.data)
        if not np.isfinite(energy):
            raise NumericError(f"non-finite fitting energy at iteration {it}")
        history.append(energy)
        if energy < best["energy"]:
            best = {"energy": energy, "tau": tau, "rot6": rot6, "theta": theta,
                    "terms": {k: float(v.data) for k, v in terms.items()}}
        if prev_energy is not None and energy > prev_energy:
            rising += 1
            if rising >= cfg.divergence_patience:
                status = "diverged"
                break
        else:
            rising = 0
        if prev_energy is not None and abs(prev_energy - energy) < cfg.tolerance * max(abs(prev_energy), 1e-12):
            status = "converged"
            break
        prev_energy = energy

        total.backward()
        g_tau = t_tau.grad if t_tau.grad is not None else np.zeros_like(tau)
        g_rot = t_rot6.grad if t_rot6.grad is not None else np.zeros_like(rot6)
        g_th = t_theta.grad if t_theta.grad is not None else np.zeros_like(theta)
        (tau, rot6), pose_state = adam_step([tau, rot6], [g_tau, g_rot], pose_state)
        (theta,), theta_state = adam_step([theta], [g_th], theta_state)
        theta = np.clip(theta, -cfg.theta_clamp, cfg.theta_clamp)

    params = HandParams(best["tau"].astype(np.float32), best["rot6"].astype(np.float32),
                        best["theta"].astype(np.float32), beta)
    from .handmodel import skin_hand_surface
    surface = skin_hand_surface(params, obj_centers=centers, l_hand=cfg.l_hand)
    report = {"energy": best["energy"], "terms": best["terms"], "iterations": len(history),
              "status": status, "history_first": history[0] if history else None,
              "history_last": history[-1] if history else None}
    return FitResult(params, surface, report, frame_slices or [])


def temporal_smooth(track: np.ndarray, sigma: float = 3.0) -> np.ndarray:
    """Gaussian smoothing along the time axis (axis 0), reflected boundaries.

    The pipeline applies this only to non-spherical objects."""
    if sigma <= 0:
        raise ShapeError("sigma must be positive")
    track = np.asarray(track)
    return gaussian_filter1d(track.astype(np.float64), sigma=sigma, axis=0,
                             mode="reflect").astype(track.dtype)
