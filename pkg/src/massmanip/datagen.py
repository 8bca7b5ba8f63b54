"""Procedural mass-conditioned ground truth: trajectories, grasps, contacts, ratios.

Replaces a capture pipeline with parametric action templates whose dynamics
scale with an available-force budget: peak accelerations follow
a_max = F_budget / m, squashed smoothly so the five training masses stay
strictly ordered. Grasps are constructed by anchoring a mass-dependent
contact region (fingertips for light objects, palm for heavy) onto the
sphere surface; contact labels then come from the 5 mm signed-distance rule
applied to the actual skinned geometry.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .handdiff import JointTrack, K_JOINTS
from .handmodel import (HandParams, ObjectShape, forward_kinematics, joints_flat,
                        matrix_to_rot6d, skin_hand_surface, surface_template)
from .numerics import rng
from .trajdiff import ObjectTrajectory

TRAIN_MASSES = (0.175, 2.0, 3.6, 3.9, 4.9)
ACTION_NAMES = ("throw-catch", "pass-between-hands", "lift", "horizontal-move", "circle", "reserved")
GRAVITY = 9.81
FPS = 50.0
CONTACT_LABEL_MM = 5.0
F_BUDGET = 30.0


@dataclass(frozen=True)
class ActionSpec:
    label: int
    name: str
    amplitude: float       # base spatial amplitude, meters
    period: float          # base tempo, seconds

    def __post_init__(self):
        if not 0 <= self.label <= 5:
            raise ConfigError(f"action label out of range: {self.label}")


ACTIONS = {
    0: ActionSpec(0, "throw-catch", 0.0, 1.0),
    1: ActionSpec(1, "pass-between-hands", 0.30, 2.0),
    2: ActionSpec(2, "lift", 0.30, 3.6),
    3: ActionSpec(3, "horizontal-move", 0.28, 3.6),
    4: ActionSpec(4, "circle", 0.16, 3.6),
}


def accel_scale(m: float) -> float:
    """Smooth, strictly decreasing in m: a_max/(a_max + a_ref)."""
    a_max = F_BUDGET / m
    return a_max / (a_max + 12.0)


def _minimum_jerk(tau: np.ndarray) -> np.ndarray:
    t = np.clip(tau, 0.0, 1.0)
    return 10 * t ** 3 - 15 * t ** 4 + 6 * t ** 5


def _wobble(g, n, amp, n_modes=3):
    """Smooth zero-mean noise from a few random sinusoids."""
    t = np.linspace(0, 1, n)
    out = np.zeros(n)
    for k in range(n_modes):
        out += g.uniform(-1, 1) * np.sin(2 * np.pi * (k + 1) * t + g.uniform(0, 2 * np.pi))
    return amp * out / n_modes


def _rot_about(axis: np.ndarray, angle) -> np.ndarray:
    axis = axis / np.linalg.norm(axis)
    angle = np.atleast_1d(np.asarray(angle, dtype=np.float64))
    k = np.zeros((len(angle), 3, 3))
    k[:, 0, 1], k[:, 0, 2] = -axis[2], axis[1]
    k[:, 1, 0], k[:, 1, 2] = axis[2], -axis[0]
    k[:, 2, 0], k[:, 2, 1] = -axis[1], axis[0]
    s = np.sin(angle)[:, None, None]
    c = np.cos(angle)[:, None, None]
    return np.eye(3) + s * k + (1 - c) * (k @ k)


def generate_gt_trajectory(action, m: float, seed: int = 0, n: int = 180) -> ObjectTrajectory:
    """Smooth (C1) mass-scaled object trajectory for an action template.

    The throw action embeds an exactly quadratic free-flight segment
    (discrete second differences give (0, 0, -g) to float precision).
    """
    spec = ACTIONS.get(action if isinstance(action, int) else action.label)
    if spec is None:
        raise ConfigError(f"action {action} is reserved/unknown; register a template first")
    if m <= 0:
        raise ConfigError(f"mass must be positive, got {m}")
    g = rng.stream(seed, 0xAC7, spec.label)
    s = accel_scale(m)
    dt = 1.0 / FPS
    t = np.arange(n) * dt
    tau = np.zeros((n, 3))
    ang = np.zeros(n)

    if spec.label == 0:
        tau[:, 2], flight = _throw_profile(m, g, n, dt)
        ang = _throw_spin(flight, g, n)
    else:
        dur = t[-1]
        tt = t / dur
        jit = 1.0 + 0.03 * g.uniform(-1, 1)
        if spec.label == 1:
            amp = (0.14 + 0.16 * s) * jit
            tau[:, 0] = -amp + 2 * amp * _minimum_jerk((tt - 0.2) / 0.6)
            tau[:, 2] = 0.04 * np.sin(np.pi * np.clip((tt - 0.2) / 0.6, 0, 1)) * s
        elif spec.label == 2:
            amp = (0.10 + 0.25 * s) * jit
            tau[:, 2] = amp * np.sin(np.pi * tt) ** 2
        elif spec.label == 3:
            amp = (0.10 + 0.18 * s) * jit
            tau[:, 0] = amp * np.sin(2 * np.pi * tt) * np.sin(np.pi * tt) ** 2
        elif spec.label == 4:
            amp = (0.06 + 0.10 * s) * jit
            phi = 2 * np.pi * _minimum_jerk(tt)
            tau[:, 0] = amp * np.sin(phi)
            tau[:, 2] = amp * (1 - np.cos(phi))
        ang = 0.2 * s * np.sin(2 * np.pi * tt + g.uniform(0, 2 * np.pi))
        tau[:, 0] += _wobble(g, n, 0.004 * s)
        tau[:, 1] += _wobble(g, n, 0.004 * s)

    axis = np.array([0.3, 1.0, 0.2])
    rots = _rot_about(axis, ang)
    poses = np.concatenate([tau, matrix_to_rot6d(rots)], axis=1)
    traj = ObjectTrajectory(poses.astype(np.float32), fps=FPS, mass=m, action=spec.label)
    return traj


def _throw_velocity(m: float) -> float:
    a_max = F_BUDGET / m
    return 0.7 + 2.6 * a_max / (a_max + 20.0)


def _throw_profile(m: float, g, n: int, dt: float):
    """Vertical throw-catch z profile; returns (z, flight_mask)."""
    v0 = _throw_velocity(m) * (1.0 + 0.02 * g.uniform(-1, 1))
    t_wind = 0.30
    t_flight = 2 * v0 / GRAVITY
    t_hold = 0.5
    t_catch = 0.45
    z = np.zeros(n)
    flight = np.zeros(n, dtype=bool)
    t = np.arange(n) * dt
    t_r = t_hold + t_wind                       # release time
    # wind-up: cubic Hermite 0 -> z_r with end velocity v0
    z_r = 0.06
    for i in range(n):
        ti = t[i]
        if ti < t_hold:
            z[i] = 0.0
        elif ti < t_r:
            u = (ti - t_hold) / t_wind
            # Hermite: p(0)=0, p'(0)=0, p(1)=z_r, p'(1)=v0*t_wind
            h00, h01, h11 = 2 * u**3 - 3 * u**2 + 1, -2 * u**3 + 3 * u**2, u**3 - u**2
            z[i] = h01 * z_r + h11 * v0 * t_wind
        elif ti < t_r + t_flight:
            q = ti - t_r
            z[i] = z_r + v0 * q - 0.5 * GRAVITY * q * q
            flight[i] = True
        elif ti < t_r + t_flight + t_catch:
            u = (ti - t_r - t_flight) / t_catch
            h00, h01, h10, h11 = (2 * u**3 - 3 * u**2 + 1, -2 * u**3 + 3 * u**2,
                                  u**3 - 2 * u**2 + u, u**3 - u**2)
            z[i] = h00 * z_r + h01 * 0.0 + h10 * (-v0 * t_catch) + h11 * 0.0
        else:
            z[i] = 0.0
    return z, flight


def _throw_spin(flight: np.ndarray, g, n: int) -> np.ndarray:
    """Free rotation during flight: linear angle ramp, constant elsewhere."""
    rate = g.uniform(0.5, 1.5)
    ang = np.zeros(n)
    cur = 0.0
    for i in range(1, n):
        if flight[i]:
            cur += rate / FPS
        ang[i] = cur
    return ang


def detect_free_flight(traj: ObjectTrajectory, tol: float = 1e-3) -> np.ndarray:
    """Frames whose second differences match gravity within tol (m/s^2)."""
    tau = traj.poses[:, :3].astype(np.float64)
    acc = np.zeros_like(tau)
    acc[1:-1] = (tau[2:] - 2 * tau[1:-1] + tau[:-2]) * traj.fps ** 2
    mask = np.linalg.norm(acc - np.array([0, 0, -GRAVITY]), axis=1) < tol
    out = np.zeros(len(tau), dtype=bool)
    out[1:-1] = mask[1:-1]
    return out


# -- grasp construction -------------------------------------------------------


def grip_parameter(m: float) -> float:
    """0 (fingertip grip) .. 1 (palm grip), monotone in log m over [0.05, 10]."""
    return float(np.clip((np.log(m) - np.log(0.05)) / (np.log(10.0) - np.log(0.05)), 0.0, 1.0))


def _grasp_base(m: float, g, radius: float):
    """Per-hand (rotation, wrist offset rel. object center, theta) for a static grasp."""
    s = grip_parameter(m)
    tpl = surface_template()
    curl = np.array([0.72 - 0.35 * s, 0.62 - 0.28 * s, 0.45 - 0.20 * s])
    curl = curl * (1.0 + 0.05 * g.uniform(-1, 1, 3))

    hands = []
    for hand in (0, 1):
        side = -1.0 if hand == 0 else 1.0
        u = np.array([side * (1.0 - 0.45 * s), 0.0, -1.05 * s])
        u = u / np.linalg.norm(u)
        wob = _rot_about(np.array([0.0, 1.0, 0.0]), 0.12 * g.uniform(-1, 1))[0]
        u = wob @ u

        z_img = -u
        y_pref = np.array([0.0, 1.0, 0.0])
        y_img = y_pref - (y_pref @ z_img) * z_img
        y_img = y_img / np.linalg.norm(y_img)
        x_img = np.cross(y_img, z_img)
        r_hand = np.stack([x_img, y_img, z_img], axis=1)

        theta = np.zeros((15, 3), dtype=np.float64)
        theta[:, 0] = np.repeat(curl[None], 5, axis=0).reshape(-1)  # flexion per level
        theta[0:3, 0] *= 0.8                                         # thumb curls less
        theta[0, 2] = side * -0.4                                    # thumb opposition

        local_mean = _contact_anchor(hand, theta, s, tpl)
        anchor_world_dir = u * radius
        wrist = anchor_world_dir - r_hand @ local_mean
        hands.append({"rot": r_hand, "wrist": wrist, "theta": theta, "u": u})
    return hands, s


def _contact_anchor(hand: int, theta: np.ndarray, s: float, tpl) -> np.ndarray:
    """Mean local position of the intended contact region at the given curl."""
    h = HandParams.rest(1)
    h.theta[0, hand] = theta.astype(np.float32)
    from .handmodel import skin_hand_surface as _skin
    surf = _skin(h)
    labels = tpl["labels"]
    sel_hand = labels["hand"] == hand
    tips = sel_hand & (labels["region"] == 3)
    palm = sel_hand & (labels["region"] == 0)
    v = surf.vertices[0]
    mean_tips = v[tips].mean(axis=0)
    mean_palm = v[palm].mean(axis=0)
    return (1.0 - s) * mean_tips + s * mean_palm


FACING_DOT = -0.5


def contact_labels_for(params: HandParams, centers: np.ndarray, radius: float = 0.1,
                       l_hand: int = 256) -> np.ndarray:
    """5 mm signed-distance rule restricted to object-facing vertices.

    Capsule vertices on the side/back of a bone can sit within 5 mm while
    their outward normals can never oppose the object's; labeling them would
    make the fitting energy's own normal term unsatisfiable, so ground-truth
    labels keep only vertices with dot(n_hand, n_obj_outward) < -0.5. The
    plausibility metrics use the pure distance rule.
    """
    surf = skin_hand_surface(params, obj_centers=centers, l_hand=l_hand)
    rel = surf.vertices - centers[:, None, :]
    dist = np.linalg.norm(rel, axis=2) - radius
    outward = rel / np.maximum(np.linalg.norm(rel, axis=2, keepdims=True), 1e-9)
    facing = np.einsum("nvk,nvk->nv", surf.normals.astype(np.float64), outward) < FACING_DOT
    return ((dist < CONTACT_LABEL_MM / 1000.0) & facing).astype(np.uint8)


def _static_grasp_params(hands) -> HandParams:
    tau = np.zeros((1, 2, 3), dtype=np.float32)
    rot6 = np.zeros((1, 2, 6), dtype=np.float32)
    theta = np.zeros((1, 2, 15, 3), dtype=np.float32)
    for hand in range(2):
        tau[0, hand] = hands[hand]["wrist"]
        rot6[0, hand] = matrix_to_rot6d(hands[hand]["rot"])
        theta[0, hand] = hands[hand]["theta"]
    return HandParams(tau, rot6, theta)


def refine_grasp(params: HandParams, radius: float = 0.1, l_hand: int = 256,
                 iters: int = 600, passes: int = 2) -> HandParams:
    """Settle a heuristic static grasp against the fitting energy.

    Real captured hands are physically flush with the object; the closed-form
    placement is only approximately so. Two fit passes (labels refreshed in
    between) leave the grasp at a stationary point of the same energy the
    downstream fitting stage minimizes.
    """
    from .connet import ContactMap
    from .fitopt import FitConfig, fit_sequence
    still = ObjectTrajectory.stationary(params.n_frames)
    centers = still.poses[:, :3].astype(np.float64)
    cur = params
    for _ in range(passes):
        labels = contact_labels_for(cur, centers, radius, l_hand)
        j = joints_flat(forward_kinematics(cur, centers))
        res = fit_sequence(j, ContactMap(labels.astype(np.float32)), still,
                           ObjectShape("sphere", radius),
                           FitConfig(max_iters=iters, tolerance=1e-11, l_hand=l_hand),
                           init=cur)
        cur = res.params
    return cur


def build_grasp(m: float, seed: int = 0, radius: float = 0.1, l_hand: int = 256,
                refine: bool = True, refine_iters: int = 500):
    """Per-hand static grasp base {tau, rot6, theta, u} for mass m."""
    g = rng.stream(seed, 0x6A0)
    hands, s = _grasp_base(m, g, radius)
    params = _static_grasp_params(hands)
    if refine:
        params = refine_grasp(params, radius, l_hand, iters=refine_iters)
    return {
        "tau": params.tau[0], "rot6": params.rot6[0], "theta": params.theta[0],
        "u": np.stack([hands[0]["u"], hands[1]["u"]]), "grip": s,
    }


def generate_gt_hands_contacts(traj: ObjectTrajectory, m: float, seed: int = 0,
                               radius: float = 0.1, l_hand: int = 256,
                               refine: bool = True):
    """Grasp track + binary contact labels for a sphere trajectory.

    Hands keep a mass-dependent static grasp in object-relative coordinates
    (spheres are rotationally symmetric, so object spin never breaks
    contact); they retreat along the approach direction while released
    (throw free flight, non-holding hand during a pass). Labels come from
    contact_labels_for. Holding frames that end up with no contacts are
    re-jittered once with the wobble removed and flagged.
    """
    g = rng.stream(seed, 0x6A, traj.action if traj.action is not None else 9)
    n = traj.n_frames
    base = build_grasp(m, seed=seed, radius=radius, l_hand=l_hand, refine=refine)

    hold = np.ones((n, 2))
    if traj.action == 0:
        flight = detect_free_flight(traj)
        hold[:] = _release_weights(flight, n)
    elif traj.action == 1:
        hold = _pass_weights(traj, n)

    wobble = np.stack([_wobble(g, n, 0.0015), _wobble(g, n, 0.0015)], axis=1)
    params = _assemble_track(base, hold, wobble, n)
    centers = traj.poses[:, :3].astype(np.float64)
    labels = contact_labels_for(params, centers, radius, l_hand)

    flagged = [i for i in range(n) if hold[i].max() > 0.99 and labels[i].sum() == 0]
    if flagged:
        wobble2 = wobble.copy()
        wobble2[flagged] = 0.0
        params = _assemble_track(base, hold, wobble2, n)
        labels = contact_labels_for(params, centers, radius, l_hand)

    joints = JointTrack(joints_flat(forward_kinematics(params, centers)), fps=traj.fps)
    return {"hand_params": params, "joints": joints, "labels": labels,
            "flagged_frames": flagged, "hold": hold}


def _assemble_track(base: dict, hold: np.ndarray, wobble: np.ndarray, n: int) -> HandParams:
    retreat = 0.10
    tau = np.zeros((n, 2, 3), dtype=np.float64)
    rot6 = np.zeros((n, 2, 6), dtype=np.float64)
    theta = np.zeros((n, 2, 15, 3), dtype=np.float64)
    for hand in range(2):
        w = hold[:, hand][:, None]
        tau[:, hand] = base["tau"][hand] + base["u"][hand] * retreat * (1.0 - w)
        tau[:, hand, 1] += wobble[:, hand]
        rot6[:, hand] = base["rot6"][hand]
        theta[:, hand] = base["theta"][hand] * (0.55 + 0.45 * hold[:, hand][:, None, None])
    return HandParams(tau.astype(np.float32), rot6.astype(np.float32), theta.astype(np.float32))


def _release_weights(flight: np.ndarray, n: int) -> np.ndarray:
    """Both hands release around the free-flight window, smoothly."""
    w = np.ones((n, 2))
    idx = np.flatnonzero(flight)
    if len(idx) == 0:
        return w
    lo, hi = idx[0], idx[-1]
    ramp = 4
    for i in range(n):
        if lo <= i <= hi:
            w[i] = 0.0
        elif i < lo:
            w[i] = min(1.0, (lo - i) / ramp)
        else:
            w[i] = min(1.0, (i - hi) / ramp)
    return w


def _pass_weights(traj: ObjectTrajectory, n: int) -> np.ndarray:
    """Left holds while the object is left of center, right afterwards."""
    x = traj.poses[:, 0].astype(np.float64)
    w = np.zeros((n, 2))
    span = max(x.max() - x.min(), 1e-6)
    blend = np.clip((x - x.min()) / span, 0, 1)
    w[:, 0] = np.clip(1.5 - 2.0 * blend, 0, 1)
    w[:, 1] = np.clip(2.0 * blend - 0.5, 0, 1)
    return w


# -- dataset ------------------------------------------------------------------


@dataclass
class DataGenConfig:
    out_dir: str = "dataset"
    actions: tuple = (0, 1, 2, 3, 4)
    train_masses: tuple = TRAIN_MASSES
    eval_masses: tuple = TRAIN_MASSES
    records_per_combo: int = 2
    eval_records_per_combo: int = 1
    n_frames: int = 180
    seed: int = 0
    radius: float = 0.1
    l_hand: int = 256
    refine_grasps: bool = True

    def validate(self):
        if self.records_per_combo < 0 or self.eval_records_per_combo < 0:
            raise ConfigError("record counts must be non-negative")
        if self.n_frames < 8:
            raise ConfigError("n_frames too small")
        for a in self.actions:
            if a not in ACTIONS:
                raise ConfigError(f"action {a} has no generator (label 5 is reserved)")


@dataclass
class DatasetRecord:
    record_id: str
    split: str
    mass: float
    action: int
    seed: int
    traj: ObjectTrajectory
    joints: JointTrack
    labels: np.ndarray

    def state_track(self, p_temp: np.ndarray) -> np.ndarray:
        """(N, 21) reference-vertex representation for TrajDiff training."""
        from .trajdiff import pose_to_refs
        return pose_to_refs(self.traj, p_temp).to_state()


def _record_bytes(rec: DatasetRecord) -> bytes:
    from io import BytesIO
    from .connet import ContactMap, save_con
    from .handdiff import save_jnt
    from .trajdiff import save_traj
    import tempfile, os

    blocks = {}
    with tempfile.TemporaryDirectory() as td:
        save_traj(Path(td) / "b.traj", rec.traj)
        blocks["traj"] = (Path(td) / "b.traj").read_bytes()
        save_jnt(Path(td) / "b.jnt", rec.joints)
        blocks["jnt"] = (Path(td) / "b.jnt").read_bytes()
        save_con(Path(td) / "b.con", ContactMap(rec.labels.astype(np.float32)))
        blocks["con"] = (Path(td) / "b.con").read_bytes()

    offsets = {}
    cur = 0
    for name in ("traj", "jnt", "con"):
        offsets[name] = {"offset": cur, "size": len(blocks[name])}
        cur += len(blocks[name])
    header = {"id": rec.record_id, "split": rec.split, "mass": rec.mass,
              "action": rec.action, "seed": rec.seed, "blocks": offsets}
    hb = json.dumps(header, sort_keys=True).encode()
    out = BytesIO()
    out.write(struct.pack("<I", len(hb)))
    out.write(hb)
    for name in ("traj", "jnt", "con"):
        out.write(blocks[name])
    return out.getvalue()


def load_record(path) -> DatasetRecord:
    from .connet import load_con
    from .handdiff import load_jnt
    from .trajdiff import load_traj
    import tempfile

    raw = Path(path).read_bytes()
    (hlen,) = struct.unpack("<I", raw[:4])
    header = json.loads(raw[4:4 + hlen].decode())
    base = 4 + hlen
    parts = {}
    with tempfile.TemporaryDirectory() as td:
        for name, meta in header["blocks"].items():
            p = Path(td) / name
            p.write_bytes(raw[base + meta["offset"]: base + meta["offset"] + meta["size"]])
            parts[name] = p
        traj = load_traj(parts["traj"])
        joints = load_jnt(parts["jnt"])
        con = load_con(parts["con"])
    return DatasetRecord(header["id"], header["split"], header["mass"], header["action"],
                         header["seed"], traj, joints, con.b.astype(np.uint8))


def generate_record(split: str, action: int, mass: float, k: int, cfg: DataGenConfig) -> DatasetRecord:
    seed = abs(hash((cfg.seed, split, action, int(mass * 1000), k))) % (2 ** 31)
    # hash() is salted per process; derive a stable seed instead
    seed = int.from_bytes(hashlib.sha256(
        f"{cfg.seed}|{split}|{action}|{mass:.6f}|{k}".encode()).digest()[:4], "little")
    traj = generate_gt_trajectory(action, mass, seed=seed, n=cfg.n_frames)
    hands = generate_gt_hands_contacts(traj, mass, seed=seed, radius=cfg.radius,
                                       l_hand=cfg.l_hand, refine=cfg.refine_grasps)
    rid = f"{split}-a{action}-m{mass:g}-{k:03d}"
    return DatasetRecord(rid, split, mass, action, seed, traj, hands["joints"], hands["labels"])


def build_dataset(cfg: DataGenConfig) -> dict:
    """Write records/{split}/{id}.bin plus manifest.json; deterministic per seed."""
    cfg.validate()
    out = Path(cfg.out_dir)
    (out / "records" / "train").mkdir(parents=True, exist_ok=True)
    (out / "records" / "eval").mkdir(parents=True, exist_ok=True)
    manifest = {"config": {k: (list(v) if isinstance(v, tuple) else v)
                           for k, v in vars(cfg).items()},
                "records": [], "counts": {}}
    plans = []
    for action in cfg.actions:
        for mass in cfg.train_masses:
            plans += [("train", action, mass, k) for k in range(cfg.records_per_combo)]
        for mass in cfg.eval_masses:
            plans += [("eval", action, mass, k) for k in range(cfg.eval_records_per_combo)]
    for split, action, mass, k in plans:
        rec = generate_record(split, action, mass, k, cfg)
        blob = _record_bytes(rec)
        rel = f"records/{split}/{rec.record_id}.bin"
        (out / rel).write_bytes(blob)
        digest = hashlib.sha256(blob).hexdigest()
        manifest["records"].append({"id": rec.record_id, "split": split, "path": rel,
                                    "mass": mass, "action": action, "seed": rec.seed,
                                    "sha256": digest})
        key = f"{split}|a{action}|m{mass:g}"
        manifest["counts"][key] = manifest["counts"].get(key, 0) + 1
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1))
    return manifest


def load_dataset(root) -> list:
    root = Path(root)
    manifest = json.loads((root / "manifest.json").read_text())
    return [load_record(root / e["path"]) for e in manifest["records"]]


# -- retiming oracle ----------------------------------------------------------


def mass_speed_cap(m: float) -> float:
    """Comfortable manipulation speed, strictly decreasing in mass."""
    return 3.2 * 3.0 / (3.0 + m)


def oracle_ratio_profile(d_user: float, m: float, seed: int = 0, n: int = 180) -> np.ndarray:
    """Per-step traversal ratios from a bounded-acceleration 1-D simulation.

    Accelerate at a_max = F/m toward a mass-dependent speed cap, brake to
    stop exactly at d_user, rest for any remaining frames. Ratios sum to 1.
    """
    if d_user <= 0:
        raise ConfigError("d_user must be positive")
    a_max = min(F_BUDGET / m, 80.0)
    v_max = mass_speed_cap(m)
    dt = 1.0 / FPS
    g = rng.stream(seed, 0x0A71)
    noise = 1.0 + 0.08 * _wobble(g, n, 1.0)
    x = np.zeros(n + 1)
    v = 0.0
    for i in range(n):
        remaining = d_user - x[i]
        if remaining <= 1e-9:
            v = 0.0
            x[i + 1] = d_user
            continue
        if v * v / (2 * a_max) >= remaining:
            v = max(v - a_max * dt, 0.0)
        else:
            v = min(v + a_max * dt, v_max)
        v_eff = v * noise[i]
        x[i + 1] = min(x[i] + max(v_eff, 0.0) * dt, d_user)
    if x[-1] < d_user - 1e-6:
        # profile infeasible within the horizon; stretch the tail linearly
        x = x * (d_user / x[-1])
    r = np.diff(x) / d_user
    r = np.clip(r, 0.0, None)
    total = r.sum()
    if total <= 0:
        raise ConfigError("degenerate ratio profile")
    return (r / total).astype(np.float32)


def random_user_path(seed: int, n_points: int = 60, max_length: float = 1.5) -> np.ndarray:
    """Smooth random polyline (Fourier curve), capped in arc length."""
    g = rng.stream(seed, 0xBA7)
    t = np.linspace(0, 1, n_points)
    pts = np.zeros((n_points, 3))
    for d in range(3):
        for k in range(1, 4):
            pts[:, d] += g.uniform(-1, 1) / k * np.sin(np.pi * k * t + g.uniform(0, 2 * np.pi))
    pts -= pts[0]
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    length = seg.sum()
    scale = min(1.0, max_length / max(length, 1e-9)) * g.uniform(0.5, 1.0)
    return (pts * scale).astype(np.float64)


def generate_ratio_dataset(n_paths: int, masses, seed: int = 0, n: int = 180):
    """Training tuples for the retiming network: (phi_fix, mass, d_user, r_hat)."""
    from .retime import resample_uniform
    out = []
    masses = list(masses)
    for i in range(n_paths):
        path = random_user_path(seed * 1000 + i)
        phi_fix, d_user = resample_uniform(path)
        m = masses[i % len(masses)]
        r_hat = oracle_ratio_profile(d_user, m, seed=seed * 1000 + i, n=n)
        out.append({"phi_fix": phi_fix, "mass": m, "d_user": d_user, "r_hat": r_hat})
    return out


# -- acceptance-protocol helpers ----------------------------------------------


def grasp_with_bias(m: float, seed: int, bias: float, n: int = 12, radius: float = 0.1,
                    l_hand: int = 256, refine: bool = True):
    """Static grasp whose hands are displaced along their approach directions.

    bias > 0 floats the hands off the object, bias < 0 digs them in: the two
    artifact classes the touch/collision terms exist to fix. Contact labels
    describe the intended (unbiased) grasp; joints come from the biased one.
    """
    base = build_grasp(m, seed=seed, radius=radius, l_hand=l_hand, refine=refine)
    traj = ObjectTrajectory.stationary(n)
    traj.mass = m
    centers = traj.poses[:, :3].astype(np.float64)
    hold = np.ones((n, 2))
    wob = np.zeros((n, 2))
    params_ref = _assemble_track(base, hold, wob, n)
    labels = contact_labels_for(params_ref, centers, radius, l_hand)

    biased = dict(base)
    biased["tau"] = base["tau"] + base["u"] * bias
    params_biased = _assemble_track(biased, hold, wob, n)
    joints = JointTrack(joints_flat(forward_kinematics(params_biased, centers)), fps=traj.fps)
    return {"traj": traj, "j_star": joints, "labels": labels,
            "params_biased": params_biased, "params_ref": params_ref}


def generate_grasp_dataset(masses, per_mass: int, seed: int = 0, n: int = 180,
                           radius: float = 0.1, l_hand: int = 256, refine: bool = True):
    """Static-grasp sequences on a zero trajectory (the grasp-synthesis protocol).

    Returns a list of dicts with joints (N, 126), labels, mass, traj.
    """
    out = []
    for mi, m in enumerate(masses):
        for k in range(per_mass):
            s = int.from_bytes(hashlib.sha256(f"grasp|{seed}|{m:.4f}|{k}".encode()).digest()[:4],
                               "little")
            traj = ObjectTrajectory.stationary(n)
            traj.mass = m
            res = generate_gt_hands_contacts(traj, m, seed=s, radius=radius,
                                             l_hand=l_hand, refine=refine)
            out.append({"joints": res["joints"], "labels": res["labels"], "mass": m,
                        "traj": traj, "hand_params": res["hand_params"], "seed": s})
    return out
