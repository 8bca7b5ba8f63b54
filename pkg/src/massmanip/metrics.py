"""Evaluation metrics: physical plausibility, diversity, acceleration distances.

Thresholds follow the 5 mm rule: a hand vertex is in contact when its signed
distance to the object surface is below 5 mm (penetration counts as
contact); a frame collides when some vertex penetrates strictly more than
5 mm. m_dist reports the per-frame maximum penetration depth (0 when none)
averaged over every frame of every sample, in millimeters. m_touch is the
percentage of samples without a single contact anywhere, throw-labeled
samples excluded.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .handmodel import ObjectPose, ObjectShape, object_surface_query
from .numerics import rng

CONTACT_MM = 5.0
COLLISION_MM = 5.0
THROW_LABEL = 0


@dataclass
class EvalReport:
    m_col: float = float("nan")
    m_dist: float = float("nan")
    m_touch: float = float("nan")
    diversity: float | None = None
    multimodality: float | None = None
    acc_wasserstein: dict = field(default_factory=dict)
    sample_counts: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("m_col", "m_touch"):
            v = getattr(self, name)
            if np.isfinite(v) and not 0.0 <= v <= 100.0:
                raise ShapeError(f"{name} must be a percentage, got {v}")
        if np.isfinite(self.m_dist) and self.m_dist < 0:
            raise ShapeError("m_dist must be >= 0")

    def to_json(self) -> str:
        d = {k: (v if not isinstance(v, float) or np.isfinite(v) else None)
             for k, v in vars(self).items()}
        return json.dumps(d, sort_keys=True, indent=1)

    def csv_row(self, condition: str) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow([condition, self.m_col, self.m_dist, self.m_touch,
                    self.diversity, self.multimodality])
        return buf.getvalue().strip()


def _signed_distances(vertices: np.ndarray, shape: ObjectShape, poses: np.ndarray) -> np.ndarray:
    """(N, l) signed distances of a vertex track against a posed object."""
    n = vertices.shape[0]
    if shape.kind == "sphere":
        rel = vertices - poses[:, None, :3]
        return np.linalg.norm(rel, axis=2) - shape.radius
    out = np.zeros(vertices.shape[:2])
    for i in range(n):
        q = object_surface_query(vertices[i], shape, ObjectPose(poses[i, :3], poses[i, 3:]))
        out[i] = q["signed_distance"]
    return out


def physical_plausibility(samples) -> dict:
    """m_col / m_dist / m_touch over a set of motion samples.

    Each sample: dict with vertices (N, l, 3) (a HandSurface track), traj
    (ObjectTrajectory or (N, 9) poses), shape (ObjectShape), and an optional
    integer action label (throw = 0 is excluded from m_touch).
    """
    if not samples:
        raise ConfigError("physical_plausibility needs at least one sample")
    total_frames = 0
    collision_free = 0
    depth_sum = 0.0
    touch_eligible = 0
    touch_missing = 0
    for s in samples:
        verts = s["vertices"].vertices if hasattr(s["vertices"], "vertices") else np.asarray(s["vertices"])
        traj = s["traj"]
        poses = traj.poses if hasattr(traj, "poses") else np.asarray(traj)
        shape = s.get("shape") or ObjectShape("sphere", 0.1)
        if verts.shape[0] != poses.shape[0]:
            raise ShapeError(f"sample frames mismatch: vertices {verts.shape[0]} vs poses {poses.shape[0]}")
        sd = _signed_distances(verts.astype(np.float64), shape, poses.astype(np.float64))
        pen = np.maximum(-sd, 0.0)
        frame_depth = pen.max(axis=1)                       # (N,)
        total_frames += len(frame_depth)
        collision_free += int(np.sum(frame_depth <= COLLISION_MM / 1000.0))  # strict > is a collision
        depth_sum += float(frame_depth.sum())
        action = s.get("action")
        if action != THROW_LABEL:
            touch_eligible += 1
            if not np.any(sd < CONTACT_MM / 1000.0):
                touch_missing += 1
    m_col = 100.0 * collision_free / total_frames
    m_dist = 1000.0 * depth_sum / total_frames
    m_touch = 100.0 * touch_missing / touch_eligible if touch_eligible else 0.0
    return {"m_col": m_col, "m_dist": m_dist, "m_touch": m_touch,
            "frames": total_frames, "touch_eligible": touch_eligible}


def _canonical_order(feats) -> list:
    keys = [hashlib.sha256(np.ascontiguousarray(f).tobytes()).hexdigest() for f in feats]
    return [feats[i] for i in np.argsort(keys)]


def diversity_multimodality(samples_by_action: dict, num_pairs: int = 200, seed: int = 0) -> dict:
    """Mean pairwise feature distance within classes (diversity) and across
    classes (multimodality); features are flattened raw motions.

    Classes with fewer than two samples are skipped (with a warning entry).
    Sample order inside a class does not matter: samples are canonically
    ordered by content hash before pairing.
    """
    feats = {}
    skipped = []
    for label, samples in samples_by_action.items():
        flat = [np.asarray(s, dtype=np.float64).reshape(-1) for s in samples]
        if len(flat) < 2:
            skipped.append(label)
            continue
        feats[label] = _canonical_order(flat)
    if not feats:
        raise ConfigError("no action class has two or more samples")

    g = rng.stream(seed, 0xD1)
    per_class = []
    for label in sorted(feats):
        items = feats[label]
        dists = []
        for _ in range(num_pairs):
            i = int(g.integers(len(items)))
            j = int(g.integers(len(items) - 1))
            j = j + 1 if j >= i else j
            dists.append(np.linalg.norm(items[i] - items[j]))
        per_class.append(float(np.mean(dists)))
    diversity = float(np.mean(per_class))

    labels = sorted(feats)
    multimodality = None
    if len(labels) >= 2:
        dists = []
        for _ in range(num_pairs):
            a, b = g.choice(len(labels), size=2, replace=False)
            ia = int(g.integers(len(feats[labels[a]])))
            ib = int(g.integers(len(feats[labels[b]])))
            dists.append(np.linalg.norm(feats[labels[a]][ia] - feats[labels[b]][ib]))
        multimodality = float(np.mean(dists))
    return {"diversity": diversity, "multimodality": multimodality,
            "skipped_classes": skipped, "per_class": dict(zip(sorted(feats), per_class))}


def accel_magnitudes(positions: np.ndarray, fps: float = 50.0) -> np.ndarray:
    """Per-frame acceleration magnitudes from second finite differences."""
    p = np.asarray(positions, dtype=np.float64)
    if p.ndim == 1:
        p = p[:, None]
    if p.shape[0] < 3:
        raise ShapeError(f"need at least 3 frames for accelerations, got {p.shape[0]}")
    acc = (p[2:] - 2 * p[1:-1] + p[:-2]) * fps * fps
    return np.linalg.norm(acc, axis=1)


def wasserstein_1d(a, b) -> float:
    """W1 between empirical distributions via the quantile-difference integral."""
    a = np.sort(np.asarray(a, dtype=np.float64).reshape(-1))
    b = np.sort(np.asarray(b, dtype=np.float64).reshape(-1))
    if len(a) == 0 or len(b) == 0:
        raise ConfigError("empty sample set")
    values = np.concatenate([a, b])
    values.sort(kind="mergesort")
    deltas = np.diff(values)
    cdf_a = np.searchsorted(a, values[:-1], side="right") / len(a)
    cdf_b = np.searchsorted(b, values[:-1], side="right") / len(b)
    return float(np.sum(np.abs(cdf_a - cdf_b) * deltas))


def acceleration_wasserstein(trajs_a, trajs_b, fps: float = 50.0) -> float:
    """Pooled acceleration-magnitude W1 between two trajectory sets.

    Inputs are lists of (N, 3) position arrays (or ObjectTrajectory)."""
    def pool(trajs):
        mags = []
        for t in trajs:
            p = t.poses[:, :3] if hasattr(t, "poses") else np.asarray(t)
            mags.append(accel_magnitudes(p, fps))
        return np.concatenate(mags)

    if not trajs_a or not trajs_b:
        raise ConfigError("both trajectory sets must be non-empty")
    return wasserstein_1d(pool(trajs_a), pool(trajs_b))
