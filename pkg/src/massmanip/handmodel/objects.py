"""Object geometry: spheres and triangle meshes, nearest-point queries, OBJ ingest.

Sphere queries are closed-form. Mesh queries evaluate every point against
every triangle (Ericson's closest-point-on-triangle, vectorized); the sign
comes from the summed normals of all triangles attaining the minimum
distance, which acts as a pseudo-normal at edges and vertices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DegenerateInputError, ShapeError
from .rotations import rot6d_to_matrix

IDENTITY_ROT6 = np.array([1, 0, 0, 0, 1, 0], dtype=np.float32)


@dataclass
class ObjectPose:
    tau: np.ndarray
    rot6: np.ndarray

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=np.float64).reshape(3)
        self.rot6 = np.asarray(self.rot6, dtype=np.float64).reshape(6)

    @property
    def rotation(self) -> np.ndarray:
        return rot6d_to_matrix(self.rot6)

    @staticmethod
    def identity() -> "ObjectPose":
        return ObjectPose(np.zeros(3), IDENTITY_ROT6)


@dataclass
class TriangleMesh:
    vertices: np.ndarray   # (V, 3)
    faces: np.ndarray      # (T, 3) int

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        self.faces = np.asarray(self.faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ShapeError(f"mesh vertices shape {self.vertices.shape}")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise ShapeError(f"mesh faces shape {self.faces.shape}")
        _check_closed_oriented(self.faces)

    def face_normals(self) -> np.ndarray:
        tri = self.vertices[self.faces]
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        ln = np.linalg.norm(n, axis=1, keepdims=True)
        if np.any(ln < 1e-15):
            raise DegenerateInputError("mesh has a degenerate (zero-area) face")
        return n / ln


def _check_closed_oriented(faces: np.ndarray):
    """Every undirected edge must appear exactly twice, in opposite directions."""
    edges = {}
    for f in faces:
        for i in range(3):
            e = (int(f[i]), int(f[(i + 1) % 3]))
            edges[e] = edges.get(e, 0) + 1
    for (a, b), cnt in edges.items():
        if cnt != 1 or edges.get((b, a), 0) != 1:
            raise ConfigError(f"mesh not closed/consistently oriented at edge ({a},{b})")


@dataclass
class ObjectShape:
    kind: str = "sphere"
    radius: float = 0.1
    mesh: TriangleMesh | None = None

    def __post_init__(self):
        if self.kind == "sphere":
            if self.radius <= 0:
                raise ConfigError(f"sphere radius must be positive, got {self.radius}")
        elif self.kind == "mesh":
            if self.mesh is None:
                raise ConfigError("mesh shape needs a TriangleMesh")
        else:
            raise ConfigError(f"unknown object kind {self.kind!r}")


def box_mesh(size: float = 0.1, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Axis-aligned cube, outward-oriented; handy default mesh."""
    h = size / 2.0
    c = np.asarray(center, dtype=np.float64)
    v = np.array([[x, y, z] for x in (-h, h) for y in (-h, h) for z in (-h, h)]) + c
    f = np.array([
        [0, 1, 3], [0, 3, 2],      # -x
        [4, 6, 7], [4, 7, 5],      # +x
        [0, 4, 5], [0, 5, 1],      # -y
        [2, 3, 7], [2, 7, 6],      # +y
        [0, 2, 6], [0, 6, 4],      # -z
        [1, 5, 7], [1, 7, 3],      # +z
    ])
    return TriangleMesh(v, f)


def load_obj(path) -> TriangleMesh:
    """ASCII OBJ: v and f records; polygon faces are fan-triangulated."""
    verts, faces = [], []
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"OBJ file not found: {path}")
    for line in path.read_text().splitlines():
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
            for i in range(1, len(idx) - 1):
                faces.append([idx[0], idx[i], idx[i + 1]])
    if not verts or not faces:
        raise ConfigError(f"OBJ file {path} has no geometry")
    return TriangleMesh(np.asarray(verts), np.asarray(faces))


def closest_point_on_triangles(p: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """p (M, 3), tri (T, 3, 3) -> closest points (M, T, 3)."""
    a, b, c = tri[:, 0][None], tri[:, 1][None], tri[:, 2][None]   # (1,T,3)
    p = p[:, None, :]                                             # (M,1,3)
    ab, ac = b - a, c - a
    ap = p - a
    d1 = np.einsum("mtk,mtk->mt", np.broadcast_to(ab, ap.shape), ap)
    d2 = np.einsum("mtk,mtk->mt", np.broadcast_to(ac, ap.shape), ap)
    bp = p - b
    d3 = np.einsum("mtk,mtk->mt", np.broadcast_to(ab, bp.shape), bp)
    d4 = np.einsum("mtk,mtk->mt", np.broadcast_to(ac, bp.shape), bp)
    cp = p - c
    d5 = np.einsum("mtk,mtk->mt", np.broadcast_to(ab, cp.shape), cp)
    d6 = np.einsum("mtk,mtk->mt", np.broadcast_to(ac, cp.shape), cp)

    with np.errstate(divide="ignore", invalid="ignore"):
        vc = d1 * d4 - d3 * d2
        vb = d5 * d2 - d1 * d6
        va = d3 * d6 - d5 * d4
        v_ab = d1 / (d1 - d3)
        v_ac = d2 / (d2 - d6)
        v_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        denom = va + vb + vc
        v = vb / denom
        w = vc / denom

    out = a + ab * v[..., None] + ac * w[..., None]               # face interior default
    sel = np.zeros(d1.shape, dtype=bool)

    def assign(mask, value):
        nonlocal out, sel
        m = mask & ~sel
        out = np.where(m[..., None], value, out)
        sel |= m

    assign((d1 <= 0) & (d2 <= 0), np.broadcast_to(a, out.shape))
    assign((d3 >= 0) & (d4 <= d3), np.broadcast_to(b, out.shape))
    assign((d6 >= 0) & (d5 <= d6), np.broadcast_to(c, out.shape))
    assign((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + ab * np.nan_to_num(v_ab)[..., None])
    assign((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + ac * np.nan_to_num(v_ac)[..., None])
    assign((va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0), b + (c - b) * np.nan_to_num(v_bc)[..., None])
    return out


def object_surface_query(points: np.ndarray, shape: ObjectShape, pose: ObjectPose | None = None) -> dict:
    """Nearest surface point, outward normal, and signed distance per query point.

    Negative signed distance means penetration. A query exactly at a sphere
    center returns the +z convention and sets the degenerate flag.
    """
    points = np.asarray(points, dtype=np.float64)
    squeeze = points.ndim == 1
    pts = points.reshape(-1, 3)
    pose = pose or ObjectPose.identity()

    if shape.kind == "sphere":
        c = pose.tau
        rel = pts - c
        dist = np.linalg.norm(rel, axis=1)
        degenerate = dist < 1e-12
        n = np.where(degenerate[:, None], np.array([0.0, 0.0, 1.0]), rel / np.maximum(dist, 1e-12)[:, None])
        nearest = c + shape.radius * n
        signed = dist - shape.radius
    else:
        r = pose.rotation
        world_v = shape.mesh.vertices @ r.T + pose.tau
        tri = world_v[shape.mesh.faces]                            # (T,3,3)
        closest = closest_point_on_triangles(pts, tri)             # (M,T,3)
        d = np.linalg.norm(closest - pts[:, None, :], axis=2)      # (M,T)
        best = np.argmin(d, axis=1)
        dmin = d[np.arange(len(pts)), best]
        nearest = closest[np.arange(len(pts)), best]
        fn = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        fn /= np.maximum(np.linalg.norm(fn, axis=1, keepdims=True), 1e-15)
        ties = d <= (dmin[:, None] + 1e-12)
        pseudo = ties @ fn                                          # (M,3) summed tie normals
        norm = np.linalg.norm(pseudo, axis=1, keepdims=True)
        degenerate = norm[:, 0] < 1e-12
        pseudo = np.where(degenerate[:, None], np.array([0.0, 0.0, 1.0]), pseudo / np.maximum(norm, 1e-15))
        outward = np.einsum("mk,mk->m", pts - nearest, pseudo)
        sign = np.where(outward >= 0, 1.0, -1.0)
        signed = sign * dmin
        n = pseudo
    result = {
        "nearest": nearest[0] if squeeze else nearest,
        "normal": n[0] if squeeze else n,
        "signed_distance": signed[0] if squeeze else signed,
        "degenerate": degenerate[0] if squeeze else degenerate,
    }
    return result
