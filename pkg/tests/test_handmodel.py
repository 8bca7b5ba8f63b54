import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from massmanip.errors import ConfigError, DegenerateInputError
from massmanip.handmodel import (
    HandParams, ObjectPose, ObjectShape, box_mesh, forward_kinematics, geodesic_angle,
    matrix_to_rot6d, object_surface_query, rot6d_to_matrix, skin_hand_surface,
    surface_template, template,
)
from massmanip.numerics import rng


def test_rot6d_identity():
    np.testing.assert_allclose(rot6d_to_matrix(np.array([1, 0, 0, 0, 1, 0.0])), np.eye(3), atol=1e-12)


def test_rot6d_90deg_z():
    # Gram-Schmidt by hand: x=(0,1,0), y=(-1,0,0), z=x cross y=(0,0,1)
    expected = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1.0]])
    np.testing.assert_allclose(rot6d_to_matrix(np.array([0, 1, 0, -1, 0, 0.0])), expected, atol=1e-12)


@given(st.integers(0, 10_000))
@settings(max_examples=50, deadline=None)
def test_rot6d_orthonormal(seed):
    r6 = rng.stream(seed, 61).standard_normal(6)
    try:
        r = rot6d_to_matrix(r6)
    except DegenerateInputError:
        return
    np.testing.assert_allclose(r.T @ r, np.eye(3), atol=1e-6)
    assert np.linalg.det(r) > 0.999


def test_rot6d_degenerate_parallel():
    with pytest.raises(DegenerateInputError):
        rot6d_to_matrix(np.array([1, 0, 0, 2, 0, 0.0]))
    with pytest.raises(DegenerateInputError):
        rot6d_to_matrix(np.array([0, 0, 0, 0, 1, 0.0]))


def test_rot6d_matrix_roundtrip():
    g = rng.stream(3, 14)
    for _ in range(20):
        r = rot6d_to_matrix(g.standard_normal(6))
        np.testing.assert_allclose(rot6d_to_matrix(matrix_to_rot6d(r)), r, atol=1e-9)


def _rest_template_joints():
    """Rest-pose joints straight from the stored template offsets."""
    tpl = template()
    out = np.zeros((2, 21, 3))
    for hand in range(2):
        mcp, pha = tpl.hand_offsets(hand)
        for f in range(5):
            base = 1 + f * 4
            out[hand, base] = mcp[f]
            out[hand, base + 1] = out[hand, base] + pha[f, 0]
            out[hand, base + 2] = out[hand, base + 1] + pha[f, 1]
            out[hand, base + 3] = out[hand, base + 2] + pha[f, 2]
    return out.reshape(42, 3)


def test_fk_rest_pose_matches_template():
    joints = forward_kinematics(HandParams.rest(1))[0]
    np.testing.assert_allclose(joints, _rest_template_joints(), atol=1e-6)


def test_fk_pure_translation_shifts_every_joint():
    h = HandParams.rest(3)
    base = forward_kinematics(h)
    t = np.array([0.07, -0.02, 0.31], dtype=np.float32)
    h.tau[:] = t
    shifted = forward_kinematics(h)
    np.testing.assert_allclose(shifted, base + t, atol=1e-6)


def test_fk_two_link_oracle():
    # bend right index mcp by pi/4 about x; pip/dip/tip follow the rotated chain
    h = HandParams.rest(1)
    a = np.pi / 4
    h.theta[0, 1, 3, 0] = a  # hand 1, articulated joint 3 = index mcp, x angle
    joints = forward_kinematics(h)[0]
    rest = _rest_template_joints()
    tpl = template()
    _, pha = tpl.hand_offsets(1)
    rx = np.array([[1, 0, 0], [0, np.cos(a), -np.sin(a)], [0, np.sin(a), np.cos(a)]])
    base = 21 + 1 + 1 * 4  # right index mcp
    mcp = rest[base]
    pip = mcp + rx @ pha[1, 0]
    dip = pip + rx @ pha[1, 1]
    tip = dip + rx @ pha[1, 2]
    np.testing.assert_allclose(joints[base], mcp, atol=1e-6)
    np.testing.assert_allclose(joints[base + 1], pip, atol=1e-6)
    np.testing.assert_allclose(joints[base + 2], dip, atol=1e-6)
    np.testing.assert_allclose(joints[base + 3], tip, atol=1e-6)
    # every other joint is untouched
    mask = np.ones(42, dtype=bool)
    mask[base:base + 4] = False
    np.testing.assert_allclose(joints[mask], rest[mask], atol=1e-6)


def test_skin_rest_pose_within_reach():
    tpl = template()
    surf = skin_hand_surface(HandParams.rest(1))
    reach = max(np.linalg.norm(tpl.mcp_offsets[f]) + tpl.phalanx_offsets[f].sum(axis=0) @ [0, 1, 0]
                + np.linalg.norm(tpl.phalanx_offsets[f, :, 0]) for f in range(5))
    reach = reach + tpl.capsule_radii.max() + 0.05
    d = np.linalg.norm(surf.vertices[0], axis=1)
    assert d.max() < reach


def test_skin_global_rotation_equivariance():
    h = HandParams.rest(2)
    h.theta[:] = rng.stream(8, 1).uniform(-0.5, 0.5, h.theta.shape).astype(np.float32)
    base = skin_hand_surface(h)
    r0 = rot6d_to_matrix(np.array([0, 1, 0, -1, 0, 0.0]))  # 90 deg about z
    h2 = HandParams.rest(2)
    h2.theta[:] = h.theta
    h2.rot6[:] = matrix_to_rot6d(r0).astype(np.float32)
    rotated = skin_hand_surface(h2)
    np.testing.assert_allclose(rotated.vertices, base.vertices @ r0.T, atol=1e-5)
    np.testing.assert_allclose(rotated.normals, base.normals @ r0.T, atol=1e-5)
    np.testing.assert_allclose(rotated.joints, base.joints @ r0.T, atol=1e-5)


def test_skin_fingertip_apex_analytic():
    # straight right index finger: apex = mcp + prox + inter + distal + radius along +y
    tpl = template()
    surf = skin_hand_surface(HandParams.rest(1))
    apex_idx = surface_template()["tip_apex"][1, 1]
    expected = tpl.mcp_offsets[1] + tpl.phalanx_offsets[1].sum(axis=0)
    expected = expected + np.array([0, 1, 0]) * tpl.capsule_radii[3]
    np.testing.assert_allclose(surf.vertices[0, apex_idx], expected, atol=1e-6)


def test_skin_normals_unit():
    h = HandParams.rest(1)
    h.theta[:] = 0.3
    surf = skin_hand_surface(h)
    np.testing.assert_allclose(np.linalg.norm(surf.normals, axis=2), 1.0, atol=1e-5)


def test_sphere_query_closed_form():
    shape = ObjectShape("sphere", radius=0.1)
    q = object_surface_query(np.array([0.2, 0.0, 0.0]), shape)
    assert q["signed_distance"] == pytest.approx(0.1, abs=1e-12)
    np.testing.assert_allclose(q["nearest"], [0.1, 0, 0], atol=1e-12)
    np.testing.assert_allclose(q["normal"], [1, 0, 0], atol=1e-12)


def test_sphere_query_penetrating():
    q = object_surface_query(np.array([0.05, 0.0, 0.0]), ObjectShape("sphere", radius=0.1))
    assert q["signed_distance"] == pytest.approx(-0.05, abs=1e-12)


def test_sphere_query_center_degenerate():
    q = object_surface_query(np.zeros(3), ObjectShape("sphere", radius=0.1))
    assert q["degenerate"]
    np.testing.assert_allclose(q["normal"], [0, 0, 1])
    np.testing.assert_allclose(q["nearest"], [0, 0, 0.1])


def test_sphere_nearest_on_surface_property():
    g = rng.stream(10, 2)
    pts = g.uniform(-0.5, 0.5, (200, 3))
    pose = ObjectPose(np.array([0.05, -0.1, 0.2]), np.array([1, 0, 0, 0, 1, 0.0]))
    q = object_surface_query(pts, ObjectShape("sphere", radius=0.13), pose)
    d = np.linalg.norm(q["nearest"] - pose.tau, axis=1)
    np.testing.assert_allclose(d, 0.13, atol=1e-9)


def _closest_on_triangle_reference(p, a, b, c):
    """Independent scalar oracle: plane projection + explicit edge clamping."""
    n = np.cross(b - a, c - a)
    n2 = n @ n
    candidates = []
    # projection onto the plane, kept if inside (barycentric)
    proj = p - ((p - a) @ n / n2) * n
    area = np.linalg.norm(n)
    w_a = np.cross(b - proj, c - proj) @ n / (area * area) * area
    w_b = np.cross(c - proj, a - proj) @ n / (area * area) * area
    w_c = np.cross(a - proj, b - proj) @ n / (area * area) * area
    if w_a >= -1e-12 and w_b >= -1e-12 and w_c >= -1e-12:
        candidates.append(proj)
    for e0, e1 in ((a, b), (b, c), (c, a)):
        t = np.clip((p - e0) @ (e1 - e0) / ((e1 - e0) @ (e1 - e0)), 0.0, 1.0)
        candidates.append(e0 + t * (e1 - e0))
    dists = [np.linalg.norm(p - q) for q in candidates]
    return candidates[int(np.argmin(dists))]


def test_mesh_query_matches_bruteforce_oracle():
    mesh = box_mesh(1.0)
    shape = ObjectShape("mesh", mesh=mesh)
    pts = rng.stream(77, 3).uniform(-1.2, 1.2, (1000, 3))
    q = object_surface_query(pts, shape)
    tri = mesh.vertices[mesh.faces]
    for i in range(len(pts)):
        best_d = np.inf
        for t in tri:
            cp = _closest_on_triangle_reference(pts[i], t[0], t[1], t[2])
            best_d = min(best_d, np.linalg.norm(pts[i] - cp))
        assert abs(abs(q["signed_distance"][i]) - best_d) < 1e-9
        # sign: box is axis-aligned, inside iff max|coord| < 0.5
        inside = np.max(np.abs(pts[i])) < 0.5
        assert (q["signed_distance"][i] < 0) == inside


def test_mesh_rejects_open_surface():
    with pytest.raises(ConfigError):
        from massmanip.handmodel import TriangleMesh
        TriangleMesh(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0.0]]), np.array([[0, 1, 2]]))


def test_object_shape_validation():
    with pytest.raises(ConfigError):
        ObjectShape("sphere", radius=0.0)
    with pytest.raises(ConfigError):
        ObjectShape("mesh")


def test_load_obj_roundtrip(tmp_path):
    from massmanip.handmodel import load_obj
    mesh = box_mesh(0.2)
    lines = ["# cube"]
    lines += [f"v {x} {y} {z}" for x, y, z in mesh.vertices]
    lines += [f"f {a+1} {b+1} {c+1}" for a, b, c in mesh.faces]
    p = tmp_path / "cube.obj"
    p.write_text("\n".join(lines))
    loaded = load_obj(p)
    np.testing.assert_allclose(loaded.vertices, mesh.vertices)
    np.testing.assert_array_equal(loaded.faces, mesh.faces)


def test_geodesic_angle_identity():
    r = rot6d_to_matrix(np.array([0, 1, 0, -1, 0, 0.0]))
    assert geodesic_angle(r, r) == pytest.approx(0.0, abs=1e-6)
    assert geodesic_angle(np.eye(3), r) == pytest.approx(np.pi / 2, abs=1e-9)
