"""Differentiable two-hand capsule model and object geometry."""

from .rotations import (euler_to_matrix, euler_to_matrix_t, geodesic_angle,
                        matrix_to_rot6d, rot6d_to_matrix, rot6d_to_matrix_t)
from .skeleton import (HandParams, N_BONES, N_JOINTS, SkeletonTemplate, bone_edges,
                       fk_tensors, forward_kinematics, joints_flat, template)
from .skinning import (DEFAULT_L_HAND, HandSurface, REGIONS, skin_hand_surface,
                       skin_tensors, surface_template)
from .objects import (IDENTITY_ROT6, ObjectPose, ObjectShape, TriangleMesh, box_mesh,
                      closest_point_on_triangles, load_obj, object_surface_query)

__all__ = [
    "euler_to_matrix", "euler_to_matrix_t", "geodesic_angle", "matrix_to_rot6d",
    "rot6d_to_matrix", "rot6d_to_matrix_t",
    "HandParams", "N_BONES", "N_JOINTS", "SkeletonTemplate", "bone_edges",
    "fk_tensors", "forward_kinematics", "joints_flat", "template",
    "DEFAULT_L_HAND", "HandSurface", "REGIONS", "skin_hand_surface", "skin_tensors", "surface_template",
    "IDENTITY_ROT6", "ObjectPose", "ObjectShape", "TriangleMesh", "box_mesh",
    "closest_point_on_triangles", "load_obj", "object_surface_query",
]
