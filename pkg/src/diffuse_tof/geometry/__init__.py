"""Meshes, rigid transforms, rotations and ray casting."""

from .intersect import (
    BVH,
    Intersection,
    Part,
    PlacedMesh,
    Ray,
    RayHits,
    build_bvh,
    intersect_brute_force,
    intersect_placed_mesh,
    intersect_plane,
    intersect_ray,
    trace_rays,
)
from .mesh import (
    TriangleMesh,
    apply_pose,
    asymmetric_test_mesh,
    box_mesh,
    load_obj,
    merge_meshes,
    save_obj,
)
from .primitives import Plane, SphereOnPlane, tessellate_sphere, unit_icosphere
from .rotation import Pose6D, matrix_to_rot6d, random_rotation, rot6d_jacobian, rot6d_to_matrix

__all__ = [
    "BVH", "Intersection", "Part", "PlacedMesh", "Plane", "Pose6D", "Ray", "RayHits",
    "SphereOnPlane", "TriangleMesh", "apply_pose", "asymmetric_test_mesh", "box_mesh",
    "build_bvh", "intersect_brute_force", "intersect_placed_mesh", "intersect_plane",
    "intersect_ray", "load_obj", "matrix_to_rot6d", "merge_meshes", "random_rotation",
    "rot6d_jacobian", "rot6d_to_matrix", "save_obj", "tessellate_sphere", "trace_rays",
    "unit_icosphere",
]
