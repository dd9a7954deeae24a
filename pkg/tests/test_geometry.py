import numpy as np
import pytest

from diffuse_tof.exceptions import ConfigurationError, InvalidParameterError
from diffuse_tof.geometry import (Part, PlacedMesh, Plane, Pose6D, Ray, SphereOnPlane, TriangleMesh, apply_pose,
                                  box_mesh, intersect_brute_force, intersect_ray, load_obj, random_rotation,
                                  rot6d_jacobian, rot6d_to_matrix, save_obj, tessellate_sphere, trace_rays)
from diffuse_tof.render import SceneModel


def gram_schmidt(a1, a2):
    # textbook Gram-Schmidt written out component-wise
    n1 = np.sqrt(a1[0] ** 2 + a1[1] ** 2 + a1[2] ** 2)
    b1 = [x / n1 for x in a1]
    dot = sum(x * y for x, y in zip(b1, a2))
    p = [y - dot * x for x, y in zip(b1, a2)]
    n2 = np.sqrt(sum(x * x for x in p))
    b2 = [x / n2 for x in p]
    b3 = [b1[1] * b2[2] - b1[2] * b2[1], b1[2] * b2[0] - b1[0] * b2[2], b1[0] * b2[1] - b1[1] * b2[0]]
    return np.array([b1, b2, b3]).T


class TestRot6d:
    def test_identity(self):
        np.testing.assert_array_equal(rot6d_to_matrix([1, 0, 0, 0, 1, 0]), np.eye(3))

    def test_scale_removed(self):
        np.testing.assert_allclose(rot6d_to_matrix([2, 0, 0, 0, 3, 0]), np.eye(3), atol=1e-15)

    def test_random_matches_gram_schmidt(self, rng):
        for _ in range(50):
            v = rng.normal(size=6)
            r = rot6d_to_matrix(v)
            np.testing.assert_allclose(r, gram_schmidt(v[:3], v[3:]), atol=1e-12)
            assert abs(np.linalg.det(r) - 1) < 1e-9
            np.testing.assert_allclose(r.T @ r, np.eye(3), atol=1e-12)

    def test_degenerate_rejected(self):
        with pytest.raises(InvalidParameterError):
            rot6d_to_matrix([1, 0, 0, 2, 0, 0])
        with pytest.raises(InvalidParameterError):
            rot6d_to_matrix([0, 0, 0, 0, 1, 0])

    def test_jacobian_matches_central_differences(self, rng):
        v = rng.normal(size=6)
        jac = rot6d_jacobian(v)
        h = 1e-6
        for m in range(6):
            e = np.zeros(6)
            e[m] = h
            fd = (rot6d_to_matrix(v + e) - rot6d_to_matrix(v - e)) / (2 * h)
            np.testing.assert_allclose(jac[..., m], fd, atol=1e-8)


class TestPose:
    def test_identity_pose_keeps_mesh(self, template):
        out = apply_pose(template, Pose6D.identity())
        np.testing.assert_array_equal(out.vertices, template.vertices)
        np.testing.assert_array_equal(out.triangles, template.triangles)

    def test_translation_shifts_vertices_only(self, template):
        t = np.array([0.1, -0.2, 0.3])
        out = apply_pose(template, Pose6D.identity().compose(Pose6D.from_matrix(np.eye(3), t)))
        np.testing.assert_allclose(out.vertices, template.vertices + t, atol=1e-15)
        np.testing.assert_allclose(out.normals, template.normals, atol=1e-12)

    def test_random_pose_per_vertex_oracle(self, template, rng):
        rot = random_rotation(rng)
        t = rng.normal(size=3)
        out = apply_pose(template, Pose6D.from_matrix(rot, t))
        for v_in, v_out in zip(template.vertices, out.vertices):
            expected = [sum(rot[i, j] * v_in[j] for j in range(3)) + t[i] for i in range(3)]
            np.testing.assert_allclose(v_out, expected, atol=1e-12)

    def test_inverse_and_compose(self, rng):
        p = Pose6D.from_matrix(random_rotation(rng), rng.normal(size=3))
        q = p.compose(p.inverse())
        np.testing.assert_allclose(q.rotation, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(q.translation, 0, atol=1e-12)

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidParameterError):
            Pose6D([1, 0, 0, 0, 1, 0], [np.nan, 0, 0])


class TestIntersection:
    def test_plane_hit(self):
        hit = intersect_ray(Ray((0, 0, 1), (0, 0, -1)), SceneModel(None, Plane()))
        assert hit.part_id is Part.PLANE
        assert hit.distance == pytest.approx(1.0)
        np.testing.assert_allclose(hit.point, 0, atol=1e-15)

    def test_miss(self, template):
        scene = SceneModel.from_mesh(template, Plane())
        assert intersect_ray(Ray((0, 0, 1), (0, 0, 1)), scene) is None

    def test_object_occludes_plane(self, template):
        scene = SceneModel.from_mesh(template, Plane((0, 0, -1)))
        hit = intersect_ray(Ray((-0.02, -0.01, 1), (0, 0, -1)), scene)
        assert hit.part_id is Part.OBJECT
        assert hit.distance < 1.0

    def test_bvh_matches_brute_force(self, rng):
        # random triangle soup inside a 10 cm cube
        verts = rng.uniform(-0.05, 0.05, size=(300, 3))
        mesh = TriangleMesh(verts, rng.integers(0, 300, size=(200, 3)))
        origins = rng.uniform(-0.2, 0.2, size=(10_000, 3))
        targets = rng.uniform(-0.05, 0.05, size=(10_000, 3))
        dirs = targets - origins
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        hits = trace_rays(PlacedMesh(mesh), None, origins, dirs)
        tri, dist = intersect_brute_force(mesh, origins, dirs)
        assert np.array_equal(hits.part == Part.OBJECT, tri >= 0)
        both = tri >= 0
        np.testing.assert_allclose(hits.distance[both], dist[both], atol=1e-9)

    def test_placed_mesh_matches_world_mesh(self, template, rng):
        placed = PlacedMesh(template, random_rotation(rng), (0.1, 0.0, 0.05))
        origins = np.tile([0.1, 0.0, 0.5], (500, 1))
        dirs = np.c_[rng.uniform(-0.1, 0.1, (500, 2)), -np.ones(500)]
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        a = trace_rays(placed, None, origins, dirs)
        tri, dist = intersect_brute_force(placed.world_mesh, origins, dirs)
        hit = tri >= 0
        assert np.array_equal(a.part == Part.OBJECT, hit)
        np.testing.assert_allclose(a.distance[hit], dist[hit], atol=1e-9)


class TestSphere:
    def test_radius(self):
        m = tessellate_sphere(SphereOnPlane((0.1, 0.2, 0.1), 0.2, 3))
        np.testing.assert_allclose(np.linalg.norm(m.vertices - [0.1, 0.2, 0.1], axis=1), 0.1, atol=1e-10)

    def test_linear_in_diameter(self):
        c = np.array([0.0, 0.0, 0.3])
        a = tessellate_sphere(SphereOnPlane(c, 0.1))
        b = tessellate_sphere(SphereOnPlane(c, 0.2))
        np.testing.assert_allclose(b.vertices - c, 2 * (a.vertices - c), atol=1e-15)

    def test_area_converges(self):
        r = 0.1
        m = tessellate_sphere(SphereOnPlane((0, 0, r), 2 * r, 4))
        assert abs(m.surface_area / (4 * np.pi * r**2) - 1) < 0.02

    def test_invalid(self):
        with pytest.raises(InvalidParameterError):
            SphereOnPlane((0, 0, 0), -1.0)


class TestObj:
    def test_round_trip_and_scale(self, tmp_path):
        box = box_mesh((1.0, 2.0, 3.0))
        save_obj(box, tmp_path / "b.obj")
        m = load_obj(tmp_path / "b.obj", scale=1e-3)
        np.testing.assert_allclose(m.vertices, box.vertices * 1e-3)
        np.testing.assert_array_equal(m.triangles, box.triangles)

    def test_quads_and_other_directives(self, tmp_path):
        p = tmp_path / "q.obj"
        p.write_text("# quad\nmtllib x.mtl\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 4//1\n")
        m = load_obj(p)
        assert m.n_triangles == 2
        assert m.surface_area == pytest.approx(1.0)

    def test_malformed_line_reports_position(self, tmp_path):
        p = tmp_path / "bad.obj"
        p.write_text("v 0 0 0\nv 1 0 x\n")
        with pytest.raises(ConfigurationError, match="bad.obj:2"):
            load_obj(p)

    def test_box_normals_point_outward(self):
        box = box_mesh((1, 1, 1))
        centers = box.vertices[box.triangles].mean(axis=1)
        assert np.all(np.einsum("ij,ij->i", centers, box.normals) > 0)
