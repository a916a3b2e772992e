from __future__ import annotations

import math

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from volwalk.geometry import (
    Box,
    GeometryError,
    MediumShape,
    Provenance,
    Sphere,
    TriangleSoup,
    ball_medium,
    box_medium,
    closest_point_on_medium,
    dir,
    first_ray_sphere_hit,
    sample_direction,
)

coord = st.floats(-2.0, 2.0, allow_nan=False)
vec3 = st.tuples(coord, coord, coord)


def cube_mesh(h: float = 1.0) -> TriangleSoup:
    v = np.array([[x, y, z] for x in (-h, h) for y in (-h, h) for z in (-h, h)])
    # outward-oriented faces of the cube, two triangles each
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    tris = []
    for a, b, c, d in quads:
        tris += [(a, b, c), (a, c, d)]
    return TriangleSoup(v, np.array(tris))


class TestDir:
    @pytest.mark.parametrize(
        "x, y, expected",
        [
            ((0, 0, 0), (2, 0, 0), (1, 0, 0)),
            ((1, 1, 1), (1, 1, 3), (0, 0, 1)),
            ((0, 0, 0), (1, 1, 0), (math.sqrt(2) / 2, math.sqrt(2) / 2, 0)),
        ],
    )
    def test_examples(self, x, y, expected):
        npt.assert_allclose(dir(x, y), expected, atol=1e-15)

    def test_coincident_points_rejected(self):
        with pytest.raises(GeometryError):
            dir((1, 2, 3), (1, 2, 3))

    @given(vec3, vec3)
    def test_unit_length(self, x, y):
        if np.linalg.norm(np.subtract(y, x)) < 1e-9:
            return
        assert abs(np.linalg.norm(dir(x, y)) - 1.0) < 1e-12


class TestClosestPointOnMedium:
    def test_unit_sphere(self):
        h = closest_point_on_medium(ball_medium(), (0.5, 0, 0))
        npt.assert_allclose(h.point, (1, 0, 0), atol=1e-15)
        assert h.distance == pytest.approx(0.5)
        assert h.provenance == Provenance.MEDIUM_BOUNDARY

    def test_box_face(self):
        h = closest_point_on_medium(box_medium((-1, -1, -1), (1, 1, 1)), (0.9, 0, 0))
        npt.assert_allclose(h.point, (1, 0, 0), atol=1e-15)
        assert h.distance == pytest.approx(0.1)

    def test_union_of_spheres(self):
        m = MediumShape((Sphere((0, 0, 0), 1.0), Sphere((3, 0, 0), 1.0)))
        h = closest_point_on_medium(m, (1.4, 0, 0))
        npt.assert_allclose(h.point, (1, 0, 0), atol=1e-15)
        assert h.distance == pytest.approx(0.4)

    def test_mesh_cube_matches_box(self):
        mesh = MediumShape(mesh=cube_mesh())
        box = box_medium((-1, -1, -1), (1, 1, 1))
        rng = np.random.default_rng(0)
        for x in rng.uniform(-0.95, 0.95, (50, 3)):
            assert closest_point_on_medium(mesh, x).distance == pytest.approx(closest_point_on_medium(box, x).distance, abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(vec3)
    def test_sphere_distance_is_radial(self, x):
        m = ball_medium(radius=1.5)
        h = closest_point_on_medium(m, x)
        assert h.distance == pytest.approx(abs(1.5 - np.linalg.norm(x)), abs=1e-12)
        assert np.linalg.norm(h.point) == pytest.approx(1.5, abs=1e-12) or np.linalg.norm(x) == 0


class TestContainment:
    def test_ball(self):
        m = ball_medium()
        assert m.contains((0.5, 0, 0))
        assert not m.contains((1.5, 0, 0))

    def test_union(self):
        m = MediumShape((Box((-1, -1, -1), (0, 1, 1)), Sphere((0.5, 0, 0), 0.6)))
        assert m.contains((-0.5, 0, 0)) and m.contains((0.9, 0, 0))
        assert not m.contains((1.2, 0, 0))

    def test_mesh_winding_number(self):
        m = MediumShape(mesh=cube_mesh())
        npt.assert_array_equal(m.contains_many(np.array([[0, 0, 0], [0.9, -0.9, 0.5], [1.1, 0, 0], [0, 0, -3]])), [True, True, False, False])

    def test_bounding_box(self):
        m = MediumShape((Sphere((1, 0, 0), 0.5), Box((-1, -2, -3), (0, 0, 0))))
        lo, hi = m.bounding_box
        npt.assert_allclose(lo, (-1, -2, -3))
        npt.assert_allclose(hi, (1.5, 0.5, 0.5))

    def test_empty_medium_rejected(self):
        with pytest.raises(GeometryError):
            MediumShape(())

    def test_bad_primitives_rejected(self):
        with pytest.raises(GeometryError):
            Sphere((0, 0, 0), -1.0)
        with pytest.raises(GeometryError):
            Box((0, 0, 0), (0, 1, 1))


class TestSampleDirection:
    def test_unit_norm(self):
        rng = np.random.default_rng(1)
        d = np.array([sample_direction(rng) for _ in range(1000)])
        npt.assert_allclose(np.linalg.norm(d, axis=1), 1.0, atol=1e-12)

    @pytest.mark.slow
    def test_component_means(self):
        rng = np.random.default_rng(2)
        n = 10**6
        d = np.array([sample_direction(rng) for _ in range(n)])
        sigma = 1.0 / math.sqrt(3 * n)
        assert np.all(np.abs(d.mean(axis=0)) < 4 * sigma)

    def test_component_means_small(self):
        rng = np.random.default_rng(3)
        n = 20_000
        d = np.array([sample_direction(rng) for _ in range(n)])
        assert np.all(np.abs(d.mean(axis=0)) < 4.0 / math.sqrt(3 * n))

    @pytest.mark.parametrize("axis", [(0, 0, 1), (1, 0, 0), (0.3, -0.4, 0.866)])
    def test_hemisphere(self, axis):
        rng = np.random.default_rng(4)
        a = np.asarray(axis) / np.linalg.norm(axis)
        d = np.array([sample_direction(rng, axis) for _ in range(2000)])
        assert np.all(d @ a >= 0)
        # uniform on the hemisphere: mean cosine is 1/2
        assert abs((d @ a).mean() - 0.5) < 4 * math.sqrt(1 / 12 / 2000)


class TestFirstRaySphereHit:
    def test_collinear(self):
        t, p = first_ray_sphere_hit((0, 0, 0), (1, 0, 0), (2, 0, 0), 0.5)
        assert t == pytest.approx(1.5)
        npt.assert_allclose(p, (1.5, 0, 0))

    def test_miss(self):
        assert first_ray_sphere_hit((0, 0, 0), (0, 1, 0), (2, 0, 0), 0.5) is None

    def test_from_surface_inward(self):
        r = 0.5
        c = np.array([2.0, 0, 0])
        o = c + r * np.array([0, 0, 1.0])
        w = np.array([0.6, 0, -0.8])
        n = (o - c) / r
        t, _ = first_ray_sphere_hit(o, w, c, r, t_min=1e-6 * r)
        assert t == pytest.approx(2 * r * -(w @ n))

    def test_t_max_excludes(self):
        assert first_ray_sphere_hit((0, 0, 0), (1, 0, 0), (2, 0, 0), 0.5, t_max=1.0) is None

    def test_inside_returns_exit(self):
        t, _ = first_ray_sphere_hit((0, 0, 0), (1, 0, 0), (0, 0, 0), 1.0)
        assert t == pytest.approx(1.0)


class TestInvariants:
    def test_closest_point_on_surface(self):
        m = MediumShape((Sphere((0, 0, 0), 1.0), Box((0.5, -0.5, -0.5), (1.8, 0.5, 0.5))))
        rng = np.random.default_rng(20)
        for x in rng.uniform(-2, 2, (500, 3)):
            p = closest_point_on_medium(m, x).point
            f_sphere = abs(np.linalg.norm(p) - 1.0)
            q = np.abs(p - (1.15, 0, 0)) - (0.65, 0.5, 0.5)
            f_box = abs(np.max(q)) if np.all(q <= 1e-12) else np.linalg.norm(np.maximum(q, 0))
            assert min(f_sphere, f_box) < 1e-7

    def test_distance_bounded_by_surface_probes(self):
        m = MediumShape((Sphere((0, 0, 0), 1.0), Sphere((0.8, 0.3, 0), 0.6)))
        rng = np.random.default_rng(21)
        d = rng.normal(size=(10_000, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        probes = np.concatenate([d[:5000], (0.8, 0.3, 0) + 0.6 * d[5000:]])
        # keep probes that lie on the union's boundary
        on_boundary = np.array([closest_point_on_medium(m, p).distance < 1e-9 for p in probes])
        probes = probes[on_boundary]
        for x in rng.uniform(-0.5, 0.5, (20, 3)):
            h = closest_point_on_medium(m, x)
            assert h.distance <= np.min(np.linalg.norm(probes - x, axis=1)) + 1e-12

    def test_direction_octants(self):
        from volwalk.harness.stats import octant_chi_square

        rng = np.random.default_rng(22)
        d = np.array([sample_direction(rng) for _ in range(100_000)])
        assert octant_chi_square(d).passed

    @settings(max_examples=100)
    @given(vec3, vec3, vec3, st.floats(0.05, 2.0))
    def test_ray_hit_on_sphere(self, o, w, c, r):
        w = np.asarray(w)
        if np.linalg.norm(w) < 1e-3:
            return
        w = w / np.linalg.norm(w)
        hit = first_ray_sphere_hit(o, w, c, r)
        if hit is not None:
            t, p = hit
            assert t >= 0
            assert abs(np.linalg.norm(p - np.asarray(c)) - r) < 1e-9 * max(1.0, r)
            npt.assert_allclose(p, np.asarray(o) + t * w, atol=1e-12)
