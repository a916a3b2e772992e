"""Deterministic geometry: medium shapes, closest-point queries, sphere sampling.

Points are plain ``float64`` arrays of shape ``(3,)``. Every query has a
numba kernel (prefixed ``_``) that the walk estimators call directly; the
public functions wrap those kernels for Python callers.
"""

from __future__ import annotations

import enum
import math
from collections import namedtuple
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from numba import njit

KIND_SPHERE = 0
KIND_BOX = 1

MediumArrays = namedtuple("MediumArrays", ["kind", "prim", "tris", "bbox"])


class GeometryError(ValueError):
    pass


def as_vec3(x) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(v)):
        raise GeometryError(f"non-finite point {v}")
    return v


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in as_vec3(self.center)))
        if not self.radius > 0:
            raise GeometryError(f"sphere radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class Box:
    min: tuple[float, float, float]
    max: tuple[float, float, float]

    def __post_init__(self):
        lo, hi = as_vec3(self.min), as_vec3(self.max)
        if not np.all(lo < hi):
            raise GeometryError(f"box min {lo} must be < max {hi} componentwise")
        object.__setattr__(self, "min", tuple(float(c) for c in lo))
        object.__setattr__(self, "max", tuple(float(c) for c in hi))


@dataclass(frozen=True, eq=False)
class TriangleSoup:
    """Closed triangle mesh queried by brute force (no acceleration)."""

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(t) == 0 or t.min() < 0 or t.max() >= len(v):
            raise GeometryError("triangle indices out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    def __eq__(self, other):
        return (
            isinstance(other, TriangleSoup)
            and np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.triangles, other.triangles)
        )

    def __hash__(self):
        return hash((self.vertices.tobytes(), self.triangles.tobytes()))


@dataclass(frozen=True)
class MediumShape:
    """Union of spheres and boxes, plus an optional triangle mesh."""

    primitives: tuple[Sphere | Box, ...] = ()
    mesh: TriangleSoup | None = None

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))
        if not self.primitives and self.mesh is None:
            raise GeometryError("medium needs at least one primitive")
        for p in self.primitives:
            if not isinstance(p, (Sphere, Box)):
                raise GeometryError(f"unsupported primitive {p!r}")

    @cached_property
    def arrays(self) -> MediumArrays:
        n = len(self.primitives)
        kind = np.zeros(n, dtype=np.int64)
        prim = np.zeros((n, 6), dtype=np.float64)
        lo = np.full(3, np.inf)
        hi = np.full(3, -np.inf)
        for i, p in enumerate(self.primitives):
            if isinstance(p, Sphere):
                kind[i] = KIND_SPHERE
                prim[i, :3] = p.center
                prim[i, 3] = p.radius
                lo = np.minimum(lo, np.asarray(p.center) - p.radius)
                hi = np.maximum(hi, np.asarray(p.center) + p.radius)
            else:
                kind[i] = KIND_BOX
                prim[i, :3] = p.min
                prim[i, 3:] = p.max
                lo = np.minimum(lo, p.min)
                hi = np.maximum(hi, p.max)
        if self.mesh is not None:
            tris = np.ascontiguousarray(self.mesh.vertices[self.mesh.triangles])
            lo = np.minimum(lo, self.mesh.vertices.min(axis=0))
            hi = np.maximum(hi, self.mesh.vertices.max(axis=0))
        else:
            tris = np.zeros((0, 3, 3), dtype=np.float64)
        return MediumArrays(kind, prim, tris, np.concatenate([lo, hi]))

    @property
    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        bb = self.arrays.bbox
        return bb[:3].copy(), bb[3:].copy()

    def contains(self, x) -> bool:
        x = as_vec3(x)
        return bool(_inside_medium(self.arrays, x[0], x[1], x[2]))

    def contains_many(self, pts: np.ndarray) -> np.ndarray:
        pts = np.ascontiguousarray(pts, dtype=np.float64).reshape(-1, 3)
        return _inside_medium_many(self.arrays, pts)

    def distance_to_boundary(self, x) -> float:
        return closest_point_on_medium(self, x).distance


class Provenance(enum.IntEnum):
    MEDIUM_BOUNDARY = 0
    STOCHASTIC_PARTICLE = 1
    MEMORY_PARTICLE = 2
    INSIDE_PARTICLE = 3


@dataclass(frozen=True)
class ClosestHit:
    point: np.ndarray
    distance: float
    provenance: Provenance
    center: np.ndarray | None = None
    index: int = -1

    @property
    def on_medium(self) -> bool:
        return self.provenance == Provenance.MEDIUM_BOUNDARY


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _closest_on_sphere(cx, cy, cz, r, x, y, z):
    vx, vy, vz = x - cx, y - cy, z - cz
    L = math.sqrt(vx * vx + vy * vy + vz * vz)
    if L == 0.0:
        return cx + r, cy, cz, r
    f = r / L
    return cx + vx * f, cy + vy * f, cz + vz * f, abs(L - r)


@njit(cache=True, nogil=True)
def _closest_on_box(lo, hi, x, y, z):
    p = (x, y, z)
    inside = True
    for a in range(3):
        if not (lo[a] < p[a] < hi[a]):
            inside = False
    if inside:
        best = np.inf
        axis = 0
        val = 0.0
        for a in range(3):
            d0 = p[a] - lo[a]
            d1 = hi[a] - p[a]
            if d0 < best:
                best, axis, val = d0, a, lo[a]
            if d1 < best:
                best, axis, val = d1, a, hi[a]
        qx, qy, qz = x, y, z
        if axis == 0:
            qx = val
        elif axis == 1:
            qy = val
        else:
            qz = val
        return qx, qy, qz, best
    qx = min(max(x, lo[0]), hi[0])
    qy = min(max(y, lo[1]), hi[1])
    qz = min(max(z, lo[2]), hi[2])
    d = math.sqrt((x - qx) ** 2 + (y - qy) ** 2 + (z - qz) ** 2)
    return qx, qy, qz, d


@njit(cache=True, nogil=True)
def _closest_on_triangle(a, b, c, p):
    # Ericson, Real-Time Collision Detection, 5.1.5
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = ab @ ap
    d2 = ac @ ap
    if d1 <= 0.0 and d2 <= 0.0:
        return a.copy()
    bp = p - b
    d3 = ab @ bp
    d4 = ac @ bp
    if d3 >= 0.0 and d4 <= d3:
        return b.copy()
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        return a + (d1 / (d1 - d3)) * ab
    cp = p - c
    d5 = ab @ cp
    d6 = ac @ cp
    if d6 >= 0.0 and d5 <= d6:
        return c.copy()
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        return a + (d2 / (d2 - d6)) * ac
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return b + w * (c - b)
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return a + ab * v + ac * w


@njit(cache=True, nogil=True)
def _closest_on_medium(med, x, y, z):
    """Nearest point over every primitive surface; first primitive wins ties."""
    best = np.inf
    bx = by = bz = 0.0
    for i in range(med.kind.shape[0]):
        pr = med.prim[i]
        if med.kind[i] == KIND_SPHERE:
            qx, qy, qz, d = _closest_on_sphere(pr[0], pr[1], pr[2], pr[3], x, y, z)
        else:
            qx, qy, qz, d = _closest_on_box(pr[:3], pr[3:], x, y, z)
        if d < best:
            best, bx, by, bz = d, qx, qy, qz
    if med.tris.shape[0] > 0:
        p = np.array((x, y, z))
        for t in range(med.tris.shape[0]):
            q = _closest_on_triangle(med.tris[t, 0], med.tris[t, 1], med.tris[t, 2], p)
            d = math.sqrt((q[0] - x) ** 2 + (q[1] - y) ** 2 + (q[2] - z) ** 2)
            if d < best:
                best, bx, by, bz = d, q[0], q[1], q[2]
    return bx, by, bz, best


@njit(cache=True, nogil=True)
def _winding_number(tris, x, y, z):
    # van Oosterom-Strackee solid angle sum
    total = 0.0
    for t in range(tris.shape[0]):
        ax, ay, az = tris[t, 0, 0] - x, tris[t, 0, 1] - y, tris[t, 0, 2] - z
        bx, by, bz = tris[t, 1, 0] - x, tris[t, 1, 1] - y, tris[t, 1, 2] - z
        cx, cy, cz = tris[t, 2, 0] - x, tris[t, 2, 1] - y, tris[t, 2, 2] - z
        la = math.sqrt(ax * ax + ay * ay + az * az)
        lb = math.sqrt(bx * bx + by * by + bz * bz)
        lc = math.sqrt(cx * cx + cy * cy + cz * cz)
        det = ax * (by * cz - bz * cy) - ay * (bx * cz - bz * cx) + az * (bx * cy - by * cx)
        den = (
            la * lb * lc
            + (ax * bx + ay * by + az * bz) * lc
            + (bx * cx + by * cy + bz * cz) * la
            + (cx * ax + cy * ay + cz * az) * lb
        )
        total += 2.0 * math.atan2(det, den)
    return total / (4.0 * math.pi)


@njit(cache=True, nogil=True)
def _inside_medium(med, x, y, z):
    for i in range(med.kind.shape[0]):
        pr = med.prim[i]
        if med.kind[i] == KIND_SPHERE:
            if (x - pr[0]) ** 2 + (y - pr[1]) ** 2 + (z - pr[2]) ** 2 < pr[3] * pr[3]:
                return True
        else:
            if pr[0] < x < pr[3] and pr[1] < y < pr[4] and pr[2] < z < pr[5]:
                return True
    if med.tris.shape[0] > 0:
        bb = med.bbox
        if bb[0] < x < bb[3] and bb[1] < y < bb[4] and bb[2] < z < bb[5]:
            if abs(_winding_number(med.tris, x, y, z)) > 0.5:
                return True
    return False


@njit(cache=True, nogil=True)
def _inside_medium_many(med, pts):
    out = np.empty(pts.shape[0], dtype=np.bool_)
    for i in range(pts.shape[0]):
        out[i] = _inside_medium(med, pts[i, 0], pts[i, 1], pts[i, 2])
    return out


@njit(cache=True, nogil=True)
def _orthonormal_basis(nx, ny, nz):
    # Duff et al. 2017, branchless ONB
    sign = 1.0 if nz >= 0.0 else -1.0
    a = -1.0 / (sign + nz)
    b = nx * ny * a
    return (
        1.0 + sign * nx * nx * a,
        sign * b,
        -sign * nx,
        b,
        sign + ny * ny * a,
        -ny,
    )


@njit(cache=True, nogil=True)
def _sample_sphere_dir(rng):
    z = 1.0 - 2.0 * rng.random()
    phi = 2.0 * math.pi * rng.random()
    r = math.sqrt(max(0.0, 1.0 - z * z))
    return r * math.cos(phi), r * math.sin(phi), z


@njit(cache=True, nogil=True)
def _sample_hemisphere_dir(rng, nx, ny, nz):
    z = 1.0 - rng.random()
    phi = 2.0 * math.pi * rng.random()
    r = math.sqrt(max(0.0, 1.0 - z * z))
    lx = r * math.cos(phi)
    ly = r * math.sin(phi)
    b1x, b1y, b1z, b2x, b2y, b2z = _orthonormal_basis(nx, ny, nz)
    return (
        lx * b1x + ly * b2x + z * nx,
        lx * b1y + ly * b2y + z * ny,
        lx * b1z + ly * b2z + z * nz,
    )


@njit(cache=True, nogil=True)
def _ray_sphere(ox, oy, oz, wx, wy, wz, cx, cy, cz, r, t_min, t_max):
    """Smallest root in (t_min, t_max]; -1.0 when there is none."""
    px, py, pz = ox - cx, oy - cy, oz - cz
    b = px * wx + py * wy + pz * wz
    c = px * px + py * py + pz * pz - r * r
    disc = b * b - c
    if disc < 0.0:
        return -1.0
    sq = math.sqrt(disc)
    t1 = -b - sq
    if t_min < t1 <= t_max:
        return t1
    t2 = -b + sq
    if t_min < t2 <= t_max:
        return t2
    return -1.0


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


def dir(x, y) -> np.ndarray:  # noqa: A001 - mirrors the math notation dir(x, y)
    """Unit vector pointing from ``x`` to ``y``."""
    d = as_vec3(y) - as_vec3(x)
    n = float(np.linalg.norm(d))
    if n == 0.0:
        raise GeometryError("degenerate direction: coincident points")
    return d / n


def closest_point_on_medium(shape: MediumShape, x) -> ClosestHit:
    x = as_vec3(x)
    px, py, pz, d = _closest_on_medium(shape.arrays, x[0], x[1], x[2])
    return ClosestHit(np.array([px, py, pz]), float(d), Provenance.MEDIUM_BOUNDARY)


def sample_direction(rng: np.random.Generator, hemisphere_axis=None) -> np.ndarray:
    """Uniform direction on the unit sphere, or on the hemisphere about an axis."""
    if hemisphere_axis is None:
        return np.array(_sample_sphere_dir(rng))
    a = as_vec3(hemisphere_axis)
    a = a / np.linalg.norm(a)
    return np.array(_sample_hemisphere_dir(rng, a[0], a[1], a[2]))


def first_ray_sphere_hit(origin, omega, center, radius: float, t_min: float = 0.0, t_max: float = np.inf):
    """First intersection ``(t, point)`` with a sphere for t in (t_min, t_max], else ``None``."""
    o, w, c = as_vec3(origin), as_vec3(omega), as_vec3(center)
    if not radius > 0:
        raise GeometryError("radius must be positive")
    if not 0.0 <= t_min < t_max:
        raise GeometryError("need 0 <= t_min < t_max")
    t = _ray_sphere(o[0], o[1], o[2], w[0], w[1], w[2], c[0], c[1], c[2], float(radius), float(t_min), float(t_max))
    if t < 0.0:
        return None
    return float(t), o + t * w


def box_medium(lo: Sequence[float], hi: Sequence[float]) -> MediumShape:
    return MediumShape((Box(tuple(lo), tuple(hi)),))


def ball_medium(center: Sequence[float] = (0.0, 0.0, 0.0), radius: float = 1.0) -> MediumShape:
    return MediumShape((Sphere(tuple(center), radius),))
