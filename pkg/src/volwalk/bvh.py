"""Bounding-volume hierarchy over the centers of equal-radius spheres."""

from __future__ import annotations

import math
from collections import namedtuple

import numpy as np
from numba import njit

from .geometry import _ray_sphere, as_vec3

LEAF_SIZE = 4

BvhArrays = namedtuple("BvhArrays", ["centers", "index", "slot", "lo", "hi", "left", "right", "start", "count", "radius"])


@njit(cache=True, nogil=True)
def _build(centers, leaf_size):
    n = centers.shape[0]
    perm = np.arange(n)
    m = max(1, 2 * (n // leaf_size + 1))
    lo = np.empty((m, 3))
    hi = np.empty((m, 3))
    left = np.full(m, -1, dtype=np.int64)
    right = np.full(m, -1, dtype=np.int64)
    start = np.zeros(m, dtype=np.int64)
    count = np.zeros(m, dtype=np.int64)
    if n == 0:
        return perm, lo[:0], hi[:0], left[:0], right[:0], start[:0], count[:0]
    stack = np.empty((m, 3), dtype=np.int64)
    sp = 0
    stack[sp] = (0, 0, n)
    sp += 1
    n_nodes = 1
    while sp > 0:
        sp -= 1
        node, a, b = stack[sp, 0], stack[sp, 1], stack[sp, 2]
        for k in range(3):
            lo[node, k] = np.inf
            hi[node, k] = -np.inf
        for i in range(a, b):
            for k in range(3):
                v = centers[perm[i], k]
                lo[node, k] = min(lo[node, k], v)
                hi[node, k] = max(hi[node, k], v)
        start[node] = a
        count[node] = b - a
        if b - a <= leaf_size:
            continue
        axis = 0
        ext = hi[node, 0] - lo[node, 0]
        for k in range(1, 3):
            if hi[node, k] - lo[node, k] > ext:
                ext = hi[node, k] - lo[node, k]
                axis = k
        seg = perm[a:b]
        order = np.argsort(centers[seg, axis], kind="mergesort")
        perm[a:b] = seg[order]
        mid = (a + b) // 2
        if n_nodes + 2 > lo.shape[0]:
            grow = 2 * lo.shape[0]
            lo2 = np.empty((grow, 3))
            hi2 = np.empty((grow, 3))
            lo2[:n_nodes] = lo[:n_nodes]
            hi2[:n_nodes] = hi[:n_nodes]
            lo, hi = lo2, hi2
            left2 = np.full(grow, -1, dtype=np.int64)
            right2 = np.full(grow, -1, dtype=np.int64)
            start2 = np.zeros(grow, dtype=np.int64)
            count2 = np.zeros(grow, dtype=np.int64)
            left2[:n_nodes] = left[:n_nodes]
            right2[:n_nodes] = right[:n_nodes]
            start2[:n_nodes] = start[:n_nodes]
            count2[:n_nodes] = count[:n_nodes]
            left, right, start, count = left2, right2, start2, count2
            stack2 = np.empty((grow, 3), dtype=np.int64)
            stack2[:sp] = stack[:sp]
            stack = stack2
        l_id = n_nodes
        r_id = n_nodes + 1
        n_nodes += 2
        left[node] = l_id
        right[node] = r_id
        stack[sp] = (l_id, a, mid)
        stack[sp + 1] = (r_id, mid, b)
        sp += 2
    return perm, lo[:n_nodes], hi[:n_nodes], left[:n_nodes], right[:n_nodes], start[:n_nodes], count[:n_nodes]


@njit(cache=True, nogil=True)
def _box_dist2(lo, hi, x, y, z):
    dx = max(lo[0] - x, 0.0, x - hi[0])
    dy = max(lo[1] - y, 0.0, y - hi[1])
    dz = max(lo[2] - z, 0.0, z - hi[2])
    return dx * dx + dy * dy + dz * dz


@njit(cache=True, nogil=True)
def _bvh_nearest(b, x, y, z, skip):
    """Original index and distance of the nearest center other than ``skip``; (-1, inf) if none."""
    if b.lo.shape[0] == 0:
        return -1, np.inf
    best = np.inf
    jb = -1
    stack = np.empty(64, dtype=np.int64)
    sp = 0
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if _box_dist2(b.lo[node], b.hi[node], x, y, z) >= best:
            continue
        if b.left[node] < 0:
            for i in range(b.start[node], b.start[node] + b.count[node]):
                if b.index[i] == skip:
                    continue
                c = b.centers[i]
                d2 = (x - c[0]) ** 2 + (y - c[1]) ** 2 + (z - c[2]) ** 2
                if d2 < best:
                    best = d2
                    jb = b.index[i]
            continue
        l_id, r_id = b.left[node], b.right[node]
        dl = _box_dist2(b.lo[l_id], b.hi[l_id], x, y, z)
        dr = _box_dist2(b.lo[r_id], b.hi[r_id], x, y, z)
        # push the farther child first so the nearer one is visited next
        if dl < dr:
            stack[sp] = r_id
            stack[sp + 1] = l_id
        else:
            stack[sp] = l_id
            stack[sp + 1] = r_id
        sp += 2
    return jb, math.sqrt(best)


@njit(cache=True, nogil=True)
def _ray_box(lo, hi, pad, ox, oy, oz, wx, wy, wz, t0, t1):
    o = (ox, oy, oz)
    w = (wx, wy, wz)
    for k in range(3):
        a = lo[k] - pad
        bb = hi[k] + pad
        if w[k] == 0.0:
            if o[k] < a or o[k] > bb:
                return False
            continue
        inv = 1.0 / w[k]
        ta = (a - o[k]) * inv
        tb = (bb - o[k]) * inv
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
        if t0 > t1:
            return False
    return True


@njit(cache=True, nogil=True)
def _bvh_first_hit(b, ox, oy, oz, wx, wy, wz, t_min, t_max):
    """First sphere hit with t in (t_min, t_max]: (original index, t) or (-1, t_max)."""
    if b.lo.shape[0] == 0:
        return -1, t_max
    best = t_max
    jb = -1
    s = b.radius
    stack = np.empty(64, dtype=np.int64)
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if not _ray_box(b.lo[node], b.hi[node], s, ox, oy, oz, wx, wy, wz, t_min, best):
            continue
        if b.left[node] < 0:
            for i in range(b.start[node], b.start[node] + b.count[node]):
                c = b.centers[i]
                t = _ray_sphere(ox, oy, oz, wx, wy, wz, c[0], c[1], c[2], s, t_min, best)
                if t >= 0.0 and (jb < 0 or t < best):
                    best = t
                    jb = b.index[i]
            continue
        stack[sp] = b.left[node]
        stack[sp + 1] = b.right[node]
        sp += 2
    return jb, best


class SphereBvh:
    """Median-split BVH over sphere centers of a common radius."""

    def __init__(self, centers, radius: float, leaf_size: int = LEAF_SIZE):
        centers = np.ascontiguousarray(centers, dtype=np.float64).reshape(-1, 3)
        if not radius > 0:
            raise ValueError("radius must be positive")
        perm, lo, hi, left, right, start, count = _build(centers, int(leaf_size))
        self.n = centers.shape[0]
        self.radius = float(radius)
        slot = np.empty_like(perm)
        slot[perm] = np.arange(self.n)
        self.arrays = BvhArrays(
            np.ascontiguousarray(centers[perm]), perm.astype(np.int64), slot.astype(np.int64), lo, hi, left, right, start, count, float(radius)
        )

    @classmethod
    def from_configuration(cls, config) -> "SphereBvh":
        return cls(config.centers, config.radius)

    def __len__(self):
        return self.n

    def nearest_center(self, x, exclude: int = -1) -> tuple[int, float]:
        x = as_vec3(x)
        j, d = _bvh_nearest(self.arrays, x[0], x[1], x[2], int(exclude))
        return int(j), float(d)

    def first_hit(self, origin, omega, t_min: float = 0.0, t_max: float = np.inf) -> tuple[int, float] | None:
        o, w = as_vec3(origin), as_vec3(omega)
        j, t = _bvh_first_hit(self.arrays, o[0], o[1], o[2], w[0], w[1], w[2], float(t_min), float(t_max))
        return None if j < 0 else (int(j), float(t))

    def covers(self, x) -> bool:
        j, d = self.nearest_center(x)
        return j >= 0 and d < self.radius
