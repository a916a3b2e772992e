"""Per-walk memory of empty balls and sampled particles, and sampling conditioned on it."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np
from numba import njit

from .density import DensityField, _majorant
from .geometry import ClosestHit, MediumShape, Provenance, _closest_on_medium, as_vec3
from .pbm import ACCEPTED, VIOLATION, ConditionalDensityView, MajorantViolation, _sample_center

PROV_MEDIUM = int(Provenance.MEDIUM_BOUNDARY)
PROV_STOCHASTIC = int(Provenance.STOCHASTIC_PARTICLE)
PROV_MEMORY = int(Provenance.MEMORY_PARTICLE)
PROV_INSIDE = int(Provenance.INSIDE_PARTICLE)

UNBOUNDED = -1
_INITIAL_CAPACITY = 16


@dataclass(frozen=True)
class MemoryMode:
    kind: str = "full"
    max_empty: int = 0
    max_particles: int = 0

    def __post_init__(self):
        if self.kind not in ("full", "finite", "memoryless"):
            raise ValueError(f"unknown memory mode {self.kind!r}")
        if self.kind == "finite" and not (self.max_empty > 0 and self.max_particles > 0):
            raise ValueError("finite memory needs positive caps")

    @classmethod
    def full(cls):
        return cls("full")

    @classmethod
    def finite(cls, max_empty: int, max_particles: int):
        return cls("finite", int(max_empty), int(max_particles))

    @classmethod
    def memoryless(cls):
        return cls("memoryless")

    @classmethod
    def parse(cls, text: str) -> "MemoryMode":
        text = text.strip().lower()
        if text in ("full", "memoryless"):
            return cls(text)
        m = re.fullmatch(r"finite:(\d+),(\d+)", text)
        if not m:
            raise ValueError(f"bad memory mode {text!r}; expected full, memoryless or finite:KE,KP")
        return cls.finite(int(m.group(1)), int(m.group(2)))

    def __str__(self):
        if self.kind == "finite":
            return f"finite:{self.max_empty},{self.max_particles}"
        return self.kind

    @property
    def caps(self) -> tuple[int, int]:
        """Capacities as used by the kernels: -1 means unbounded."""
        if self.kind == "full":
            return UNBOUNDED, UNBOUNDED
        if self.kind == "memoryless":
            return 0, 0
        return self.max_empty, self.max_particles


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _push_ball(ec, er, ne, cap, x, y, z, r):
    if cap == 0:
        return ec, er, ne
    if cap > 0 and ne >= cap:
        for i in range(ne - 1):
            ec[i, 0], ec[i, 1], ec[i, 2] = ec[i + 1, 0], ec[i + 1, 1], ec[i + 1, 2]
            er[i] = er[i + 1]
        ne -= 1
    if ne == ec.shape[0]:
        ec2 = np.empty((2 * ne + 1, 3))
        er2 = np.empty(2 * ne + 1)
        ec2[:ne] = ec[:ne]
        er2[:ne] = er[:ne]
        ec, er = ec2, er2
    ec[ne, 0], ec[ne, 1], ec[ne, 2] = x, y, z
    er[ne] = r
    return ec, er, ne + 1


@njit(cache=True, nogil=True)
def _push_center(pc, npc, cap, x, y, z):
    if cap == 0:
        return pc, npc
    if cap > 0 and npc >= cap:
        for i in range(npc - 1):
            pc[i, 0], pc[i, 1], pc[i, 2] = pc[i + 1, 0], pc[i + 1, 1], pc[i + 1, 2]
        npc -= 1
    if npc == pc.shape[0]:
        pc2 = np.empty((2 * npc + 1, 3))
        pc2[:npc] = pc[:npc]
        pc = pc2
    pc[npc, 0], pc[npc, 1], pc[npc, 2] = x, y, z
    return pc, npc + 1


@njit(cache=True, nogil=True)
def _nearest_center(pc, npc, x, y, z, skip, sx, sy, sz):
    """Index and distance of the nearest stored center, ignoring the one at (sx, sy, sz) if ``skip``."""
    best = np.inf
    jb = -1
    for j in range(npc):
        if skip and pc[j, 0] == sx and pc[j, 1] == sy and pc[j, 2] == sz:
            continue
        d2 = (x - pc[j, 0]) ** 2 + (y - pc[j, 1]) ** 2 + (z - pc[j, 2]) ** 2
        if d2 < best:
            best = d2
            jb = j
    return jb, math.sqrt(best)


@njit(cache=True, nogil=True)
def _deterministic_candidate(med, pc, npc, s, x, y, z):
    """Nearest of the medium boundary and the stored particles.

    Returns (distance, provenance, index, px, py, pz, mx, my, mz) where (m*) is
    always the closest medium-boundary point.
    """
    mx, my, mz, dm = _closest_on_medium(med, x, y, z)
    j, dc = _nearest_center(pc, npc, x, y, z, False, 0.0, 0.0, 0.0)
    if j >= 0 and dc - s < dm:
        if dc > 0.0:
            f = s / dc
            px = pc[j, 0] + (x - pc[j, 0]) * f
            py = pc[j, 1] + (y - pc[j, 1]) * f
            pz = pc[j, 2] + (z - pc[j, 2]) * f
        else:
            px, py, pz = pc[j, 0] + s, pc[j, 1], pc[j, 2]
        return dc - s, PROV_MEMORY, j, px, py, pz, mx, my, mz
    return dm, PROV_MEDIUM, -1, mx, my, mz, mx, my, mz


@njit(cache=True, nogil=True)
def _closest_with_memory(rng, x, y, z, lam_bar, dens, med, ec, er, ne, pc, npc, s, d_det, prov, idx, px, py, pz):
    """Compete a conditionally sampled particle against the deterministic candidate.

    Returns (status, distance, provenance, index, px, py, pz, cx, cy, cz, density_at_candidate).
    """
    st, cx, cy, cz, _, lam_c = _sample_center(rng, x, y, z, lam_bar, dens, med, ec, er, ne, s, d_det + s, 0.0)
    if st == VIOLATION:
        return st, 0.0, -1, -1, x, y, z, cx, cy, cz, lam_c
    if st == ACCEPTED:
        r = math.sqrt((cx - x) ** 2 + (cy - y) ** 2 + (cz - z) ** 2)
        if r < s:
            return st, 0.0, PROV_INSIDE, -1, x, y, z, cx, cy, cz, lam_c
        ds = r - s
        if ds < d_det:
            f = ds / r
            return st, ds, PROV_STOCHASTIC, -1, x + (cx - x) * f, y + (cy - y) * f, z + (cz - z) * f, cx, cy, cz, lam_c
    return st, d_det, prov, idx, px, py, pz, cx, cy, cz, lam_c


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


class Memory:
    """Empty balls E and sampled particle centers P of one walk."""

    def __init__(self, mode: MemoryMode | None = None):
        self.mode = mode or MemoryMode.full()
        self._ec = np.empty((_INITIAL_CAPACITY, 3))
        self._er = np.empty(_INITIAL_CAPACITY)
        self._ne = 0
        self._pc = np.empty((_INITIAL_CAPACITY, 3))
        self._np = 0

    @property
    def empty_balls(self) -> list[tuple[np.ndarray, float]]:
        return [(self._ec[i].copy(), float(self._er[i])) for i in range(self._ne)]

    @property
    def empty_centers(self) -> np.ndarray:
        return self._ec[: self._ne].copy()

    @property
    def empty_radii(self) -> np.ndarray:
        return self._er[: self._ne].copy()

    @property
    def particle_centers(self) -> np.ndarray:
        return self._pc[: self._np].copy()

    def __repr__(self):
        return f"Memory(mode={self.mode}, |E|={self._ne}, |P|={self._np})"

    def add_empty_ball(self, x, radius: float) -> None:
        x = as_vec3(x)
        self._ec, self._er, self._ne = _push_ball(self._ec, self._er, self._ne, self.mode.caps[0], x[0], x[1], x[2], float(radius))

    def add_particle(self, c) -> None:
        c = as_vec3(c)
        self._pc, self._np = _push_center(self._pc, self._np, self.mode.caps[1], c[0], c[1], c[2])

    def update(self, x, hit: ClosestHit, s: float) -> None:
        """Record the empty ball certified by ``hit``; pin a newly sampled particle."""
        if not hit.distance > 0:
            raise ValueError("update needs a hit at positive distance")
        x = as_vec3(x)
        self.add_empty_ball(x, hit.distance)
        if hit.provenance == Provenance.STOCHASTIC_PARTICLE:
            c = hit.center if hit.center is not None else hit.point + s * (hit.point - x) / hit.distance
            self.add_particle(c)

    def is_inside_dilated_empty(self, x, s: float) -> bool:
        x = as_vec3(x)
        for i in range(self._ne - 1, -1, -1):
            if np.linalg.norm(x - self._ec[i]) < self._er[i] + s:
                return True
        return False

    def closest_point_on_sampled_particles(self, x, s: float) -> ClosestHit | None:
        x = as_vec3(x)
        j, dc = _nearest_center(self._pc, self._np, x[0], x[1], x[2], False, 0.0, 0.0, 0.0)
        if j < 0:
            return None
        c = self._pc[j].copy()
        point = c + s * (x - c) / dc if dc > 0 else c + np.array([s, 0.0, 0.0])
        return ClosestHit(point, float(dc - s), Provenance.MEMORY_PARTICLE, center=c, index=int(j))

    def conditional_view(self, field: DensityField, s: float) -> ConditionalDensityView:
        return ConditionalDensityView(field, self.empty_centers, self.empty_radii, s)


def sample_closest_point_with_memory(
    x, lam_bar: float, field: DensityField, s: float, memory: Memory, medium: MediumShape, rng: np.random.Generator
) -> ClosestHit:
    """Closest boundary point given everything the walk has already observed.

    A non-positive distance means x is on or inside fixed geometry.
    """
    if field.medium != medium:
        raise ValueError("density field is masked to a different medium")
    x = as_vec3(x)
    m = memory
    d_det, prov, idx, px, py, pz, *_ = _deterministic_candidate(medium.arrays, m._pc, m._np, float(s), x[0], x[1], x[2])
    det = ClosestHit(
        np.array([px, py, pz]),
        float(d_det),
        Provenance(prov),
        center=m._pc[idx].copy() if idx >= 0 else None,
        index=int(idx),
    )
    if d_det <= 0:
        return det
    st, d, prov, idx, px, py, pz, cx, cy, cz, lam_c = _closest_with_memory(
        rng, x[0], x[1], x[2], float(lam_bar), field.arrays, medium.arrays,
        m._ec, m._er, m._ne, m._pc, m._np, float(s), d_det, prov, idx, px, py, pz,
    )
    if st == VIOLATION:
        raise MajorantViolation(x, (cx, cy, cz), lam_c, lam_bar)
    if prov == PROV_INSIDE:
        return ClosestHit(x.copy(), 0.0, Provenance.INSIDE_PARTICLE, center=np.array([cx, cy, cz]))
    if prov == PROV_STOCHASTIC:
        return ClosestHit(np.array([px, py, pz]), float(d), Provenance.STOCHASTIC_PARTICLE, center=np.array([cx, cy, cz]))
    return det


def majorant_for_step(field: DensityField, x, d_det: float, s: float) -> float:
    x = as_vec3(x)
    return float(_majorant(field.arrays, x[0], x[1], x[2], d_det + s))
