"""Walk estimators for Laplace problems in media perforated by random particles.

Every estimator has a numba walk kernel (``_*_walk``) that performs one walk
and returns its value together with bookkeeping. Python wrappers run single
walks with a caller-provided Generator; :func:`estimate` and
:func:`ensemble_average` run many walks with per-walk streams keyed by
``(seed, point, walk)`` so results do not depend on the thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from . import _rng
from .boundary import BoundaryFunction, _eval_bc, boundary_arrays
from .bvh import SphereBvh, _bvh_first_hit, _bvh_nearest
from .density import Constant, DensityField, _majorant
from .geometry import (
    MediumShape,
    _closest_on_medium,
    _ray_sphere,
    _sample_hemisphere_dir,
    _sample_sphere_dir,
    as_vec3,
)
from .memory import (
    PROV_INSIDE,
    PROV_MEDIUM,
    PROV_STOCHASTIC,
    Memory,
    MemoryMode,
    _closest_with_memory,
    _deterministic_candidate,
    _nearest_center,
    _push_ball,
    _push_center,
)
from .pbm import ACCEPTED, VIOLATION, ConditionalDensityView, MajorantViolation, ParticleConfiguration, _sample_center, sample_configuration

DIRICHLET = "dirichlet"
NEUMANN = "neumann"

OK = 0
MAJORANT_VIOLATED = 1

_INITIAL_CAPACITY = 16
_MAX_RETRIES = 16
_TMIN_FACTOR = 1e-6
_INSIDE_TOL = 1e-9


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PbmParams:
    density: DensityField
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ConfigError("particle radius must be positive")


@dataclass(frozen=True)
class Problem:
    """Laplace problem on a medium perforated by PBM particles.

    ``medium_bc`` is the Dirichlet data on the medium boundary (extended over
    the medium). ``particle_value`` is the Dirichlet value on particles and
    defaults to ``medium_bc``; it is ignored for zero-Neumann particles.
    """

    medium: MediumShape
    medium_bc: BoundaryFunction
    pbm: PbmParams
    particle_bc: str = DIRICHLET
    particle_value: BoundaryFunction | None = None

    def __post_init__(self):
        if self.particle_bc not in (DIRICHLET, NEUMANN):
            raise ConfigError(f"particle boundary condition must be {DIRICHLET!r} or {NEUMANN!r}")
        if self.pbm.density.medium != self.medium:
            raise ConfigError("density field is masked to a different medium")

    @property
    def s(self) -> float:
        return self.pbm.radius

    @property
    def density(self) -> DensityField:
        return self.pbm.density

    @cached_property
    def g_arrays(self):
        return boundary_arrays(self.medium_bc)

    @cached_property
    def h_arrays(self):
        return boundary_arrays(self.particle_value if self.particle_value is not None else self.medium_bc)

    def with_density(self, density: DensityField) -> "Problem":
        return replace(self, pbm=PbmParams(density, self.pbm.radius))


@dataclass(frozen=True)
class SolverConfig:
    eps: float = 1e-4
    max_steps: int = 10_000
    n_walks: int = 256
    seed: int = 0
    memory_mode: MemoryMode = field(default_factory=MemoryMode.full)
    r_min: float | None = None

    def __post_init__(self):
        if not self.eps > 0:
            raise ConfigError("eps must be positive")
        if self.max_steps < 1 or self.n_walks < 1:
            raise ConfigError("max_steps and n_walks must be positive")
        if self.r_min is not None and not self.r_min > 0:
            raise ConfigError("r_min must be positive")

    @property
    def star_clamp(self) -> float:
        return self.eps if self.r_min is None else self.r_min

    def check(self, s: float) -> None:
        if self.eps > s / 10:
            raise ConfigError(f"eps={self.eps} must be at most a tenth of the particle radius s={s}")


@dataclass(frozen=True)
class WalkStats:
    steps: int
    empty_ball_count: int
    sampled_particle_count: int
    truncated: bool = False


@dataclass(frozen=True)
class Estimate:
    mean: float
    variance_of_mean: float
    n_walks: int
    truncated_walk_count: int = 0

    @classmethod
    def from_values(cls, values: np.ndarray, truncated: int = 0) -> "Estimate":
        values = np.asarray(values, dtype=float)
        n = values.size
        if n == 0:
            return cls(math.nan, math.nan, 0, truncated)
        if values.min() == values.max():
            # identical walks: report the shared value without summation round-off
            return cls(float(values[0]), 0.0, n, truncated)
        mean = math.fsum(values) / n
        var = math.fsum((values - mean) ** 2) / (n - 1) / n
        return cls(mean, var, n, truncated)


class Accumulator:
    """Welford running mean/variance; ``merge`` combines partial results exactly (Chan et al.)."""

    __slots__ = ("n", "mean", "m2")

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0

    def add(self, v: float) -> None:
        self.n += 1
        d = v - self.mean
        self.mean += d / self.n
        self.m2 += d * (v - self.mean)

    def merge(self, other: "Accumulator") -> "Accumulator":
        out = Accumulator()
        out.n = self.n + other.n
        if out.n == 0:
            return out
        d = other.mean - self.mean
        out.mean = self.mean + d * other.n / out.n
        out.m2 = self.m2 + other.m2 + d * d * self.n * other.n / out.n
        return out

    def estimate(self, truncated: int = 0) -> Estimate:
        var = self.m2 / (self.n - 1) / self.n if self.n > 1 else 0.0
        return Estimate(self.mean, var, self.n, truncated)


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def laplace_kernel_ratio(R):
    # harmonic Green's function density over its normalising mass: identically one
    return 1.0


@njit(cache=True, nogil=True)
def _screened_weight(a):
    """a / sinh(a), the screened mean-value weight for sphere radius R and a = sqrt(sigma) R."""
    if a < 1e-4:
        return 1.0 - a * a / 6.0
    return a / math.sinh(a)


@njit(cache=True, nogil=True)
def _terminal(prov, g, h, med, x, y, z, mx, my, mz):
    if prov == PROV_MEDIUM:
        return _eval_bc(g, med, mx, my, mz)
    return _eval_bc(h, med, x, y, z)


@njit(cache=True, nogil=True)
def _wos_walk(rng, x, y, z, med, g, h, bvh, s, eps, max_steps):
    """WoS against the medium and an explicit particle configuration.

    Returns (value, steps, truncated).
    """
    j, dc = _bvh_nearest(bvh, x, y, z, -1)
    if j >= 0 and dc < s:
        return _eval_bc(h, med, x, y, z), 0, False
    steps = 0
    while True:
        mx, my, mz, d = _closest_on_medium(med, x, y, z)
        prov = PROV_MEDIUM
        j, dc = _bvh_nearest(bvh, x, y, z, -1)
        if j >= 0 and dc - s < d:
            d = dc - s
            prov = PROV_STOCHASTIC
        if d < eps:
            return _terminal(prov, g, h, med, x, y, z, mx, my, mz), steps, False
        if steps >= max_steps:
            return _terminal(prov, g, h, med, x, y, z, mx, my, mz), steps, True
        wx, wy, wz = _sample_sphere_dir(rng)
        x = x + d * wx
        y = y + d * wy
        z = z + d * wz
        steps += 1


@njit(cache=True, nogil=True)
def _screened_walk(rng, x, y, z, med, g, sigma, eps, max_steps):
    """WoS for the screened equation; returns (value, steps, truncated)."""
    root = math.sqrt(sigma)
    weight = 1.0
    steps = 0
    while True:
        mx, my, mz, d = _closest_on_medium(med, x, y, z)
        if d < eps:
            return weight * _eval_bc(g, med, mx, my, mz), steps, False
        if steps >= max_steps:
            return weight * _eval_bc(g, med, mx, my, mz), steps, True
        if sigma > 0.0:
            weight *= _screened_weight(root * d)
        wx, wy, wz = _sample_sphere_dir(rng)
        x = x + d * wx
        y = y + d * wy
        z = z + d * wz
        steps += 1


@njit(cache=True, nogil=True)
def _vwos_walk(rng, x, y, z, med, dens, g, h, s, eps, max_steps, cap_e, cap_p):
    """Volumetric WoS with walk memory.

    Returns (status, value, steps, |E|, |P|, truncated, diag) where diag holds
    (x, y, z, cx, cy, cz, density, majorant) when a majorant is violated.
    """
    ec = np.empty((_INITIAL_CAPACITY, 3))
    er = np.empty(_INITIAL_CAPACITY)
    pc = np.empty((_INITIAL_CAPACITY, 3))
    ne = 0
    npc = 0
    steps = 0
    diag = np.zeros(8)
    while True:
        d_det, prov, idx, px, py, pz, mx, my, mz = _deterministic_candidate(med, pc, npc, s, x, y, z)
        if d_det < eps:
            return OK, _terminal(prov, g, h, med, x, y, z, mx, my, mz), steps, ne, npc, False, diag
        if steps >= max_steps:
            return OK, _terminal(prov, g, h, med, x, y, z, mx, my, mz), steps, ne, npc, True, diag
        lam_bar = _majorant(dens, x, y, z, d_det + s)
        st, d, prov, idx, px, py, pz, cx, cy, cz, lam_c = _closest_with_memory(
            rng, x, y, z, lam_bar, dens, med, ec, er, ne, pc, npc, s, d_det, prov, idx, px, py, pz
        )
        if st == VIOLATION:
            diag[0], diag[1], diag[2], diag[3], diag[4], diag[5], diag[6], diag[7] = x, y, z, cx, cy, cz, lam_c, lam_bar
            return MAJORANT_VIOLATED, math.nan, steps, ne, npc, False, diag
        if d < eps:
            return OK, _terminal(prov, g, h, med, x, y, z, mx, my, mz), steps, ne, npc, False, diag
        ec, er, ne = _push_ball(ec, er, ne, cap_e, x, y, z, d)
        if prov == PROV_STOCHASTIC:
            pc, npc = _push_center(pc, npc, cap_p, cx, cy, cz)
        wx, wy, wz = _sample_sphere_dir(rng)
        x = x + d * wx
        y = y + d * wy
        z = z + d * wz
        steps += 1


@njit(cache=True, nogil=True)
def _star_radius(d_dirichlet, center_dist, s, r_min):
    if center_dist == np.inf:
        return d_dirichlet
    sil = math.sqrt(max(center_dist * center_dist - s * s, 0.0))
    return min(d_dirichlet, max(sil, r_min))


@njit(cache=True, nogil=True)
def _collect(rng, x, y, z, lam_bar, dens, med, ec, er, ne, s, limit, cubed, pc, npc, cap_p):
    """Pin every remaining center up to ``limit`` (center distance), resuming at ``cubed``."""
    while True:
        st, cx, cy, cz, cubed, lam_c = _sample_center(rng, x, y, z, lam_bar, dens, med, ec, er, ne, s, limit, cubed)
        if st == ACCEPTED:
            pc, npc = _push_center(pc, npc, cap_p, cx, cy, cz)
            continue
        return st, pc, npc, cx, cy, cz, lam_c


@njit(cache=True, nogil=True)
def _linear_first_hit(pc, npc, s, x, y, z, wx, wy, wz, t_min, t_max):
    best = t_max
    jb = -1
    for j in range(npc):
        t = _ray_sphere(x, y, z, wx, wy, wz, pc[j, 0], pc[j, 1], pc[j, 2], s, t_min, best)
        if t >= 0.0 and (jb < 0 or t < best):
            best = t
            jb = j
    return jb, best


@njit(cache=True, nogil=True)
def _step_direction(rng, on, x, y, z, ocx, ocy, ocz):
    if on:
        nx, ny, nz = x - ocx, y - ocy, z - ocz
        nn = math.sqrt(nx * nx + ny * ny + nz * nz)
        return _sample_hemisphere_dir(rng, nx / nn, ny / nn, nz / nn)
    return _sample_sphere_dir(rng)


@njit(cache=True, nogil=True)
def _vwost_walk(rng, x, y, z, med, dens, g, s, eps, max_steps, cap_e, cap_p, r_min):
    """Volumetric walk on stars for zero-Neumann particles.

    The start point is conditioned to be uncovered. Returns the same tuple as
    :func:`_vwos_walk`.
    """
    ec = np.empty((_INITIAL_CAPACITY, 3))
    er = np.empty(_INITIAL_CAPACITY)
    pc = np.empty((_INITIAL_CAPACITY, 3))
    ne = 0
    npc = 0
    steps = 0
    on = False
    ocx = ocy = ocz = 0.0
    diag = np.zeros(8)
    while True:
        mx, my, mz, d_dir = _closest_on_medium(med, x, y, z)
        if d_dir < eps:
            return OK, _eval_bc(g, med, mx, my, mz), steps, ne, npc, False, diag
        if steps >= max_steps:
            return OK, _eval_bc(g, med, mx, my, mz), steps, ne, npc, True, diag
        if steps == 0:
            # no center within s of the start point: a zero-radius empty ball at slot 0
            ec[0, 0], ec[0, 1], ec[0, 2] = x, y, z
            er[0] = 0.0
            ne_s = 1
        else:
            ne_s = ne
        jm, t_mem = _nearest_center(pc, npc, x, y, z, on, ocx, ocy, ocz)
        R = _star_radius(d_dir, t_mem, s, r_min)
        limit = R + s
        lam_bar = _majorant(dens, x, y, z, limit)
        st, cx, cy, cz, cubed, lam_c = _sample_center(rng, x, y, z, lam_bar, dens, med, ec, er, ne_s, s, limit, 0.0)
        if st == ACCEPTED:
            t1 = math.sqrt((cx - x) ** 2 + (cy - y) ** 2 + (cz - z) ** 2)
            pc, npc = _push_center(pc, npc, cap_p, cx, cy, cz)
            R = _star_radius(d_dir, min(t1, t_mem), s, r_min)
            st, pc, npc, cx, cy, cz, lam_c = _collect(
                rng, x, y, z, lam_bar, dens, med, ec, er, ne_s, s, R + s, cubed, pc, npc, cap_p
            )
        if st == VIOLATION:
            diag[0], diag[1], diag[2], diag[3], diag[4], diag[5], diag[6], diag[7] = x, y, z, cx, cy, cz, lam_c, lam_bar
            return MAJORANT_VIOLATED, math.nan, steps, ne, npc, False, diag
        ec, er, ne = _push_ball(ec, er, ne, cap_e, x, y, z, R)

        t_min = _TMIN_FACTOR * s if on else 0.0
        j = -1
        wx = wy = wz = nx = ny = nz = 0.0
        for attempt in range(_MAX_RETRIES + 1):
            wx, wy, wz = _step_direction(rng, on, x, y, z, ocx, ocy, ocz)
            j, t = _linear_first_hit(pc, npc, s, x, y, z, wx, wy, wz, t_min, R)
            if j < 0:
                break
            nx, ny, nz = x + t * wx, y + t * wy, z + t * wz
            k, dk = _nearest_center(pc, npc, nx, ny, nz, True, pc[j, 0], pc[j, 1], pc[j, 2])
            if k < 0 or dk >= s * (1.0 - _INSIDE_TOL):
                break
        if j < 0:
            x = x + R * wx
            y = y + R * wy
            z = z + R * wz
            on = False
        else:
            ocx, ocy, ocz = pc[j, 0], pc[j, 1], pc[j, 2]
            x, y, z = nx, ny, nz
            on = True
        steps += 1


@njit(cache=True, nogil=True)
def _wost_walk(rng, x, y, z, med, g, bvh, s, eps, max_steps, r_min):
    """Walk on stars against an explicit configuration of zero-Neumann spheres.

    Returns (value, steps, truncated).
    """
    steps = 0
    on = -1
    while True:
        mx, my, mz, d_dir = _closest_on_medium(med, x, y, z)
        if d_dir < eps:
            return _eval_bc(g, med, mx, my, mz), steps, False
        if steps >= max_steps:
            return _eval_bc(g, med, mx, my, mz), steps, True
        jn, dn = _bvh_nearest(bvh, x, y, z, on)
        R = _star_radius(d_dir, dn, s, r_min)
        ocx = ocy = ocz = 0.0
        if on >= 0:
            k = bvh.slot[on]
            ocx, ocy, ocz = bvh.centers[k, 0], bvh.centers[k, 1], bvh.centers[k, 2]
        t_min = _TMIN_FACTOR * s if on >= 0 else 0.0
        j = -1
        wx = wy = wz = nx = ny = nz = 0.0
        for attempt in range(_MAX_RETRIES + 1):
            wx, wy, wz = _step_direction(rng, on >= 0, x, y, z, ocx, ocy, ocz)
            j, t = _bvh_first_hit(bvh, x, y, z, wx, wy, wz, t_min, R)
            if j < 0:
                break
            nx, ny, nz = x + t * wx, y + t * wy, z + t * wz
            k, dk = _bvh_nearest(bvh, nx, ny, nz, j)
            if k < 0 or dk >= s * (1.0 - _INSIDE_TOL):
                break
        if j < 0:
            x = x + R * wx
            y = y + R * wy
            z = z + R * wz
            on = -1
        else:
            x, y, z = nx, ny, nz
            on = j
        steps += 1


# ---------------------------------------------------------------------------
# single-walk Python API
# ---------------------------------------------------------------------------

_EMPTY_BVH_CACHE: dict[float, SphereBvh] = {}


def _empty_bvh(s: float) -> SphereBvh:
    b = _EMPTY_BVH_CACHE.get(s)
    if b is None:
        b = _EMPTY_BVH_CACHE[s] = SphereBvh(np.zeros((0, 3)), s)
    return b


def _bvh_for(config: ParticleConfiguration | SphereBvh | None, s: float) -> SphereBvh:
    if config is None:
        return _empty_bvh(s)
    if isinstance(config, SphereBvh):
        return config
    if abs(config.radius - s) > 1e-15 * max(1.0, s):
        raise ConfigError("configuration radius differs from the problem's particle radius")
    return SphereBvh.from_configuration(config)


def _raise_violation(diag):
    raise MajorantViolation(diag[:3], diag[3:6], diag[6], diag[7])


def _require(problem: Problem, bc: str, method: str) -> None:
    if problem.particle_bc != bc:
        raise ConfigError(f"{method} needs {bc} particles, problem has {problem.particle_bc}")


def wos_estimate(problem: Problem, config, x, cfg: SolverConfig, rng: np.random.Generator):
    """One WoS walk against the medium and an explicit configuration (or none)."""
    _require(problem, DIRICHLET, "wos")
    x = as_vec3(x)
    bvh = _bvh_for(config, problem.s)
    v, steps, trunc = _wos_walk(
        rng, x[0], x[1], x[2], problem.medium.arrays, problem.g_arrays, problem.h_arrays,
        bvh.arrays, problem.s, cfg.eps, cfg.max_steps,
    )
    return float(v), WalkStats(int(steps), 0, 0, bool(trunc))


def vwos_estimate(problem: Problem, x, cfg: SolverConfig, rng: np.random.Generator):
    _require(problem, DIRICHLET, "vwos")
    x = as_vec3(x)
    ce, cp = cfg.memory_mode.caps
    st, v, steps, ne, npc, trunc, diag = _vwos_walk(
        rng, x[0], x[1], x[2], problem.medium.arrays, problem.density.arrays, problem.g_arrays, problem.h_arrays,
        problem.s, cfg.eps, cfg.max_steps, ce, cp,
    )
    if st != OK:
        _raise_violation(diag)
    return float(v), WalkStats(int(steps), int(ne), int(npc), bool(trunc))


def vwost_estimate(problem: Problem, x, cfg: SolverConfig, rng: np.random.Generator):
    _require(problem, NEUMANN, "vwost")
    x = as_vec3(x)
    ce, cp = cfg.memory_mode.caps
    st, v, steps, ne, npc, trunc, diag = _vwost_walk(
        rng, x[0], x[1], x[2], problem.medium.arrays, problem.density.arrays, problem.g_arrays,
        problem.s, cfg.eps, cfg.max_steps, ce, cp, cfg.star_clamp,
    )
    if st != OK:
        _raise_violation(diag)
    return float(v), WalkStats(int(steps), int(ne), int(npc), bool(trunc))


def wost_estimate(problem: Problem, config, x, cfg: SolverConfig, rng: np.random.Generator):
    """One WoSt walk against an explicit configuration of zero-Neumann particles."""
    _require(problem, NEUMANN, "wost")
    x = as_vec3(x)
    bvh = _bvh_for(config, problem.s)
    if bvh.covers(x):
        raise ConfigError("start point lies inside a particle")
    v, steps, trunc = _wost_walk(
        rng, x[0], x[1], x[2], problem.medium.arrays, problem.g_arrays, bvh.arrays,
        problem.s, cfg.eps, cfg.max_steps, cfg.star_clamp,
    )
    return float(v), WalkStats(int(steps), 0, 0, bool(trunc))


def screening_coefficient(problem: Problem) -> float:
    v = problem.density.variant
    if not isinstance(v, Constant):
        raise ConfigError("homogenization needs a constant density")
    return 4.0 * math.pi * v.value * problem.s


def homogenized_estimate(problem: Problem, x, cfg: SolverConfig, rng: np.random.Generator):
    x = as_vec3(x)
    v, steps, trunc = _screened_walk(
        rng, x[0], x[1], x[2], problem.medium.arrays, problem.g_arrays, screening_coefficient(problem),
        cfg.eps, cfg.max_steps,
    )
    return float(v), WalkStats(int(steps), 0, 0, bool(trunc))


def silhouette_radius(x, center, s: float) -> float:
    d = float(np.linalg.norm(as_vec3(x) - as_vec3(center)))
    if not d > s:
        raise ValueError("point lies inside the particle")
    return math.sqrt(d * d - s * s)


def collect_star_particles(x, r_bar: float, field, lam_bar: float, s: float, memory: Memory, rng: np.random.Generator):
    """Pin every center within ``r_bar + s`` of x, conditioned on the memory's empty balls."""
    if not r_bar > 0:
        raise ValueError("r_bar must be positive")
    x = as_vec3(x)
    base = field.base if isinstance(field, ConditionalDensityView) else field
    before = memory._np
    st, memory._pc, memory._np, cx, cy, cz, lam_c = _collect(
        rng, x[0], x[1], x[2], float(lam_bar), base.arrays, base.medium.arrays,
        memory._ec, memory._er, memory._ne, float(s), float(r_bar) + s, 0.0,
        memory._pc, memory._np, memory.mode.caps[1],
    )
    if st == VIOLATION:
        raise MajorantViolation(x, (cx, cy, cz), lam_c, lam_bar)
    added = max(0, memory._np - before)
    return [memory._pc[i].copy() for i in range(memory._np - added, memory._np)]


# ---------------------------------------------------------------------------
# many walks
# ---------------------------------------------------------------------------


@dataclass
class PointResult:
    estimate: Estimate
    steps: np.ndarray
    empty: np.ndarray
    particles: np.ndarray

    @property
    def mean_walk_length(self) -> float:
        return float(self.steps.mean()) if self.steps.size else math.nan


METHODS = ("wos", "vwos", "wost", "vwost", "homogenized")


def _walk_fn(problem: Problem, method: str, cfg: SolverConfig, bvh: SphereBvh | None):
    med, g, h, s = problem.medium.arrays, problem.g_arrays, problem.h_arrays, problem.s
    eps, ms = cfg.eps, cfg.max_steps
    ce, cp = cfg.memory_mode.caps
    if method == "wos":
        b = (bvh or _empty_bvh(s)).arrays

        def run(rng, x):
            v, k, t = _wos_walk(rng, x[0], x[1], x[2], med, g, h, b, s, eps, ms)
            return OK, v, k, 0, 0, t, None
    elif method == "wost":
        b = (bvh or _empty_bvh(s)).arrays
        rmin = cfg.star_clamp

        def run(rng, x):
            v, k, t = _wost_walk(rng, x[0], x[1], x[2], med, g, b, s, eps, ms, rmin)
            return OK, v, k, 0, 0, t, None
    elif method == "vwos":
        dens = problem.density.arrays

        def run(rng, x):
            return _vwos_walk(rng, x[0], x[1], x[2], med, dens, g, h, s, eps, ms, ce, cp)
    elif method == "vwost":
        dens = problem.density.arrays
        rmin = cfg.star_clamp

        def run(rng, x):
            return _vwost_walk(rng, x[0], x[1], x[2], med, dens, g, s, eps, ms, ce, cp, rmin)
    elif method == "homogenized":
        sigma = screening_coefficient(problem)

        def run(rng, x):
            v, k, t = _screened_walk(rng, x[0], x[1], x[2], med, g, sigma, eps, ms)
            return OK, v, k, 0, 0, t, None
    else:
        raise ConfigError(f"unknown method {method!r}")
    return run


def _check_method(problem: Problem, method: str) -> None:
    if method in ("wos", "vwos"):
        _require(problem, DIRICHLET, method)
    elif method in ("wost", "vwost"):
        _require(problem, NEUMANN, method)


def _run_point(run, x, seed: int, point: int, walk_ids: Iterable[int]):
    vals, steps, ne, npc = [], [], [], []
    truncated = 0
    for w in walk_ids:
        st, v, k, e, p, t, diag = run(_rng.walk_stream(seed, point, w), x)
        if st != OK:
            _raise_violation(diag)
        vals.append(v)
        steps.append(k)
        ne.append(e)
        npc.append(p)
        truncated += bool(t)
    return np.array(vals), np.array(steps, dtype=np.int64), np.array(ne, dtype=np.int64), np.array(npc, dtype=np.int64), truncated


def _map_points(fn, n: int, threads: int):
    if threads <= 1 or n <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, range(n)))


def estimate(
    problem: Problem,
    method: str,
    points: Sequence,
    cfg: SolverConfig,
    threads: int = 1,
    configuration: ParticleConfiguration | None = None,
    point_ids: Sequence[int] | None = None,
) -> list[PointResult]:
    """Run ``cfg.n_walks`` walks of ``method`` at every point.

    ``configuration`` is the explicit particle set used by wos/wost. Walk w at
    point i uses the stream ``(cfg.seed, point_ids[i], w)``.
    """
    _check_method(problem, method)
    cfg.check(problem.s)
    pts = [as_vec3(p) for p in points]
    ids = list(range(len(pts))) if point_ids is None else list(point_ids)
    bvh = _bvh_for(configuration, problem.s) if method in ("wos", "wost") else None
    run = _walk_fn(problem, method, cfg, bvh)

    def one(i):
        if method == "wost" and bvh.covers(pts[i]):
            raise ConfigError(f"point {ids[i]} lies inside a particle of the configuration")
        vals, steps, ne, npc, trunc = _run_point(run, pts[i], cfg.seed, ids[i], range(cfg.n_walks))
        return PointResult(Estimate.from_values(vals, trunc), steps, ne, npc)

    return _map_points(one, len(pts), threads)


@dataclass
class EnsembleResult:
    estimates: list[Estimate]
    configs_used: np.ndarray
    particle_counts: np.ndarray
    config_means: np.ndarray
    steps: list[np.ndarray] = field(default_factory=list)


def ensemble_average(
    problem: Problem,
    points: Sequence,
    S: int,
    walks_per_config: int,
    cfg: SolverConfig,
    threads: int = 1,
    point_ids: Sequence[int] | None = None,
) -> EnsembleResult:
    """Average WoS (Dirichlet) or WoSt (Neumann) over S sampled configurations.

    Configurations are shared by all points. Configuration c comes from the
    stream ``(seed, CONFIG_TAG, c)``; its walks at point i use walk ids
    ``c * walks_per_config + w``, so S = 1 reproduces :func:`estimate` on
    configuration 0. For Neumann particles a configuration that covers a point
    is skipped at that point.
    """
    if S < 1 or walks_per_config < 1:
        raise ConfigError("S and walks_per_config must be positive")
    cfg.check(problem.s)
    method = "wos" if problem.particle_bc == DIRICHLET else "wost"
    pts = [as_vec3(p) for p in points]
    ids = list(range(len(pts))) if point_ids is None else list(point_ids)
    means = np.full((S, len(pts)), np.nan)
    walk_vals: list[list[np.ndarray]] = [[] for _ in pts]
    walk_steps: list[list[np.ndarray]] = [[] for _ in pts]
    truncated = np.zeros(len(pts), dtype=np.int64)
    counts = np.zeros(S, dtype=np.int64)
    for c in range(S):
        config = sample_configuration(problem.medium, problem.density, problem.s, _rng.config_stream(cfg.seed, c))
        counts[c] = len(config)
        bvh = SphereBvh.from_configuration(config)
        run = _walk_fn(problem, method, cfg, bvh)

        def one(i):
            if method == "wost" and bvh.covers(pts[i]):
                return None
            walks = range(c * walks_per_config, (c + 1) * walks_per_config)
            return _run_point(run, pts[i], cfg.seed, ids[i], walks)

        for i, r in enumerate(_map_points(one, len(pts), threads)):
            if r is None:
                continue
            vals, steps, _, _, trunc = r
            means[c, i] = vals.mean()
            walk_vals[i].append(vals)
            walk_steps[i].append(steps)
            truncated[i] += trunc
    ests = []
    used = np.sum(~np.isnan(means), axis=0)
    for i in range(len(pts)):
        m = means[~np.isnan(means[:, i]), i]
        if m.size >= 2:
            ests.append(Estimate(float(m.mean()), float(m.var(ddof=1)) / m.size, int(m.size * walks_per_config), int(truncated[i])))
        elif m.size == 1:
            # a single configuration: only the walk-level spread is observable
            ests.append(Estimate.from_values(walk_vals[i][0], int(truncated[i])))
        else:
            ests.append(Estimate(math.nan, math.nan, 0, int(truncated[i])))
    steps_out = [np.concatenate(s) if s else np.zeros(0, dtype=np.int64) for s in walk_steps]
    return EnsembleResult(ests, used, counts, means, steps_out)
