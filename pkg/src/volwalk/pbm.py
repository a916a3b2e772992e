"""Poisson Boolean model sampling and its analytic distributions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit

from .density import Constant, DensityField, _eval_density, ball_integral
from .geometry import MediumShape, _closest_on_medium, as_vec3

ACCEPTED = 0
BEYOND = 1
VIOLATION = 2

_FOUR_THIRDS_PI = 4.0 / 3.0 * math.pi

_NO_BALLS_C = np.zeros((0, 3))
_NO_BALLS_R = np.zeros(0)


class MajorantViolation(ValueError):
    def __init__(self, x, center, value, bound):
        self.x = np.asarray(x, dtype=float)
        self.center = np.asarray(center, dtype=float)
        self.value = float(value)
        self.bound = float(bound)
        super().__init__(
            f"majorant violated: at x={self.x.tolist()} candidate center c={self.center.tolist()} "
            f"has density {self.value!r} > majorant {self.bound!r}"
        )


@dataclass(frozen=True)
class Surface:
    point: np.ndarray
    center: np.ndarray


@dataclass(frozen=True)
class Inside:
    center: np.ndarray


@dataclass(frozen=True)
class BeyondStop:
    """No center within the searched radius (stop radius + s, or the whole medium)."""

    searched: float


@dataclass(frozen=True, eq=False)
class ParticleConfiguration:
    centers: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.ascontiguousarray(self.centers, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "centers", c)
        if not self.radius > 0:
            raise ValueError("particle radius must be positive")

    def __len__(self):
        return self.centers.shape[0]

    def covers(self, x) -> bool:
        if len(self) == 0:
            return False
        d2 = np.sum((self.centers - as_vec3(x)) ** 2, axis=1)
        return bool(d2.min() < self.radius**2)


@dataclass(frozen=True, eq=False)
class ConditionalDensityView:
    """Base density with the s-dilation of each excluded ball zeroed out."""

    base: DensityField
    centers: np.ndarray = field(default_factory=lambda: _NO_BALLS_C)
    radii: np.ndarray = field(default_factory=lambda: _NO_BALLS_R)
    s: float = 0.0

    def __post_init__(self):
        c = np.ascontiguousarray(self.centers, dtype=np.float64).reshape(-1, 3)
        r = np.ascontiguousarray(self.radii, dtype=np.float64).reshape(-1)
        if c.shape[0] != r.shape[0]:
            raise ValueError("centers and radii length mismatch")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "radii", r)

    @property
    def medium(self) -> MediumShape:
        return self.base.medium

    def __call__(self, x) -> float:
        return eval_conditional(self, x)


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _in_dilated(ec, er, ne, s, x, y, z):
    # newest records first: they are usually the nearest
    for i in range(ne - 1, -1, -1):
        rr = er[i] + s
        if (x - ec[i, 0]) ** 2 + (y - ec[i, 1]) ** 2 + (z - ec[i, 2]) ** 2 <= rr * rr:
            return True
    return False


@njit(cache=True, nogil=True)
def _eval_conditional(dens, med, ec, er, ne, s, x, y, z):
    if _in_dilated(ec, er, ne, s, x, y, z):
        return 0.0
    return _eval_density(dens, med, x, y, z)


@njit(cache=True, nogil=True)
def _far_distance(bbox, x, y, z):
    dx = max(abs(x - bbox[0]), abs(x - bbox[3]))
    dy = max(abs(y - bbox[1]), abs(y - bbox[4]))
    dz = max(abs(z - bbox[2]), abs(z - bbox[5]))
    return math.sqrt(dx * dx + dy * dy + dz * dz)


@njit(cache=True, nogil=True)
def _sample_center(rng, x, y, z, lam_bar, dens, med, ec, er, ne, s, limit, cubed):
    """Thinned radial search for the next particle center.

    ``cubed`` is the cubed radius reached so far, so a search can be resumed.
    Returns (status, cx, cy, cz, cubed, density_at_candidate).
    """
    if lam_bar <= 0.0:
        return BEYOND, 0.0, 0.0, 0.0, cubed, 0.0
    rate = _FOUR_THIRDS_PI * lam_bar
    while True:
        cubed += -math.log1p(-rng.random()) / rate
        r = cubed ** (1.0 / 3.0)
        if r > limit:
            return BEYOND, 0.0, 0.0, 0.0, cubed, 0.0
        cz_ = 1.0 - 2.0 * rng.random()
        phi = 2.0 * math.pi * rng.random()
        st = math.sqrt(max(0.0, 1.0 - cz_ * cz_))
        cx = x + r * st * math.cos(phi)
        cy = y + r * st * math.sin(phi)
        cz = z + r * cz_
        u = rng.random()
        lam_c = _eval_conditional(dens, med, ec, er, ne, s, cx, cy, cz)
        if lam_c > lam_bar:
            return VIOLATION, cx, cy, cz, cubed, lam_c
        if u * lam_bar < lam_c:
            return ACCEPTED, cx, cy, cz, cubed, lam_c


@njit(cache=True, nogil=True)
def _sample_many(rng, n, x, y, z, lam_bar, dens, med, ec, er, ne, s, limit):
    status = np.empty(n, dtype=np.int64)
    centers = np.empty((n, 3))
    for i in range(n):
        st, cx, cy, cz, _, lam_c = _sample_center(rng, x, y, z, lam_bar, dens, med, ec, er, ne, s, limit, 0.0)
        status[i] = st
        centers[i, 0], centers[i, 1], centers[i, 2] = cx, cy, cz
        if st == VIOLATION:
            centers[i, 0] = lam_c
            return status[: i + 1], centers[: i + 1]
    return status, centers


@njit(cache=True, nogil=True)
def _eval_conditional_many(dens, med, ec, er, ne, s, pts):
    out = np.empty(pts.shape[0])
    for i in range(pts.shape[0]):
        out[i] = _eval_conditional(dens, med, ec, er, ne, s, pts[i, 0], pts[i, 1], pts[i, 2])
    return out


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


def sample_exponential(rate: float, rng: np.random.Generator) -> float:
    if not rate > 0:
        raise ValueError(f"exponential rate must be positive, got {rate}")
    return -math.log1p(-rng.random()) / rate


def _unpack(field_or_view):
    if isinstance(field_or_view, ConditionalDensityView):
        v = field_or_view
        return v.base, v.centers, v.radii, v.centers.shape[0], float(v.s)
    return field_or_view, _NO_BALLS_C, _NO_BALLS_R, 0, 0.0


def eval_conditional(view: ConditionalDensityView, x) -> float:
    x = as_vec3(x)
    base, ec, er, ne, s = _unpack(view)
    return float(_eval_conditional(base.arrays, base.medium.arrays, ec, er, ne, s, x[0], x[1], x[2]))


def _search_limit(base: DensityField, x: np.ndarray, s: float, stop_radius: float | None) -> float:
    if stop_radius is None:
        return float(_far_distance(base.medium.arrays.bbox, x[0], x[1], x[2]))
    if not stop_radius > 0:
        raise ValueError("stop_radius must be positive")
    return float(stop_radius) + s


def sample_closest_point(
    x, lam_bar: float, field, s: float, rng: np.random.Generator, stop_radius: float | None = None
) -> Surface | Inside | BeyondStop:
    """Closest particle surface point from the PBM by thinning a homogeneous process.

    Without ``stop_radius`` the search covers every possible center in the
    medium; a ``BeyondStop`` result then means the sampled configuration has
    no particles at all.
    """
    x = as_vec3(x)
    if lam_bar < 0:
        raise ValueError("majorant must be >= 0")
    base, ec, er, ne, s_view = _unpack(field)
    if isinstance(field, ConditionalDensityView) and s_view != s:
        raise ValueError("view dilation radius differs from particle radius")
    limit = _search_limit(base, x, s, stop_radius)
    st, cx, cy, cz, _, lam_c = _sample_center(
        rng, x[0], x[1], x[2], float(lam_bar), base.arrays, base.medium.arrays, ec, er, ne, float(s), limit, 0.0
    )
    if st == VIOLATION:
        raise MajorantViolation(x, (cx, cy, cz), lam_c, lam_bar)
    if st == BEYOND:
        return BeyondStop(limit)
    c = np.array([cx, cy, cz])
    r = float(np.linalg.norm(c - x))
    if r < s:
        return Inside(c)
    return Surface(x + (r - s) * (c - x) / r, c)


def sample_centers(x, lam_bar, field, s, rng, n: int, stop_radius: float | None = None):
    """Vectorised variant of :func:`sample_closest_point` for validation runs.

    Returns ``(accepted_mask, centers)``; rows where nothing was found are not meaningful.
    """
    x = as_vec3(x)
    base, ec, er, ne, _ = _unpack(field)
    limit = _search_limit(base, x, s, stop_radius)
    status, centers = _sample_many(
        rng, int(n), x[0], x[1], x[2], float(lam_bar), base.arrays, base.medium.arrays, ec, er, ne, float(s), limit
    )
    if status[-1] == VIOLATION:
        raise MajorantViolation(x, (np.nan,) * 3, centers[-1, 0], lam_bar)
    return status == ACCEPTED, centers


def cdf_center_distance_hom(r, lam: float):
    r = np.asarray(r, dtype=float)
    return -np.expm1(-_FOUR_THIRDS_PI * r**3 * lam)


def cdf_spherical_contact_hom(r, lam: float, s: float):
    """Distance from an uncovered point to the nearest particle surface, homogeneous case."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or lam < 0 or not s > 0:
        raise ValueError("need r >= 0, lam >= 0, s > 0")
    out = -np.expm1(-_FOUR_THIRDS_PI * ((r + s) ** 3 - s**3) * lam)
    return float(out) if out.ndim == 0 else out


def _ball_inside_medium(medium: MediumShape, x: np.ndarray, r: float) -> bool:
    if not medium.contains(x):
        return False
    *_, d = _closest_on_medium(medium.arrays, x[0], x[1], x[2])
    return d >= r


def sphere_surface_integral(field: DensityField, x, r: float, n_theta: int = 128, n_phi: int = 128) -> float:
    """Integral of the density over the sphere of radius r about x (midpoint rule)."""
    x = as_vec3(x)
    if r == 0:
        return 0.0
    ct = 1.0 - 2.0 * (np.arange(n_theta) + 0.5) / n_theta
    phi = 2.0 * np.pi * (np.arange(n_phi) + 0.5) / n_phi
    ct, phi = np.meshgrid(ct, phi, indexing="ij")
    st = np.sqrt(1.0 - ct * ct)
    pts = x + r * np.stack([st * np.cos(phi), st * np.sin(phi), ct], axis=-1).reshape(-1, 3)
    vals = field.eval_many(pts)
    return float(vals.mean() * 4.0 * np.pi * r * r)


def pdf_center_distance(x, r: float, field: DensityField, n_theta: int = 128, n_phi: int = 128) -> float:
    """Density of the distance from x to the nearest particle center."""
    if r < 0:
        raise ValueError("r must be >= 0")
    x = as_vec3(x)
    if r == 0:
        return 0.0
    if isinstance(field.variant, Constant) and _ball_inside_medium(field.medium, x, r):
        lam = field.variant.value
        return float(math.exp(-_FOUR_THIRDS_PI * r**3 * lam) * 4.0 * math.pi * r * r * lam)
    lam_ball = ball_integral(field, x, r).value
    return math.exp(-lam_ball) * sphere_surface_integral(field, x, r, n_theta, n_phi)


def cdf_center_distance_numeric(x, field: DensityField, r_grid: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    """CDF obtained by integrating :func:`pdf_center_distance` over ``r_grid`` (trapezoid rule)."""
    from scipy.integrate import cumulative_trapezoid

    r_grid = np.asarray(r_grid, dtype=float)
    pdf = np.array([pdf_center_distance(x, r, field) for r in r_grid])
    cdf = cumulative_trapezoid(pdf, r_grid, initial=0.0)
    return lambda r: np.interp(r, r_grid, cdf)


def coverage_probability(x, field: DensityField, s: float) -> float:
    x = as_vec3(x)
    if isinstance(field.variant, Constant) and _ball_inside_medium(field.medium, x, s):
        lam_s = _FOUR_THIRDS_PI * s**3 * field.variant.value
    else:
        lam_s = ball_integral(field, x, s).value
    return float(-math.expm1(-lam_s))


def mean_free_ball_radius(lam: float) -> float:
    """Expected distance to the nearest center in a homogeneous process."""
    if not lam > 0:
        raise ValueError("density must be positive")
    return math.gamma(4.0 / 3.0) * (_FOUR_THIRDS_PI * lam) ** (-1.0 / 3.0)


def sample_configuration(medium: MediumShape, field: DensityField, s: float, rng: np.random.Generator) -> ParticleConfiguration:
    """One explicit particle configuration: Poisson count, then centers by rejection."""
    if field.medium != medium:
        raise ValueError("density field is masked to a different medium")
    mass, _ = field.total_mass
    n = int(rng.poisson(mass)) if mass > 0 else 0
    lo, hi = medium.bounding_box
    lam_max = field.global_max
    out = np.empty((n, 3))
    filled = 0
    while filled < n:
        m = max(64, 2 * (n - filled))
        cand = lo + rng.random((m, 3)) * (hi - lo)
        u = rng.random(m)
        ok = cand[u * lam_max < field.eval_many(cand)]
        take = min(len(ok), n - filled)
        out[filled : filled + take] = ok[:take]
        filled += take
    return ParticleConfiguration(out, s)
