"""Particle-center density fields: evaluation, majorants and ball integrals."""

from __future__ import annotations

import math
from collections import namedtuple
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit

from .geometry import MediumShape, _inside_medium, as_vec3

KIND_CONSTANT = 0
KIND_GAUSSIAN = 1
KIND_GRID = 2

DensityArrays = namedtuple("DensityArrays", ["kind", "const", "gauss", "grid", "grid_box", "grid_max"])

DEFAULT_BALL_SEED = 0x5EED_BA11


class DensityError(ValueError):
    pass


@dataclass(frozen=True)
class Constant:
    value: float

    def __post_init__(self):
        if not (self.value >= 0 and math.isfinite(self.value)):
            raise DensityError(f"constant density must be finite and >= 0, got {self.value}")


@dataclass(frozen=True)
class GaussianTerm:
    amplitude: float
    center: tuple[float, float, float]
    width: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in as_vec3(self.center)))
        if not self.amplitude >= 0:
            raise DensityError("gaussian amplitude must be >= 0")
        if not self.width > 0:
            raise DensityError("gaussian width must be > 0")


@dataclass(frozen=True)
class GaussianSum:
    terms: tuple[GaussianTerm, ...]

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))


@dataclass(frozen=True, eq=False)
class TrilinearGrid:
    """Node values on a regular grid; ``values[i, j, k]`` sits at x index i."""

    values: np.ndarray
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    path: str | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3 or min(v.shape) < 2:
            raise DensityError("grid needs at least 2 nodes per axis")
        if not np.all(np.isfinite(v)):
            raise DensityError("grid values must be finite")
        object.__setattr__(self, "values", np.ascontiguousarray(np.maximum(v, 0.0)))
        lo, hi = as_vec3(self.lo), as_vec3(self.hi)
        if not np.all(lo < hi):
            raise DensityError("grid box min must be < max")
        object.__setattr__(self, "lo", tuple(float(c) for c in lo))
        object.__setattr__(self, "hi", tuple(float(c) for c in hi))

    def __eq__(self, other):
        return (
            isinstance(other, TrilinearGrid)
            and self.lo == other.lo
            and self.hi == other.hi
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self):
        return hash((self.lo, self.hi, self.values.tobytes()))

    @classmethod
    def load(cls, path: str | Path) -> "TrilinearGrid":
        values, lo, hi = read_vgrid(path)
        return cls(values, lo, hi, path=str(path))


Variant = Constant | GaussianSum | TrilinearGrid


@dataclass(frozen=True)
class DensityField:
    """Density ``variant`` masked to zero outside ``medium``."""

    variant: Variant
    medium: MediumShape

    @cached_property
    def arrays(self) -> DensityArrays:
        v = self.variant
        gauss = np.zeros((0, 5))
        grid = np.zeros((0, 0, 0))
        box = np.zeros(6)
        const = 0.0
        gmax = 0.0
        if isinstance(v, Constant):
            kind = KIND_CONSTANT
            const = float(v.value)
        elif isinstance(v, GaussianSum):
            kind = KIND_GAUSSIAN
            gauss = np.array([[t.amplitude, *t.center, t.width] for t in v.terms], dtype=np.float64).reshape(-1, 5)
        elif isinstance(v, TrilinearGrid):
            kind = KIND_GRID
            grid = v.values
            box = np.array([*v.lo, *v.hi])
            gmax = float(grid.max())
        else:
            raise DensityError(f"unknown density variant {v!r}")
        return DensityArrays(kind, const, gauss, grid, box, gmax)

    @property
    def is_zero(self) -> bool:
        v = self.variant
        if isinstance(v, Constant):
            return v.value == 0
        if isinstance(v, GaussianSum):
            return all(t.amplitude == 0 for t in v.terms)
        return v.values.max() == 0

    @property
    def global_max(self) -> float:
        """Upper bound on the density over all of space."""
        v = self.variant
        if isinstance(v, Constant):
            return float(v.value)
        if isinstance(v, GaussianSum):
            return float(sum(t.amplitude for t in v.terms))
        return float(v.values.max())

    def __call__(self, x) -> float:
        return eval_density(self, x)

    def eval_many(self, pts: np.ndarray) -> np.ndarray:
        pts = np.ascontiguousarray(pts, dtype=np.float64).reshape(-1, 3)
        return _eval_density_many(self.arrays, self.medium.arrays, pts)

    @cached_property
    def total_mass(self) -> tuple[float, float]:
        """(∫_M λ, standard error) by stratified quadrature over the medium's bounding box."""
        return _box_integral(self, n_per_axis=64, per_stratum=4, seed=DEFAULT_BALL_SEED)


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _eval_unmasked(d, x, y, z):
    if d.kind == KIND_CONSTANT:
        return d.const
    if d.kind == KIND_GAUSSIAN:
        acc = 0.0
        for i in range(d.gauss.shape[0]):
            g = d.gauss[i]
            r2 = (x - g[1]) ** 2 + (y - g[2]) ** 2 + (z - g[3]) ** 2
            acc += g[0] * math.exp(-r2 / (g[4] * g[4]))
        return acc
    b = d.grid_box
    if not (b[0] <= x <= b[3] and b[1] <= y <= b[4] and b[2] <= z <= b[5]):
        return 0.0
    nx, ny, nz = d.grid.shape
    fx = (x - b[0]) / (b[3] - b[0]) * (nx - 1)
    fy = (y - b[1]) / (b[4] - b[1]) * (ny - 1)
    fz = (z - b[2]) / (b[5] - b[2]) * (nz - 1)
    i = min(int(fx), nx - 2)
    j = min(int(fy), ny - 2)
    k = min(int(fz), nz - 2)
    tx, ty, tz = fx - i, fy - j, fz - k
    g = d.grid
    c00 = g[i, j, k] * (1 - tx) + g[i + 1, j, k] * tx
    c10 = g[i, j + 1, k] * (1 - tx) + g[i + 1, j + 1, k] * tx
    c01 = g[i, j, k + 1] * (1 - tx) + g[i + 1, j, k + 1] * tx
    c11 = g[i, j + 1, k + 1] * (1 - tx) + g[i + 1, j + 1, k + 1] * tx
    c0 = c00 * (1 - ty) + c10 * ty
    c1 = c01 * (1 - ty) + c11 * ty
    return c0 * (1 - tz) + c1 * tz


@njit(cache=True, nogil=True)
def _eval_density(d, med, x, y, z):
    if not _inside_medium(med, x, y, z):
        return 0.0
    return _eval_unmasked(d, x, y, z)


@njit(cache=True, nogil=True)
def _eval_density_many(d, med, pts):
    out = np.empty(pts.shape[0])
    for i in range(pts.shape[0]):
        out[i] = _eval_density(d, med, pts[i, 0], pts[i, 1], pts[i, 2])
    return out


@njit(cache=True, nogil=True)
def _majorant(d, x, y, z, r_max):
    if d.kind == KIND_CONSTANT:
        return d.const
    if d.kind == KIND_GRID:
        return d.grid_max
    acc = 0.0
    for i in range(d.gauss.shape[0]):
        g = d.gauss[i]
        dist = math.sqrt((x - g[1]) ** 2 + (y - g[2]) ** 2 + (z - g[3]) ** 2)
        gap = max(0.0, dist - r_max)
        acc += g[0] * math.exp(-gap * gap / (g[4] * g[4]))
    # rounding in exp can put the sum a few ulps below a pointwise value
    return acc * (1.0 + 1e-12)


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


def eval_density(field: DensityField, x) -> float:
    x = as_vec3(x)
    return float(_eval_density(field.arrays, field.medium.arrays, x[0], x[1], x[2]))


def majorant(field: DensityField, x, r_max: float) -> float:
    if r_max < 0:
        raise DensityError("r_max must be >= 0")
    x = as_vec3(x)
    return float(_majorant(field.arrays, x[0], x[1], x[2], float(r_max)))


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    stderr: float

    def __float__(self):
        return self.value


def _stratified_unit_cube(n: int, per_stratum: int, rng: np.random.Generator) -> np.ndarray:
    idx = np.stack(np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij"), axis=-1).reshape(-1, 3)
    jitter = rng.random((per_stratum, idx.shape[0], 3))
    return (idx[None, :, :] + jitter) / n  # (per_stratum, H, 3)


def _stratified_stats(f: np.ndarray, volume: float) -> QuadratureResult:
    # f has shape (per_stratum, H)
    m, H = f.shape
    means = f.mean(axis=0)
    value = volume * float(means.sum()) / H
    var_strata = f.var(axis=0, ddof=1) / m
    stderr = volume * math.sqrt(float(var_strata.sum())) / H
    return QuadratureResult(value, stderr)


def ball_integral(
    field: DensityField, x, r: float, n_per_axis: int = 32, per_stratum: int = 2, seed: int = DEFAULT_BALL_SEED
) -> QuadratureResult:
    """Λ(x, r): integral of the density over B(x, r) by stratified Monte Carlo."""
    if r < 0:
        raise DensityError("radius must be >= 0")
    x = as_vec3(x)
    if r == 0:
        return QuadratureResult(0.0, 0.0)
    u = _stratified_unit_cube(n_per_axis, per_stratum, np.random.default_rng(seed))
    rad = r * np.cbrt(u[..., 0])
    ct = 1.0 - 2.0 * u[..., 1]
    st = np.sqrt(np.maximum(0.0, 1.0 - ct * ct))
    phi = 2.0 * np.pi * u[..., 2]
    pts = np.stack([rad * st * np.cos(phi), rad * st * np.sin(phi), rad * ct], axis=-1) + x
    f = field.eval_many(pts.reshape(-1, 3)).reshape(per_stratum, -1)
    return _stratified_stats(f, 4.0 / 3.0 * math.pi * r**3)


def _box_integral(field: DensityField, n_per_axis: int, per_stratum: int, seed: int) -> tuple[float, float]:
    lo, hi = field.medium.bounding_box
    u = _stratified_unit_cube(n_per_axis, per_stratum, np.random.default_rng(seed))
    pts = lo + u * (hi - lo)
    f = field.eval_many(pts.reshape(-1, 3)).reshape(per_stratum, -1)
    res = _stratified_stats(f, float(np.prod(hi - lo)))
    return res.value, res.stderr


def constant(value: float, medium: MediumShape) -> DensityField:
    return DensityField(Constant(float(value)), medium)


def gaussian_sum(terms: Sequence[tuple[float, Sequence[float], float]], medium: MediumShape) -> DensityField:
    return DensityField(GaussianSum(tuple(GaussianTerm(a, tuple(c), w) for a, c, w in terms)), medium)


# ---------------------------------------------------------------------------
# VGRID files
# ---------------------------------------------------------------------------


def write_vgrid(path: str | Path, values: np.ndarray, lo, hi) -> None:
    values = np.asarray(values)
    nx, ny, nz = values.shape
    lo, hi = as_vec3(lo), as_vec3(hi)
    header = "VGRID {} {} {} {} {} {} {} {} {}\n".format(nx, ny, nz, *(repr(float(c)) for c in (*lo, *hi)))
    body = np.ascontiguousarray(values.transpose(2, 1, 0), dtype="<f4").tobytes()
    Path(path).write_bytes(header.encode("ascii") + body)


def read_vgrid(path: str | Path) -> tuple[np.ndarray, tuple, tuple]:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise DensityError(f"{path}: missing VGRID header")
    parts = raw[:nl].decode("ascii").split()
    if len(parts) != 10 or parts[0] != "VGRID":
        raise DensityError(f"{path}: malformed VGRID header")
    nx, ny, nz = (int(p) for p in parts[1:4])
    box = [float(p) for p in parts[4:]]
    count = nx * ny * nz
    body = raw[nl + 1 :]
    if len(body) != 4 * count:
        raise DensityError(f"{path}: expected {count} floats, found {len(body) // 4}")
    data = np.frombuffer(body, dtype="<f4").astype(np.float64)
    values = np.maximum(data.reshape(nz, ny, nx).transpose(2, 1, 0), 0.0)
    return np.ascontiguousarray(values), tuple(box[:3]), tuple(box[3:])
