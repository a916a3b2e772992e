"""Closed registry of Dirichlet boundary functions, evaluated inside walk kernels."""

from __future__ import annotations

import math
from collections import namedtuple
from dataclasses import dataclass, fields
from typing import Union

import numpy as np
from numba import njit

from .geometry import MediumShape, _closest_on_medium, as_vec3

BC_CONSTANT = 0
BC_LINEAR = 1
BC_COS_PRODUCT = 2
BC_SPLIT_COS = 3
BC_GAUSSIAN_SHELL = 4

BoundaryArrays = namedtuple("BoundaryArrays", ["kind", "params", "base_kind", "base_params"])


@dataclass(frozen=True)
class ConstantBC:
    value: float = 0.0

    def params(self):
        return [self.value]


@dataclass(frozen=True)
class LinearBC:
    """``scale * x[axis] + offset``."""

    axis: int = 0
    scale: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        if self.axis not in (0, 1, 2):
            raise ValueError("axis must be 0, 1 or 2")

    def params(self):
        return [self.axis, self.scale, self.offset]


@dataclass(frozen=True)
class CosProduct:
    """``A (cos(e x0) cos(e x1) + offset)`` with ``e = frequency * exp(-decay (x2 - shift))``."""

    amplitude: float = 0.5
    frequency: float = 2.0
    decay: float = 2.0
    shift: float = 1.75
    offset: float = -1.75

    def params(self):
        return [self.amplitude, self.frequency, self.decay, self.shift, self.offset]


@dataclass(frozen=True)
class SplitCos:
    """``A cos(f x[cos_axis])`` plus an offset that depends on the sign of ``x[split_axis]``."""

    amplitude: float = 0.5
    frequency: float = 10.0
    offset_neg: float = 0.5
    offset_pos: float = -0.5
    split_axis: int = 0
    cos_axis: int = 2

    def __post_init__(self):
        if self.split_axis not in (0, 1, 2) or self.cos_axis not in (0, 1, 2):
            raise ValueError("axes must be 0, 1 or 2")

    def params(self):
        return [self.amplitude, self.frequency, self.offset_neg, self.offset_pos, self.split_axis, self.cos_axis]


SimpleBC = Union[ConstantBC, LinearBC, CosProduct, SplitCos]


@dataclass(frozen=True)
class GaussianShell:
    """``-a * base(q) * exp(-b d^2)`` where q, d are the closest medium-boundary point and distance."""

    base: SimpleBC = ConstantBC(1.0)
    amplitude: float = 0.25
    sharpness: float = 200.0

    def __post_init__(self):
        if isinstance(self.base, GaussianShell) or not isinstance(self.base, _KINDS_SIMPLE):
            raise ValueError("shell base must be a non-shell builtin")

    def params(self):
        return [self.amplitude, self.sharpness]


BoundaryFunction = Union[ConstantBC, LinearBC, CosProduct, SplitCos, GaussianShell]

_KINDS_SIMPLE = (ConstantBC, LinearBC, CosProduct, SplitCos)
_KIND_CODE = {ConstantBC: BC_CONSTANT, LinearBC: BC_LINEAR, CosProduct: BC_COS_PRODUCT, SplitCos: BC_SPLIT_COS, GaussianShell: BC_GAUSSIAN_SHELL}
REGISTRY = {
    "constant": ConstantBC,
    "linear": LinearBC,
    "cos_product": CosProduct,
    "split_cos": SplitCos,
    "gaussian_shell": GaussianShell,
}
_NAME = {cls: name for name, cls in REGISTRY.items()}


def _pack(params) -> np.ndarray:
    out = np.zeros(8)
    out[: len(params)] = params
    return out


def boundary_arrays(bc: BoundaryFunction) -> BoundaryArrays:
    if isinstance(bc, GaussianShell):
        return BoundaryArrays(BC_GAUSSIAN_SHELL, _pack(bc.params()), _KIND_CODE[type(bc.base)], _pack(bc.base.params()))
    return BoundaryArrays(_KIND_CODE[type(bc)], _pack(bc.params()), -1, np.zeros(8))


def to_dict(bc: BoundaryFunction) -> dict:
    d = {"kind": _NAME[type(bc)]}
    for f in fields(bc):
        v = getattr(bc, f.name)
        d[f.name] = to_dict(v) if f.name == "base" else v
    return d


def from_dict(d: dict) -> BoundaryFunction:
    d = dict(d)
    try:
        cls = REGISTRY[d.pop("kind")]
    except KeyError as e:
        raise ValueError(f"unknown boundary function {e.args[0]!r}; choose from {sorted(REGISTRY)}") from None
    if "base" in d:
        d["base"] = from_dict(d["base"])
    names = {f.name for f in fields(cls)}
    extra = set(d) - names
    if extra:
        raise ValueError(f"unexpected parameters for {_NAME[cls]}: {sorted(extra)}")
    return cls(**d)


@njit(cache=True, nogil=True)
def _eval_simple(kind, p, x, y, z):
    if kind == BC_CONSTANT:
        return p[0]
    if kind == BC_LINEAR:
        a = int(p[0])
        v = x if a == 0 else (y if a == 1 else z)
        return p[1] * v + p[2]
    if kind == BC_COS_PRODUCT:
        e = p[1] * math.exp(-p[2] * (z - p[3]))
        return p[0] * (math.cos(e * x) * math.cos(e * y) + p[4])
    # split cos
    sa = int(p[4])
    ca = int(p[5])
    sv = x if sa == 0 else (y if sa == 1 else z)
    cv = x if ca == 0 else (y if ca == 1 else z)
    off = p[2] if sv < 0.0 else p[3]
    return p[0] * math.cos(p[1] * cv) + off


@njit(cache=True, nogil=True)
def _eval_bc(b, med, x, y, z):
    if b.kind != BC_GAUSSIAN_SHELL:
        return _eval_simple(b.kind, b.params, x, y, z)
    qx, qy, qz, d = _closest_on_medium(med, x, y, z)
    base = _eval_simple(b.base_kind, b.base_params, qx, qy, qz)
    return -b.params[0] * base * math.exp(-b.params[1] * d * d)


@njit(cache=True, nogil=True)
def _eval_bc_many(b, med, pts):
    out = np.empty(pts.shape[0])
    for i in range(pts.shape[0]):
        out[i] = _eval_bc(b, med, pts[i, 0], pts[i, 1], pts[i, 2])
    return out


def evaluate(bc: BoundaryFunction, medium: MediumShape, x) -> float:
    x = as_vec3(x)
    return float(_eval_bc(boundary_arrays(bc), medium.arrays, x[0], x[1], x[2]))


def evaluate_many(bc: BoundaryFunction, medium: MediumShape, pts) -> np.ndarray:
    pts = np.ascontiguousarray(pts, dtype=np.float64).reshape(-1, 3)
    return _eval_bc_many(boundary_arrays(bc), medium.arrays, pts)
