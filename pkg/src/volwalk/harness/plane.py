"""Rectangular evaluation grids on a slice plane."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import MediumShape


class PlaneError(ValueError):
    pass


@dataclass(frozen=True)
class EvalPlane:
    """Grid x(i, j) = origin + i/(nu-1) u_axis + j/(nv-1) v_axis."""

    origin: tuple[float, float, float]
    u_axis: tuple[float, float, float]
    v_axis: tuple[float, float, float]
    nu: int
    nv: int

    def __post_init__(self):
        if self.nu < 2 or self.nv < 2:
            raise PlaneError("plane resolution must be at least 2x2")
        u, v = np.array(self.u_axis, dtype=float), np.array(self.v_axis, dtype=float)
        if np.linalg.norm(np.cross(u, v)) <= 1e-12 * max(np.linalg.norm(u) * np.linalg.norm(v), 1e-300):
            raise PlaneError("u and v axes must be non-parallel and non-zero")

    @classmethod
    def parse(cls, text: str) -> "EvalPlane":
        """Parse ``"ox,oy,oz;ux,uy,uz;vx,vy,vz;nu,nv"``."""
        parts = [p.strip() for p in text.split(";")]
        if len(parts) != 4:
            raise PlaneError("plane must be 'ox,oy,oz;ux,uy,uz;vx,vy,vz;nu,nv'")
        try:
            vecs = [tuple(float(c) for c in p.split(",")) for p in parts[:3]]
            res = [int(c) for c in parts[3].split(",")]
        except ValueError as e:
            raise PlaneError(f"bad plane component: {e}") from None
        if any(len(v) != 3 for v in vecs) or len(res) != 2:
            raise PlaneError("plane needs three 3-vectors and two resolutions")
        return cls(vecs[0], vecs[1], vecs[2], res[0], res[1])

    def __str__(self):
        f = lambda v: ",".join(repr(float(c)) for c in v)  # noqa: E731
        return f"{f(self.origin)};{f(self.u_axis)};{f(self.v_axis)};{self.nu},{self.nv}"

    @property
    def shape(self) -> tuple[int, int]:
        """Array shape (nv, nu): row j, column i."""
        return self.nv, self.nu

    def points(self) -> np.ndarray:
        """Grid points as an array of shape (nv, nu, 3)."""
        a = np.arange(self.nu) / (self.nu - 1)
        b = np.arange(self.nv) / (self.nv - 1)
        o, u, v = (np.array(w, dtype=float) for w in (self.origin, self.u_axis, self.v_axis))
        return o + a[None, :, None] * u + b[:, None, None] * v

    def point(self, i: int, j: int) -> np.ndarray:
        o, u, v = (np.array(w, dtype=float) for w in (self.origin, self.u_axis, self.v_axis))
        return o + i / (self.nu - 1) * u + j / (self.nv - 1) * v

    def mask(self, medium: MediumShape) -> np.ndarray:
        """True at grid points strictly inside the medium."""
        return medium.contains_many(self.points().reshape(-1, 3)).reshape(self.shape)

    def point_id(self, i: int, j: int) -> int:
        return j * self.nu + i
