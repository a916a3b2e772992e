"""Elementwise error metrics between two runs on the same plane."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class Comparison:
    mae: float
    rmse: float
    max_abs: float
    z_exceed_count: int
    n_points: int

    def as_dict(self) -> dict:
        return asdict(self)


def compare_arrays(mean_a, var_a, mean_b, var_b, z: float = 3.0) -> Comparison:
    """Metrics over points where both means are finite.

    ``z_exceed_count`` counts points with |a - b| > z sqrt(var_a + var_b).
    """
    ma, mb = np.asarray(mean_a, dtype=float), np.asarray(mean_b, dtype=float)
    va, vb = np.asarray(var_a, dtype=float), np.asarray(var_b, dtype=float)
    if ma.shape != mb.shape or va.shape != ma.shape or vb.shape != mb.shape:
        raise ValueError(f"shape mismatch: {ma.shape} vs {mb.shape}")
    ok = np.isfinite(ma) & np.isfinite(mb)
    if np.any(np.isfinite(ma) != np.isfinite(mb)):
        raise ValueError("runs disagree on which points are in the domain")
    n = int(ok.sum())
    if n == 0:
        return Comparison(0.0, 0.0, 0.0, 0, 0)
    d = np.abs(ma[ok] - mb[ok])
    sd = np.sqrt(va[ok] + vb[ok])
    return Comparison(
        mae=float(d.mean()),
        rmse=float(np.sqrt(np.mean(d * d))),
        max_abs=float(d.max()),
        z_exceed_count=int(np.sum(d > z * sd)),
        n_points=n,
    )


def compare(a, b, z: float = 3.0) -> Comparison:
    """Compare two :class:`~volwalk.harness.run.RunReport` grids."""
    if a.plane is not None and b.plane is not None and a.plane.shape != b.plane.shape:
        raise ValueError(f"plane resolutions differ: {a.plane.shape} vs {b.plane.shape}")
    return compare_arrays(a.mean, a.variance, b.mean, b.variance, z)


def z_exceed_bound(n_points: int, z: float = 3.0, sigmas: float = 3.0) -> int:
    """Binomial upper quantile (one-sided ``sigmas`` level) of |Z| > z events among n unbiased comparisons."""
    p = 2.0 * stats.norm.sf(z)
    return int(stats.binom.ppf(stats.norm.cdf(sigmas), n_points, p))
