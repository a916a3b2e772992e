"""Goodness-of-fit helpers used by the validation suites."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats as sp_stats

# asymptotic Kolmogorov critical coefficients c(alpha)
KS_CRITICAL = {0.10: 1.224, 0.05: 1.358, 0.01: 1.628}


@dataclass(frozen=True)
class KsResult:
    D: float
    n: int
    critical: float
    passed: bool

    def as_dict(self):
        return {"D": self.D, "n": self.n, "critical": self.critical, "pass": self.passed}


def ks_statistic(samples, cdf: Callable[[np.ndarray], np.ndarray], alpha: float = 0.01) -> KsResult:
    """One-sample KS statistic; ``samples`` must already be sorted ascending."""
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n < 100:
        raise ValueError(f"KS test needs at least 100 samples, got {n}")
    if np.any(np.diff(x) < 0):
        raise ValueError("samples must be sorted")
    if alpha not in KS_CRITICAL:
        raise ValueError(f"alpha must be one of {sorted(KS_CRITICAL)}")
    F = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    D = float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))
    crit = KS_CRITICAL[alpha] / math.sqrt(n)
    return KsResult(D, n, crit, D < crit)


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    dof: int
    critical: float
    passed: bool

    def as_dict(self):
        return {"chi2": self.statistic, "dof": self.dof, "critical": self.critical, "pass": self.passed}


def octant_chi_square(directions: np.ndarray, alpha: float = 0.01) -> ChiSquareResult:
    """Uniformity of direction vectors over the 8 octants."""
    d = np.asarray(directions, dtype=float).reshape(-1, 3)
    codes = (d[:, 0] > 0).astype(int) + 2 * (d[:, 1] > 0) + 4 * (d[:, 2] > 0)
    counts = np.bincount(codes, minlength=8)
    expected = d.shape[0] / 8.0
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    crit = float(sp_stats.chi2.ppf(1.0 - alpha, 7))
    return ChiSquareResult(chi2, 7, crit, chi2 < crit)


def binomial_z(successes: int, n: int, p: float) -> float:
    """Standardised deviation of a binomial count from its mean."""
    sd = math.sqrt(n * p * (1.0 - p))
    if sd == 0:
        return 0.0 if successes == n * p else math.inf
    return (successes - n * p) / sd


def mean_z(values: np.ndarray, expected: float) -> float:
    v = np.asarray(values, dtype=float)
    se = v.std(ddof=1) / math.sqrt(v.size)
    return float((v.mean() - expected) / se) if se > 0 else (0.0 if v.mean() == expected else math.inf)
