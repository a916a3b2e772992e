"""Acceptance protocols: each function runs one check at pinned seeds and returns a verdict.

Scenes are desk-scale stand-ins for the reference experiments; their
parameters are fixed here so verdicts are reproducible bit for bit.
"""

from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import _rng
from ..boundary import ConstantBC, LinearBC, SplitCos
from ..density import constant, gaussian_sum, majorant
from ..geometry import ball_medium, box_medium
from ..memory import MemoryMode
from ..pbm import (
    ConditionalDensityView,
    cdf_center_distance_hom,
    cdf_center_distance_numeric,
    cdf_spherical_contact_hom,
    coverage_probability,
    mean_free_ball_radius,
    sample_centers,
)
from ..solvers import DIRICHLET, NEUMANN, PbmParams, Problem, SolverConfig, ensemble_average, estimate
from .stats import binomial_z, ks_statistic

PROBES = [
    (0.0, 0.0, 0.0),
    (0.5, 0.0, 0.0),
    (-0.5, 0.0, 0.0),
    (0.0, 0.5, 0.0),
    (0.0, -0.5, 0.0),
    (0.0, 0.0, 0.5),
    (0.0, 0.0, -0.5),
    (0.35, 0.35, 0.35),
    (-0.35, 0.35, -0.35),
]

# reference mean free ball radii for a homogeneous process
MEAN_FREE_RADIUS_TABLE = {1e2: 1.2e-1, 5e2: 7.0e-2, 5e3: 3.2e-2, 1e6: 5.5e-3, 1e5: 1.2e-2}


@dataclass
class Verdict:
    criterion: int
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] criterion {self.criterion:2d} {self.name}: {self.summary()}"

    def summary(self) -> str:
        return self.detail.get("summary", "")

    def as_dict(self) -> dict:
        return {"criterion": self.criterion, "name": self.name, "pass": self.passed, "seconds": self.seconds, **self.detail}


def _timed(fn):
    def wrapper(*args, **kwargs):
        t = time.perf_counter()
        v = fn(*args, **kwargs)
        v.seconds = time.perf_counter() - t
        return v

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _means(results) -> tuple[np.ndarray, np.ndarray]:
    ests = [r.estimate if hasattr(r, "estimate") else r for r in results]
    return np.array([e.mean for e in ests]), np.array([e.variance_of_mean for e in ests])


# ---------------------------------------------------------------------------
# scenes
# ---------------------------------------------------------------------------


def dirichlet_ball_problem(lam: float = 5.0, s: float = 0.1) -> Problem:
    """Unit ball, linear data on the ball, absorbing particles held at zero."""
    m = ball_medium()
    return Problem(m, LinearBC(0, 0.5, 0.5), PbmParams(constant(lam, m), s), DIRICHLET, ConstantBC(0.0))


def neumann_box_problem() -> Problem:
    """Box [-1, 1]^3, split cosine data, reflecting particles under a Gaussian bump density."""
    m = box_medium((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0))
    f = gaussian_sum([(300.0, (0.0, 0.0, 0.0), 0.5)], m)
    return Problem(m, SplitCos(), PbmParams(f, 0.05), NEUMANN)


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------


@_timed
def mean_free_radius_table(rel_tol: float = 0.05) -> Verdict:
    rows = []
    for lam, ref in MEAN_FREE_RADIUS_TABLE.items():
        v = mean_free_ball_radius(lam)
        rows.append({"lambda": lam, "value": v, "reference": ref, "rel_err": abs(v - ref) / ref})
    worst = max(r["rel_err"] for r in rows)
    return Verdict(1, "mean free ball radius", worst <= rel_tol, {"rows": rows, "summary": f"max rel err {worst:.3f} (tol {rel_tol})"})


@_timed
def distribution_laws(n: int = 100_000, alpha: float = 0.01, seed: int = 2024) -> Verdict:
    """KS tests for the distance to the nearest center (homogeneous and Gaussian sum)
    and for the spherical contact distance."""
    m = ball_medium()
    x = np.zeros(3)
    out = {}
    # homogeneous center distance
    lam = 1000.0
    f = constant(lam, m)
    ok, c = sample_centers(x, lam, f, 0.05, _rng.aux_stream(seed, 1), n)
    r = np.sort(np.linalg.norm(c[ok] - x, axis=1))
    out["center_distance"] = ks_statistic(r, lambda t: cdf_center_distance_hom(t, lam), alpha)
    # spherical contact from an uncovered point: condition on no center within s of x
    s = 0.05
    view = ConditionalDensityView(f, x[None, :], np.zeros(1), s)
    ok, c = sample_centers(x, lam, view, s, _rng.aux_stream(seed, 2), n)
    r = np.sort(np.linalg.norm(c[ok] - x, axis=1) - s)
    out["spherical_contact"] = ks_statistic(r, lambda t: cdf_spherical_contact_hom(t, lam, s), alpha)
    # heterogeneous center distance
    g = gaussian_sum([(200.0, (0.2, 0.0, 0.0), 0.4), (100.0, (-0.3, 0.2, 0.0), 0.3)], m)
    lam_bar = majorant(g, x, 2.0)
    ok, c = sample_centers(x, lam_bar, g, 0.05, _rng.aux_stream(seed, 3), n)
    r = np.sort(np.linalg.norm(c[ok] - x, axis=1))
    cdf = cdf_center_distance_numeric(x, g, np.linspace(0.0, 1.0, 401))
    out["heterogeneous_center_distance"] = ks_statistic(r, cdf, alpha)
    passed = all(v.passed for v in out.values())
    summary = ", ".join(f"{k} D={v.D:.4f}/{v.critical:.4f}" for k, v in out.items())
    return Verdict(2, "distribution laws (KS)", passed, {"tests": {k: v.as_dict() for k, v in out.items()}, "summary": summary})


@_timed
def coverage(n: int = 100_000, seed: int = 7) -> Verdict:
    """Fraction of sampled nearest centers closer than s matches 1 - exp(-Lambda(x, s))."""
    m = ball_medium()
    s = 0.1
    ball = 4.0 / 3.0 * math.pi * s**3
    settings = [
        ("p=0.5 homogeneous", constant(math.log(2.0) / ball, m), np.zeros(3)),
        ("p=0.2 homogeneous", constant(-math.log(0.8) / ball, m), np.array([0.3, -0.2, 0.1])),
        ("gaussian sum near boundary", gaussian_sum([(600.0, (0.6, 0.0, 0.0), 0.3)], m), np.array([0.85, 0.1, 0.0])),
    ]
    rows = []
    for k, (name, f, x) in enumerate(settings):
        lam_bar = majorant(f, x, 2 * s)
        ok, c = sample_centers(x, lam_bar, f, s, _rng.aux_stream(seed, k), n, stop_radius=s)
        inside = int(np.sum(ok & (np.linalg.norm(c - x, axis=1) < s)))
        p = coverage_probability(x, f, s)
        z = binomial_z(inside, n, p)
        rows.append({"setting": name, "p": p, "fraction": inside / n, "z": z})
    worst = max(abs(r["z"]) for r in rows)
    summary = ", ".join(f"{r['setting']}: {r['fraction']:.4f} vs {r['p']:.4f}" for r in rows) + f"; max |z| {worst:.2f}"
    return Verdict(3, "coverage probability", worst <= 3.0, {"rows": rows, "summary": summary})


def _probe_comparison(crit: int, name: str, a, b, points) -> Verdict:
    ma, va = _means(a)
    mb, vb = _means(b)
    z = np.abs(ma - mb) / np.sqrt(va + vb)
    rows = [
        {"point": list(p), "a": float(ma[k]), "b": float(mb[k]), "sd_a": float(np.sqrt(va[k])), "sd_b": float(np.sqrt(vb[k])), "z": float(z[k])}
        for k, p in enumerate(points)
    ]
    return Verdict(crit, name, bool(np.all(z <= 3.0)), {"rows": rows, "summary": f"max |z| {z.max():.2f} over {len(points)} probes (limit 3)"})


@_timed
def vwos_unbiased(walks: int = 4096, configs: int = 64, walks_per_config: int = 64) -> Verdict:
    p = dirichlet_ball_problem()
    a = estimate(p, "vwos", PROBES, SolverConfig(eps=1e-3, n_walks=walks, seed=11))
    b = ensemble_average(p, PROBES, configs, walks_per_config, SolverConfig(eps=1e-3, seed=12))
    return _probe_comparison(4, "VWoS vs ensemble average", a, b.estimates, PROBES)


@_timed
def vwost_unbiased(walks: int = 4096, configs: int = 64, walks_per_config: int = 64) -> Verdict:
    p = neumann_box_problem()
    a = estimate(p, "vwost", PROBES, SolverConfig(eps=1e-3, n_walks=walks, seed=21))
    b = ensemble_average(p, PROBES, configs, walks_per_config, SolverConfig(eps=1e-3, seed=22))
    return _probe_comparison(5, "VWoSt vs ensemble average", a, b.estimates, PROBES)


@_timed
def homogenization_bias(walks: int = 8192, configs: int = 128, walks_per_config: int = 32, lam_s: float = 1.0) -> Verdict:
    """MAE of the screened solver against EA grows with particle size at fixed lambda * s."""
    rows = []
    for k, s in enumerate((0.002, 0.01, 0.05)):
        p = dirichlet_ball_problem(lam=lam_s / s, s=s)
        cfg = SolverConfig(eps=s / 10, n_walks=walks, seed=40 + k)
        h = estimate(p, "homogenized", PROBES, cfg)
        e = ensemble_average(p, PROBES, configs, walks_per_config, SolverConfig(eps=s / 10, seed=50 + k))
        mh, vh = _means(h)
        me, ve = _means(e.estimates)
        rows.append({"s": s, "lambda": lam_s / s, "mae": float(np.mean(np.abs(mh - me))), "noise": float(np.mean(np.sqrt(vh + ve)))})
    maes = [r["mae"] for r in rows]
    passed = bool(maes[0] < maes[1] < maes[2])
    summary = "MAE " + " < ".join(f"{m:.4f}" for m in maes) + f" (s = 0.002, 0.01, 0.05; lambda*s = {lam_s})"
    return Verdict(6, "homogenization bias grows with s", passed, {"rows": rows, "summary": summary})


@_timed
def screened_ball(walks: int = 100_000, seed: int = 77) -> Verdict:
    """g = 1 on the unit ball with sqrt(sigma) R = 1: u(r) = sinh(r) / (r sinh(1)), u(0) = 1 / sinh(1).

    From the center the first sphere reaches the boundary, so every walk returns
    1 / sinh(1) exactly; the off-center point exercises multi-step walks.
    """
    s = 0.01
    lam = 1.0 / (4.0 * math.pi * s)
    m = ball_medium()
    p = Problem(m, ConstantBC(1.0), PbmParams(constant(lam, m), s))
    pts = [(0.0, 0.0, 0.0), (0.5, 0.0, 0.0)]
    res = estimate(p, "homogenized", pts, SolverConfig(eps=1e-4, n_walks=walks, seed=seed))
    exact = [1.0 / math.sinh(1.0), math.sinh(0.5) / (0.5 * math.sinh(1.0))]
    rows = []
    for x, r, u in zip(pts, res, exact):
        sd = math.sqrt(r.estimate.variance_of_mean)
        err = abs(r.estimate.mean - u)
        z = err / sd if sd > 0 else (0.0 if err <= 1e-12 else math.inf)
        rows.append({"point": list(x), "mean": r.estimate.mean, "exact": u, "sd": sd, "z": z})
    worst = max(r["z"] for r in rows)
    summary = ", ".join(f"u({r['point'][0]:g}) {r['mean']:.5f} vs {r['exact']:.5f}" for r in rows) + f"; max |z| {worst:.2f} (limit 4)"
    return Verdict(7, "screened ball analytic value", worst <= 4.0, {"rows": rows, "summary": summary})


@_timed
def finite_memory_bias(walks: int = 16384, configs: int = 1024, walks_per_config: int = 16) -> Verdict:
    """Mean |estimate - EA| over the probes: Finite(1,1) must exceed Full by 3 combined sd."""
    p = dirichlet_ball_problem()
    full = estimate(p, "vwos", PROBES, SolverConfig(eps=1e-3, n_walks=walks, seed=11))
    fin = estimate(p, "vwos", PROBES, SolverConfig(eps=1e-3, n_walks=walks, seed=13, memory_mode=MemoryMode.finite(1, 1)))
    ea = ensemble_average(p, PROBES, configs, walks_per_config, SolverConfig(eps=1e-3, seed=12))
    mf, vf = _means(full)
    mn, vn = _means(fin)
    me, ve = _means(ea.estimates)
    d_full = float(np.mean(np.abs(mf - me)))
    d_fin = float(np.mean(np.abs(mn - me)))
    sd = float(np.sqrt(np.sum(vf + vn + ve)) / len(PROBES))
    passed = d_fin - d_full >= 3.0 * sd
    summary = f"finite {d_fin:.4f} - full {d_full:.4f} = {d_fin - d_full:.4f} vs 3 sd {3 * sd:.4f}"
    return Verdict(8, "finite memory bias", passed, {"d_full": d_full, "d_finite": d_fin, "sd": sd, "summary": summary})


@_timed
def memory_bookkeeping(walks: int = 2000, factor: float = 5.0) -> Verdict:
    """|E| equals walk length, |P| <= walk length, and both medians grow with density."""
    start = [(0.95, 0.0, 0.0)]
    stats = []
    exact = True
    for k, lam in enumerate((1000.0, 1000.0 * factor)):
        p = dirichlet_ball_problem(lam=lam, s=1e-3)
        (r,) = estimate(p, "vwos", start, SolverConfig(eps=1e-4, n_walks=walks, seed=90 + k))
        exact &= bool(np.all(r.empty == r.steps)) and bool(np.all(r.particles <= r.steps))
        stats.append({"lambda": lam, "median_steps": float(np.median(r.steps)), "median_P": float(np.median(r.particles))})
    grows = stats[1]["median_steps"] > stats[0]["median_steps"] and stats[1]["median_P"] > stats[0]["median_P"]
    summary = (
        f"|E|==steps and |P|<=steps: {exact}; median steps {stats[0]['median_steps']:g} -> {stats[1]['median_steps']:g}, "
        f"median |P| {stats[0]['median_P']:g} -> {stats[1]['median_P']:g}"
    )
    return Verdict(9, "memory bookkeeping", exact and grows, {"rows": stats, "summary": summary})


def _run_bytes(scene, method: str, plane, threads: int) -> tuple[bytes, bytes]:
    from .io import write_csv, write_pfm
    from .run import run

    rep = run(scene, method, plane, threads=threads)
    with tempfile.TemporaryDirectory() as d:
        write_csv(rep, Path(d) / "a.csv")
        write_pfm(rep.mean, Path(d) / "a.pfm")
        return (Path(d) / "a.csv").read_bytes(), (Path(d) / "a.pfm").read_bytes()


@_timed
def reductions_and_determinism(walks: int = 256) -> Verdict:
    """Zero density: VWoS, VWoSt and WoSt reproduce WoS exactly. Thread count never changes outputs."""
    from .plane import EvalPlane
    from .scene import SceneSpec

    checks = {}
    cfg = SolverConfig(eps=1e-3, n_walks=walks, seed=5)
    dp = dirichlet_ball_problem(lam=0.0)
    checks["vwos == wos"] = _same(estimate(dp, "vwos", PROBES, cfg), estimate(dp, "wos", PROBES, cfg))
    m = ball_medium()
    np_ = Problem(m, LinearBC(2, 1.0, 0.0), PbmParams(constant(0.0, m), 0.1), NEUMANN)
    wos_n = estimate(Problem(m, LinearBC(2, 1.0, 0.0), PbmParams(constant(0.0, m), 0.1)), "wos", PROBES, cfg)
    checks["vwost == wos"] = _same(estimate(np_, "vwost", PROBES, cfg), wos_n)
    checks["wost == wos"] = _same(estimate(np_, "wost", PROBES, cfg), wos_n)
    scene = SceneSpec(m, constant(5.0, m).variant, 0.1, dp.medium_bc, DIRICHLET, ConstantBC(0.0), SolverConfig(eps=1e-3, n_walks=16, seed=3))
    plane = EvalPlane((-1.0, -1.0, 0.1), (2.0, 0.0, 0.0), (0.0, 2.0, 0.0), 9, 9)
    one = _run_bytes(scene, "vwos", plane, 1)
    checks["threads 1 == threads 3 (vwos grid)"] = one == _run_bytes(scene, "vwos", plane, 3)
    checks["repeat run identical"] = one == _run_bytes(scene, "vwos", plane, 1)
    passed = all(checks.values())
    summary = ", ".join(f"{k}: {'ok' if v else 'DIFFERS'}" for k, v in checks.items())
    return Verdict(10, "zero-density reductions and determinism", passed, {"checks": checks, "summary": summary})


def _same(a, b) -> bool:
    return all(x.estimate == y.estimate and np.array_equal(x.steps, y.steps) for x, y in zip(a, b))


CRITERIA = {
    1: mean_free_radius_table,
    2: distribution_laws,
    3: coverage,
    4: vwos_unbiased,
    5: vwost_unbiased,
    6: homogenization_bias,
    7: screened_ball,
    8: finite_memory_bias,
    9: memory_bookkeeping,
    10: reductions_and_determinism,
}
