"""Validation suites with machine-readable verdicts, run at pinned seeds."""

from __future__ import annotations

import math

import numpy as np

from .. import _rng
from ..boundary import ConstantBC, LinearBC, evaluate_many
from ..density import Constant, constant, majorant
from ..geometry import Provenance, ball_medium, closest_point_on_medium, sample_direction
from ..memory import Memory, MemoryMode, sample_closest_point_with_memory
from ..pbm import (
    ConditionalDensityView,
    cdf_center_distance_hom,
    cdf_spherical_contact_hom,
    coverage_probability,
    sample_centers,
)
from ..solvers import (
    DIRICHLET,
    NEUMANN,
    PbmParams,
    Problem,
    SolverConfig,
    _screened_weight,
    estimate,
    laplace_kernel_ratio,
    vwos_estimate,
)
from .scene import SceneSpec
from .stats import binomial_z, ks_statistic, octant_chi_square

SUITES = ("distributions", "solvers", "memory")


def _check(name: str, passed: bool, **stats) -> dict:
    return {"name": name, "pass": bool(passed), **stats}


def _homogeneous_density(scene: SceneSpec | None) -> tuple[float, float]:
    if scene is not None and isinstance(scene.density, Constant) and scene.density.value > 0:
        return scene.density.value, scene.particle_radius
    return 1000.0, 0.05


def distributions_suite(scene: SceneSpec | None = None, seed: int = 0, n: int = 20_000) -> list[dict]:
    lam, s = _homogeneous_density(scene)
    # a medium large enough that the nearest center lies inside it with overwhelming probability
    r_need = (30.0 / (4.0 / 3.0 * math.pi * lam)) ** (1.0 / 3.0) + s
    m = ball_medium(radius=max(1.0, 2.0 * r_need))
    f = constant(lam, m)
    x = np.zeros(3)
    out = []
    ok, c = sample_centers(x, lam, f, s, _rng.aux_stream(seed, 11), n)
    ks = ks_statistic(np.sort(np.linalg.norm(c[ok] - x, axis=1)), lambda t: cdf_center_distance_hom(t, lam))
    out.append(_check("distance to nearest center (KS)", ks.passed, **ks.as_dict(), **{"lambda": lam}))
    view = ConditionalDensityView(f, x[None, :], np.zeros(1), s)
    ok, c = sample_centers(x, lam, view, s, _rng.aux_stream(seed, 12), n)
    ks = ks_statistic(np.sort(np.linalg.norm(c[ok] - x, axis=1) - s), lambda t: cdf_spherical_contact_hom(t, lam, s))
    out.append(_check("spherical contact distance (KS)", ks.passed, **ks.as_dict(), **{"lambda": lam, "s": s}))
    # coverage at the p = 1/2 design point
    lam_half = math.log(2.0) / (4.0 / 3.0 * math.pi * s**3)
    fh = constant(lam_half, m)
    ok, c = sample_centers(x, majorant(fh, x, 2 * s), fh, s, _rng.aux_stream(seed, 13), n, stop_radius=s)
    inside = int(np.sum(ok & (np.linalg.norm(c - x, axis=1) < s)))
    p = coverage_probability(x, fh, s)
    z = binomial_z(inside, n, p)
    out.append(_check("coverage probability", abs(z) <= 3.0, fraction=inside / n, p=p, z=z))
    rng = _rng.aux_stream(seed, 14)
    dirs = np.array([sample_direction(rng) for _ in range(n)])
    chi = octant_chi_square(dirs)
    out.append(_check("direction octant uniformity (chi square)", chi.passed, **chi.as_dict()))
    return out


def _default_dirichlet_problem() -> Problem:
    m = ball_medium()
    return Problem(m, LinearBC(0, 0.5, 0.5), PbmParams(constant(5.0, m), 0.1), DIRICHLET, ConstantBC(0.0))


def solvers_suite(scene: SceneSpec | None = None, seed: int = 0, walks: int = 256) -> list[dict]:
    base = scene.problem() if scene is not None else _default_dirichlet_problem()
    eps = scene.solver.eps if scene is not None else 1e-3
    cfg = SolverConfig(eps=eps, n_walks=walks, seed=seed)
    m = base.medium
    lo, hi = m.bounding_box
    pts = [p for p in (lo + (hi - lo) * t for t in (0.5, 0.3, 0.7)) if m.contains(p)] or [0.5 * (lo + hi)]
    zero = base.with_density(constant(0.0, m))
    dir_zero = Problem(m, base.medium_bc, zero.pbm, DIRICHLET)
    neu_zero = Problem(m, base.medium_bc, zero.pbm, NEUMANN)
    wos = estimate(dir_zero, "wos", pts, cfg)
    same = lambda a, b: all(x.estimate == y.estimate and np.array_equal(x.steps, y.steps) for x, y in zip(a, b))  # noqa: E731
    out = [
        _check("zero density: vwos reproduces wos bit for bit", same(estimate(dir_zero, "vwos", pts, cfg), wos)),
        _check("zero density: vwost reproduces wos bit for bit", same(estimate(neu_zero, "vwost", pts, cfg), wos)),
        _check("zero density: wost reproduces wos bit for bit", same(estimate(neu_zero, "wost", pts, cfg), wos)),
    ]
    # constant data is reproduced exactly by every estimator
    c = 0.7
    cp = Problem(m, ConstantBC(c), base.pbm, DIRICHLET)
    cn = Problem(m, ConstantBC(c), base.pbm, NEUMANN)
    res = estimate(cp, "vwos", pts, cfg) + estimate(cn, "vwost", pts, cfg)
    out.append(_check("constant data returned exactly", all(r.estimate.mean == c and r.estimate.variance_of_mean == 0 for r in res)))
    # maximum principle for VWoS walks
    dp = base if base.particle_bc == DIRICHLET else Problem(m, base.medium_bc, base.pbm, DIRICHLET)
    rng = _rng.aux_stream(seed, 21)
    probe = np.array([closest_point_on_medium(m, p).point for p in lo + (hi - lo) * rng.random((4096, 3))])
    gv = evaluate_many(dp.medium_bc, m, probe)
    hv = evaluate_many(dp.particle_value or dp.medium_bc, m, lo + (hi - lo) * rng.random((4096, 3)))
    g_lo, g_hi = min(gv.min(), hv.min()), max(gv.max(), hv.max())
    vals = [vwos_estimate(dp, pts[0], cfg, _rng.walk_stream(seed, 0, w))[0] for w in range(walks)]
    tol = 1e-9 * max(1.0, abs(g_lo), abs(g_hi))
    out.append(_check("maximum principle", min(vals) >= g_lo - tol and max(vals) <= g_hi + tol, min=min(vals), max=max(vals), data_min=g_lo, data_max=g_hi))
    radii = np.geomspace(1e-6, 1e3, 200)
    ratio = np.array([laplace_kernel_ratio(r) for r in radii])
    out.append(_check("Laplace kernel ratio is one", bool(np.all(np.abs(ratio - 1.0) <= 1e-12)), max_dev=float(np.max(np.abs(ratio - 1.0)))))
    a = np.concatenate([[0.0], np.geomspace(1e-8, 50.0, 200)])
    w = np.array([_screened_weight(v) for v in a])
    out.append(_check("screened weight in (0, 1]", bool(np.all((w > 0) & (w <= 1.0))), min=float(w.min()), max=float(w.max())))
    return out


def memory_suite(scene: SceneSpec | None = None, seed: int = 0, walks: int = 64, max_steps: int = 200) -> list[dict]:
    """Exact conditioning assertions along Python-level walks."""
    if scene is not None:
        m, f, s, eps = scene.medium, scene.density_field, scene.particle_radius, scene.solver.eps
    else:
        m = ball_medium()
        f, s, eps = constant(50.0, m), 0.05, 1e-3
    lam_bar = f.global_max
    lo, hi = m.bounding_box
    rng = _rng.aux_stream(seed, 31)
    violations = 0
    e_matches = True
    samples = 0
    for w in range(walks):
        mem = Memory()
        x = None
        while x is None or not m.contains(x):
            x = lo + (hi - lo) * rng.random(3)
        for k in range(max_steps):
            hit = sample_closest_point_with_memory(x, lam_bar, f, s, mem, m, rng)
            if hit.provenance == Provenance.STOCHASTIC_PARTICLE:
                samples += 1
                c = hit.center
                for o, rho in mem.empty_balls:
                    if np.linalg.norm(c - o) < rho + s:
                        violations += 1
                pc = mem.particle_centers
                if pc.size and np.min(np.linalg.norm(pc - x, axis=1)) < np.linalg.norm(c - x):
                    violations += 1
            if hit.provenance == Provenance.INSIDE_PARTICLE or hit.distance < eps:
                break
            mem.update(x, hit, s)
            e_matches &= len(mem.empty_balls) == k + 1
            x = x + hit.distance * sample_direction(rng)
    out = [
        _check("sampled centers avoid dilated empty balls and known particles", violations == 0, violations=violations, samples=samples),
        _check("empty-ball count equals steps taken", e_matches),
    ]
    mem = Memory()
    mem.add_empty_ball((0, 0, 0), 1.0)
    ok = mem.is_inside_dilated_empty((0, 0, 1.05), 0.1) and not mem.is_inside_dilated_empty((0, 0, 1.2), 0.1)
    ok &= not Memory().is_inside_dilated_empty((0, 0, 0), 0.1)
    out.append(_check("dilated empty-ball containment", ok))
    ml = Memory(MemoryMode.memoryless())
    fin = Memory(MemoryMode.finite(2, 1))
    for k in range(5):
        for mm in (ml, fin):
            mm.add_empty_ball((k, 0, 0), 0.5)
            mm.add_particle((k, 1, 0))
    caps_ok = len(ml.empty_balls) == 0 and ml.particle_centers.shape[0] == 0
    caps_ok &= [float(o[0]) for o, _ in fin.empty_balls] == [3.0, 4.0] and fin.particle_centers.tolist() == [[4.0, 1.0, 0.0]]
    out.append(_check("memory modes keep the most recent entries", caps_ok))
    return out


def validate(suite: str, scene: SceneSpec | None = None, seed: int = 0) -> dict:
    fns = {"distributions": distributions_suite, "solvers": solvers_suite, "memory": memory_suite}
    if suite not in fns:
        raise ValueError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    checks = fns[suite](scene, seed)
    return {"suite": suite, "seed": seed, "pass": all(c["pass"] for c in checks), "checks": checks}
