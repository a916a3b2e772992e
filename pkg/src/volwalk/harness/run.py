"""Method dispatch over an evaluation plane."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .. import _rng
from .. import boundary as bc
from ..geometry import closest_point_on_medium
from ..pbm import sample_configuration
from ..solvers import DIRICHLET, NEUMANN, ConfigError, SolverConfig, ensemble_average, estimate
from .plane import EvalPlane
from .scene import SceneSpec, scene_to_dict

RUN_METHODS = ("wos", "vwos", "wost", "vwost", "ea", "homogenized")
_NEEDS = {"wos": DIRICHLET, "vwos": DIRICHLET, "wost": NEUMANN, "vwost": NEUMANN}


@dataclass
class Histogram:
    """Exact integer histogram: ``counts[k]`` walks had value ``values[k]``."""

    values: np.ndarray
    counts: np.ndarray

    @classmethod
    def of(cls, samples: np.ndarray) -> "Histogram":
        v, c = np.unique(np.asarray(samples, dtype=np.int64), return_counts=True)
        return cls(v, c)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def quantile(self, q: float) -> float:
        if self.total == 0:
            return math.nan
        expanded = np.repeat(self.values, self.counts)
        return float(np.quantile(expanded, q))

    @property
    def median(self) -> float:
        return self.quantile(0.5)

    @property
    def mean(self) -> float:
        return float(np.dot(self.values, self.counts) / self.total) if self.total else math.nan

    def as_dict(self) -> dict:
        return {"values": self.values.tolist(), "counts": self.counts.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Histogram":
        return cls(np.array(d["values"], dtype=np.int64), np.array(d["counts"], dtype=np.int64))


@dataclass
class RunReport:
    """Per-point estimates on a plane plus walk statistics.

    Grid arrays have shape (nv, nu) and hold NaN (or 0 for counts) outside the medium.
    """

    plane: EvalPlane | None
    mask: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    n_walks: np.ndarray
    mean_walk_length: np.ndarray
    mean_E: np.ndarray
    mean_P: np.ndarray
    truncated: np.ndarray
    histograms: dict[str, Histogram] = field(default_factory=dict)
    wall_clock: float = 0.0
    config: dict = field(default_factory=dict)

    @property
    def n_points(self) -> int:
        return int(self.mask.sum())

    @property
    def truncated_total(self) -> int:
        return int(self.truncated.sum())


def _empty_grids(shape):
    nan = lambda: np.full(shape, np.nan)  # noqa: E731
    return nan(), nan(), np.zeros(shape, dtype=np.int64), nan(), nan(), nan(), np.zeros(shape, dtype=np.int64)


def check_method(scene: SceneSpec, method: str, configs: int | None = None, n_walks: int | None = None) -> None:
    """Reject incompatible method / boundary-condition pairs before any compute."""
    if method not in RUN_METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from {', '.join(RUN_METHODS)}")
    need = _NEEDS.get(method)
    if need is not None and scene.particle_bc != need:
        raise ConfigError(f"method {method} requires {need} particles, scene has {scene.particle_bc}")
    if method == "ea":
        if configs is None or configs < 1:
            raise ConfigError("method ea needs a positive number of configurations")
        if n_walks is not None and n_walks % configs:
            raise ConfigError(f"walks ({n_walks}) must be a multiple of configs ({configs}) for ea")


def run(
    scene: SceneSpec,
    method: str,
    plane: EvalPlane,
    cfg: SolverConfig | None = None,
    threads: int = 1,
    configs: int | None = None,
) -> RunReport:
    """Evaluate every in-domain grid point of ``plane`` with ``cfg.n_walks`` walks.

    wos and wost run on the single configuration drawn from configuration
    stream 0; ea averages ``configs`` configurations with
    ``cfg.n_walks / configs`` walks each. Point (i, j) has id ``j * nu + i``.
    """
    cfg = cfg or scene.solver
    check_method(scene, method, configs, cfg.n_walks)
    cfg.check(scene.particle_radius)
    problem = scene.problem()
    mask = plane.mask(scene.medium)
    pts_grid = plane.points()
    jj, ii = np.nonzero(mask)
    pts = pts_grid[jj, ii]
    ids = (jj * plane.nu + ii).tolist()
    mean, var, nw, mwl, me, mp, trunc = _empty_grids(plane.shape)
    t0 = time.perf_counter()
    hist_steps, hist_e, hist_p = [], [], []
    if method == "ea":
        res = ensemble_average(problem, pts, configs, cfg.n_walks // configs, cfg, threads=threads, point_ids=ids)
        for k, (j, i) in enumerate(zip(jj, ii)):
            e = res.estimates[k]
            mean[j, i], var[j, i], nw[j, i], trunc[j, i] = e.mean, e.variance_of_mean, e.n_walks, e.truncated_walk_count
            steps = res.steps[k]
            mwl[j, i] = steps.mean() if steps.size else math.nan
            me[j, i] = mp[j, i] = 0.0
            hist_steps.append(steps)
            hist_e.append(np.zeros(steps.size, dtype=np.int64))
            hist_p.append(np.zeros(steps.size, dtype=np.int64))
    else:
        configuration = None
        if method in ("wos", "wost"):
            configuration = sample_configuration(scene.medium, problem.density, problem.s, _rng.config_stream(cfg.seed, 0))
        results = estimate(problem, method, pts, cfg, threads=threads, configuration=configuration, point_ids=ids)
        for k, (j, i) in enumerate(zip(jj, ii)):
            r = results[k]
            e = r.estimate
            mean[j, i], var[j, i], nw[j, i], trunc[j, i] = e.mean, e.variance_of_mean, e.n_walks, e.truncated_walk_count
            mwl[j, i] = r.mean_walk_length
            me[j, i] = r.empty.mean()
            mp[j, i] = r.particles.mean()
            hist_steps.append(r.steps)
            hist_e.append(r.empty)
            hist_p.append(r.particles)
    wall = time.perf_counter() - t0
    cat = lambda xs: np.concatenate(xs) if xs else np.zeros(0, dtype=np.int64)  # noqa: E731
    histograms = {
        "walk_length": Histogram.of(cat(hist_steps)),
        "empty_balls": Histogram.of(cat(hist_e)),
        "sampled_particles": Histogram.of(cat(hist_p)),
    }
    echo = {
        "method": method,
        "plane": str(plane),
        "threads": threads,
        "configs": configs,
        "solver": {
            "eps": cfg.eps,
            "max_steps": cfg.max_steps,
            "walks": cfg.n_walks,
            "seed": cfg.seed,
            "memory": str(cfg.memory_mode),
            "r_min": cfg.star_clamp,
        },
        "scene": _scene_echo(scene),
    }
    return RunReport(plane, mask, mean, var, nw, mwl, me, mp, trunc, histograms, wall, echo)


def _scene_echo(scene: SceneSpec) -> dict:
    try:
        return scene_to_dict(scene)
    except ValueError:
        return {"name": scene.name}


def value_range(scene: SceneSpec, plane: EvalPlane) -> tuple[float, float]:
    """Range of the boundary data seen by the plane: g at the closest medium-boundary
    point of every grid point, plus the particle value for Dirichlet particles."""
    pts = plane.points().reshape(-1, 3)
    med = scene.medium
    q = np.array([closest_point_on_medium(med, p).point for p in pts])
    vals = [bc.evaluate_many(scene.medium_bc, med, q)]
    if scene.particle_bc == DIRICHLET:
        h = scene.particle_value if scene.particle_value is not None else scene.medium_bc
        vals.append(bc.evaluate_many(h, med, pts))
    v = np.concatenate(vals)
    return float(v.min()), float(v.max())
