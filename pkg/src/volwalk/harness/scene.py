"""Scene files: TOML description of medium, density, particles, boundary data and solver defaults.

Example::

    [medium]
    primitives = [{type = "sphere", center = [0.0, 0.0, 0.0], radius = 1.0}]

    [density]
    kind = "constant"          # or "gaussian_sum" (terms = [...]) or "grid" (path = "...")
    value = 5.0

    [particles]
    radius = 0.1
    boundary = "dirichlet"     # or "neumann"
    value = {kind = "constant", value = 0.0}

    [boundary]
    kind = "linear"
    axis = 0
    scale = 0.5
    offset = 0.5

    [solver]
    eps = 0.001
    walks = 256
    seed = 0
    memory = "full"
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .. import boundary as bc
from ..density import Constant, DensityField, GaussianSum, GaussianTerm, TrilinearGrid
from ..geometry import Box, MediumShape, Sphere, TriangleSoup
from ..memory import MemoryMode
from ..solvers import DIRICHLET, NEUMANN, ConfigError, PbmParams, Problem, SolverConfig


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class SceneSpec:
    medium: MediumShape
    density: Constant | GaussianSum | TrilinearGrid
    particle_radius: float
    medium_bc: bc.BoundaryFunction
    particle_bc: str = DIRICHLET
    particle_value: bc.BoundaryFunction | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    name: str = ""

    def __post_init__(self):
        if self.particle_bc not in (DIRICHLET, NEUMANN):
            raise SceneError(f"particle boundary must be {DIRICHLET!r} or {NEUMANN!r}")
        if not self.particle_radius > 0:
            raise SceneError("particle radius must be positive")
        try:
            self.solver.check(self.particle_radius)
        except ConfigError as e:
            raise SceneError(str(e)) from None

    @property
    def density_field(self) -> DensityField:
        return DensityField(self.density, self.medium)

    def problem(self) -> Problem:
        return Problem(
            self.medium,
            self.medium_bc,
            PbmParams(self.density_field, self.particle_radius),
            self.particle_bc,
            self.particle_value,
        )


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


def _vec(v, what: str) -> tuple[float, float, float]:
    try:
        a = [float(c) for c in v]
    except TypeError:
        raise SceneError(f"{what} must be a list of 3 numbers") from None
    if len(a) != 3:
        raise SceneError(f"{what} must have 3 components")
    return tuple(a)


def _parse_medium(d: dict) -> MediumShape:
    prims = []
    for k, p in enumerate(d.get("primitives", [])):
        kind = p.get("type")
        if kind == "sphere":
            prims.append(Sphere(_vec(p["center"], f"primitive {k} center"), float(p["radius"])))
        elif kind == "box":
            prims.append(Box(_vec(p["min"], f"primitive {k} min"), _vec(p["max"], f"primitive {k} max")))
        else:
            raise SceneError(f"primitive {k}: unknown type {kind!r} (sphere or box)")
    mesh = None
    if "mesh" in d:
        mesh = TriangleSoup(np.array(d["mesh"]["vertices"], dtype=float), np.array(d["mesh"]["triangles"], dtype=int))
    return MediumShape(tuple(prims), mesh)


def _parse_density(d: dict, base_dir: Path):
    kind = d.get("kind")
    if kind == "constant":
        return Constant(float(d["value"]))
    if kind == "gaussian_sum":
        terms = tuple(
            GaussianTerm(float(t["amplitude"]), _vec(t["center"], "gaussian center"), float(t["width"]))
            for t in d.get("terms", [])
        )
        return GaussianSum(terms)
    if kind == "grid":
        path = str(d["path"])
        full = Path(path) if Path(path).is_absolute() else base_dir / path
        g = TrilinearGrid.load(full)
        return TrilinearGrid(g.values, g.lo, g.hi, path=path)
    raise SceneError(f"unknown density kind {kind!r} (constant, gaussian_sum or grid)")


def _parse_solver(d: dict) -> SolverConfig:
    known = {"eps", "max_steps", "walks", "seed", "memory", "r_min"}
    extra = set(d) - known
    if extra:
        raise SceneError(f"unknown solver keys {sorted(extra)}")
    defaults = SolverConfig()
    return SolverConfig(
        eps=float(d.get("eps", defaults.eps)),
        max_steps=int(d.get("max_steps", defaults.max_steps)),
        n_walks=int(d.get("walks", defaults.n_walks)),
        seed=int(d.get("seed", defaults.seed)),
        memory_mode=MemoryMode.parse(d.get("memory", "full")),
        r_min=float(d["r_min"]) if "r_min" in d else None,
    )


def parse_scene(text: str, base_dir: str | Path = ".", name: str = "") -> SceneSpec:
    try:
        d = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise SceneError(f"invalid TOML: {e}") from None
    for section in ("medium", "density", "particles", "boundary"):
        if section not in d:
            raise SceneError(f"missing [{section}] section")
    parts = d["particles"]
    try:
        return SceneSpec(
            medium=_parse_medium(d["medium"]),
            density=_parse_density(d["density"], Path(base_dir)),
            particle_radius=float(parts["radius"]),
            medium_bc=bc.from_dict(d["boundary"]),
            particle_bc=str(parts.get("boundary", DIRICHLET)),
            particle_value=bc.from_dict(parts["value"]) if "value" in parts else None,
            solver=_parse_solver(d.get("solver", {})),
            name=str(d.get("name", name)),
        )
    except (KeyError, TypeError) as e:
        raise SceneError(f"malformed scene: {e!r}") from None
    except ValueError as e:
        if isinstance(e, SceneError):
            raise
        raise SceneError(str(e)) from None


def load_scene(path: str | Path) -> SceneSpec:
    path = Path(path)
    return parse_scene(path.read_text(), base_dir=path.parent, name=path.stem)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def scene_to_dict(scene: SceneSpec) -> dict:
    prims = []
    for p in scene.medium.primitives:
        if isinstance(p, Sphere):
            prims.append({"type": "sphere", "center": list(p.center), "radius": p.radius})
        else:
            prims.append({"type": "box", "min": list(p.min), "max": list(p.max)})
    medium: dict = {"primitives": prims}
    if scene.medium.mesh is not None:
        medium["mesh"] = {
            "vertices": scene.medium.mesh.vertices.tolist(),
            "triangles": scene.medium.mesh.triangles.tolist(),
        }
    v = scene.density
    if isinstance(v, Constant):
        density = {"kind": "constant", "value": v.value}
    elif isinstance(v, GaussianSum):
        density = {
            "kind": "gaussian_sum",
            "terms": [{"amplitude": t.amplitude, "center": list(t.center), "width": t.width} for t in v.terms],
        }
    else:
        if v.path is None:
            raise SceneError("grid densities need a file path to be serialized")
        density = {"kind": "grid", "path": v.path}
    particles: dict = {"radius": scene.particle_radius, "boundary": scene.particle_bc}
    if scene.particle_value is not None:
        particles["value"] = bc.to_dict(scene.particle_value)
    s = scene.solver
    solver: dict = {"eps": s.eps, "max_steps": s.max_steps, "walks": s.n_walks, "seed": s.seed, "memory": str(s.memory_mode)}
    if s.r_min is not None:
        solver["r_min"] = s.r_min
    out: dict = {}
    if scene.name:
        out["name"] = scene.name
    out.update(medium=medium, density=density, particles=particles, boundary=bc.to_dict(scene.medium_bc), solver=solver)
    return out


def serialize_scene(scene: SceneSpec) -> str:
    return tomli_w.dumps(scene_to_dict(scene))


def save_scene(scene: SceneSpec, path: str | Path) -> None:
    Path(path).write_text(serialize_scene(scene))
