"""Command-line entry point: ``volwalk solve | compare | validate | stats``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from ..memory import MemoryMode
from ..pbm import MajorantViolation
from ..solvers import ConfigError
from .compare import compare
from .io import REPORT_NAME, load_run, read_report, write_outputs
from .plane import EvalPlane, PlaneError
from .run import RUN_METHODS, check_method, run, value_range
from .scene import SceneError, load_scene
from .validate import SUITES, validate

log = logging.getLogger("volwalk")


def _solve(args) -> int:
    scene = load_scene(args.scene)
    cfg = scene.solver
    overrides = {}
    if args.walks is not None:
        overrides["n_walks"] = args.walks
    if args.eps is not None:
        overrides["eps"] = args.eps
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.memory is not None:
        overrides["memory_mode"] = MemoryMode.parse(args.memory)
    if args.max_steps is not None:
        overrides["max_steps"] = args.max_steps
    cfg = replace(cfg, **overrides)
    cfg.check(scene.particle_radius)
    plane = EvalPlane.parse(args.plane)
    check_method(scene, args.method, args.configs, cfg.n_walks)
    log.info("solving %s with %s on a %dx%d plane, %d walks per point", scene.name or args.scene, args.method, plane.nu, plane.nv, cfg.n_walks)
    report = run(scene, args.method, plane, cfg, threads=args.threads, configs=args.configs)
    paths = write_outputs(report, args.out, value_range(scene, plane))
    print(
        f"{report.n_points} points, {int(report.n_walks.sum())} walks, {report.truncated_total} truncated, "
        f"{report.wall_clock:.2f} s; wrote {', '.join(str(p) for p in paths.values())}"
    )
    return 0


def _compare(args) -> int:
    a, b = load_run(args.a), load_run(args.b)
    result = compare(a, b, z=args.z)
    text = json.dumps(result.as_dict(), indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def _validate(args) -> int:
    scene = load_scene(args.scene) if args.scene else None
    suites = SUITES if args.suite == "all" else (args.suite,)
    results = [validate(s, scene, args.seed) for s in suites]
    out = results[0] if len(results) == 1 else {"pass": all(r["pass"] for r in results), "suites": results}
    text = json.dumps(out, indent=2, default=float)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0 if out["pass"] else 1


def _stats(args) -> int:
    p = Path(args.report)
    rep = read_report(p / REPORT_NAME if p.is_dir() else p)
    cfg = rep["config"]
    print(f"method {cfg['method']}, memory {cfg['solver']['memory']}, {rep['n_points']} points, {rep['total_walks']} walks")
    print(f"wall clock {rep['wall_clock_seconds']:.2f} s, truncated walks {rep['truncated_walks']}")
    print(f"{'statistic':<20}{'mean':>10}{'median':>10}{'p90':>10}{'max':>10}")
    for name, h in rep["histograms"].items():
        if h.total == 0:
            continue
        print(f"{name:<20}{h.mean:>10.2f}{h.median:>10.1f}{h.quantile(0.9):>10.1f}{int(h.values.max()):>10d}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="volwalk", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="estimate the mean solution on a slice plane")
    sp.add_argument("--scene", required=True, help="scene TOML file")
    sp.add_argument("--method", required=True, choices=RUN_METHODS)
    sp.add_argument("--plane", required=True, help='"ox,oy,oz;ux,uy,uz;vx,vy,vz;nu,nv"')
    sp.add_argument("--walks", type=int, help="walks per point (overrides the scene)")
    sp.add_argument("--eps", type=float, help="epsilon-shell width (overrides the scene)")
    sp.add_argument("--seed", type=int, help="master seed (overrides the scene)")
    sp.add_argument("--memory", help="full | finite:KE,KP | memoryless")
    sp.add_argument("--max-steps", type=int, dest="max_steps")
    sp.add_argument("--configs", type=int, help="configurations for method ea (must divide --walks)")
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(fn=_solve)

    cp = sub.add_parser("compare", help="error metrics between two runs")
    cp.add_argument("a", help="run directory or results CSV")
    cp.add_argument("b", help="run directory or results CSV")
    cp.add_argument("--z", type=float, default=3.0, help="z threshold for exceedance counts")
    cp.add_argument("--out", help="write metrics JSON here")
    cp.set_defaults(fn=_compare)

    vp = sub.add_parser("validate", help="run a statistical validation suite")
    vp.add_argument("--suite", required=True, choices=SUITES + ("all",))
    vp.add_argument("--scene", help="scene TOML file (defaults to built-in settings)")
    vp.add_argument("--seed", type=int, default=0)
    vp.add_argument("--out", help="write verdicts JSON here")
    vp.set_defaults(fn=_validate)

    tp = sub.add_parser("stats", help="summarise walk statistics of a run")
    tp.add_argument("report", help="run directory or report JSON")
    tp.set_defaults(fn=_stats)
    return ap


def _join_plane(argv: list[str]) -> list[str]:
    # plane strings usually start with a minus sign, which argparse would read as a flag
    out = []
    it = iter(argv)
    for a in it:
        if a == "--plane":
            nxt = next(it, None)
            out.append(a if nxt is None else f"--plane={nxt}")
        else:
            out.append(a)
    return out


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(_join_plane(argv))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except (ConfigError, SceneError, PlaneError, MajorantViolation, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
