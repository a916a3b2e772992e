"""Run outputs: CSV table, PFM mean image, PPM preview and JSON report."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .plane import EvalPlane
from .run import Histogram, RunReport

CSV_HEADER = ["i", "j", "x", "y", "z", "mean", "variance_of_mean", "n_walks", "mean_walk_length", "mean_E", "mean_P", "truncated"]
CSV_NAME = "results.csv"
PFM_NAME = "mean.pfm"
PPM_NAME = "mean.ppm"
REPORT_NAME = "report.json"


def _f(v: float) -> str:
    return repr(float(v))


def write_csv(report: RunReport, path: str | Path) -> None:
    pts = report.plane.points()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for j, i in zip(*np.nonzero(report.mask)):
            x = pts[j, i]
            w.writerow(
                [
                    int(i),
                    int(j),
                    _f(x[0]),
                    _f(x[1]),
                    _f(x[2]),
                    _f(report.mean[j, i]),
                    _f(report.variance[j, i]),
                    int(report.n_walks[j, i]),
                    _f(report.mean_walk_length[j, i]),
                    _f(report.mean_E[j, i]),
                    _f(report.mean_P[j, i]),
                    int(report.truncated[j, i]),
                ]
            )


def read_csv(path: str | Path, plane: EvalPlane | None = None) -> RunReport:
    """Load a results table; without ``plane`` the grid shape is the bounding index range."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and list(rows[0].keys()) != CSV_HEADER:
        raise ValueError(f"{path}: unexpected CSV header")
    if plane is not None:
        shape = plane.shape
    else:
        shape = (max((int(r["j"]) for r in rows), default=-1) + 1, max((int(r["i"]) for r in rows), default=-1) + 1)
    mask = np.zeros(shape, dtype=bool)
    fl = lambda: np.full(shape, np.nan)  # noqa: E731
    mean, var, mwl, me, mp = fl(), fl(), fl(), fl(), fl()
    nw = np.zeros(shape, dtype=np.int64)
    tr = np.zeros(shape, dtype=np.int64)
    for r in rows:
        i, j = int(r["i"]), int(r["j"])
        mask[j, i] = True
        mean[j, i] = float(r["mean"])
        var[j, i] = float(r["variance_of_mean"])
        nw[j, i] = int(r["n_walks"])
        mwl[j, i] = float(r["mean_walk_length"])
        me[j, i] = float(r["mean_E"])
        mp[j, i] = float(r["mean_P"])
        tr[j, i] = int(r["truncated"])
    return RunReport(plane, mask, mean, var, nw, mwl, me, mp, tr)


def write_pfm(image: np.ndarray, path: str | Path) -> None:
    """Grayscale PFM; row 0 of ``image`` is the bottom scanline."""
    img = np.asarray(image, dtype="<f4")
    nv, nu = img.shape
    with open(path, "wb") as fh:
        fh.write(f"Pf\n{nu} {nv}\n-1.0\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())


def read_pfm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"Pf":
        raise ValueError(f"{path}: not a grayscale PFM")
    nu, nv = (int(t) for t in parts[1].split())
    scale = float(parts[2])
    dtype = "<f4" if scale < 0 else ">f4"
    return np.frombuffer(parts[3], dtype=dtype, count=nu * nv).reshape(nv, nu).astype(np.float32)


def tone_map(image: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Linear map [lo, hi] -> [0, 255]; NaN becomes 0."""
    img = np.asarray(image, dtype=float)
    if hi > lo:
        t = (img - lo) / (hi - lo)
    else:
        t = np.full_like(img, 0.5)
    out = np.clip(np.rint(255.0 * np.nan_to_num(t, nan=0.0)), 0, 255).astype(np.uint8)
    out[~np.isfinite(img)] = 0
    return out


def write_ppm(image: np.ndarray, path: str | Path, lo: float, hi: float) -> None:
    """Gray P6 preview; ``image`` row 0 is drawn at the bottom."""
    g = tone_map(image, lo, hi)[::-1]
    nv, nu = g.shape
    rgb = np.repeat(g[:, :, None], 3, axis=2)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{nu} {nv}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())


def read_ppm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError(f"{path}: not a P6 PPM")
    nu, nv = (int(t) for t in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8, count=nu * nv * 3).reshape(nv, nu, 3)


def _finite_or_none(v: float):
    return None if v is None or not math.isfinite(v) else float(v)


def report_dict(report: RunReport, value_range: tuple[float, float] | None = None) -> dict:
    h = report.histograms
    summary = {
        name: {
            "total": hist.total,
            "mean": _finite_or_none(hist.mean),
            "median": _finite_or_none(hist.median),
            "p90": _finite_or_none(hist.quantile(0.9)),
            "max": int(hist.values.max()) if hist.total else None,
        }
        for name, hist in h.items()
    }
    out = {
        "config": report.config,
        "wall_clock_seconds": report.wall_clock,
        "n_points": report.n_points,
        "total_walks": int(report.n_walks.sum()),
        "truncated_walks": report.truncated_total,
        "summary": summary,
        "histograms": {name: hist.as_dict() for name, hist in h.items()},
    }
    if value_range is not None:
        out["preview_range"] = list(value_range)
    return out


def write_report(report: RunReport, path: str | Path, value_range: tuple[float, float] | None = None) -> None:
    Path(path).write_text(json.dumps(report_dict(report, value_range), indent=2) + "\n")


def read_report(path: str | Path) -> dict:
    d = json.loads(Path(path).read_text())
    d["histograms"] = {k: Histogram.from_dict(v) for k, v in d.get("histograms", {}).items()}
    return d


def write_outputs(report: RunReport, out_dir: str | Path, value_range: tuple[float, float]) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / CSV_NAME, "pfm": out / PFM_NAME, "ppm": out / PPM_NAME, "report": out / REPORT_NAME}
    write_csv(report, paths["csv"])
    write_pfm(report.mean, paths["pfm"])
    write_ppm(report.mean, paths["ppm"], *value_range)
    write_report(report, paths["report"], value_range)
    return paths


def load_run(path: str | Path) -> RunReport:
    """Load a run from an output directory (CSV plus report plane) or a bare CSV file."""
    p = Path(path)
    if p.is_dir():
        rep = read_report(p / REPORT_NAME)
        plane = EvalPlane.parse(rep["config"]["plane"])
        r = read_csv(p / CSV_NAME, plane)
        r.histograms = rep["histograms"]
        r.config = rep["config"]
        r.wall_clock = rep["wall_clock_seconds"]
        return r
    return read_csv(p)
