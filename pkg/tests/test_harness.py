from __future__ import annotations

import json
import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from volwalk.harness.cli import main
from volwalk.harness.compare import compare, compare_arrays, z_exceed_bound
from volwalk.harness.io import (
    CSV_HEADER,
    load_run,
    read_csv,
    read_pfm,
    read_ppm,
    tone_map,
    write_outputs,
    write_pfm,
)
from volwalk.harness.plane import EvalPlane, PlaneError
from volwalk.harness.run import Histogram, RunReport, check_method, run, value_range
from volwalk.harness.scene import SceneError, load_scene, parse_scene, serialize_scene
from volwalk.harness.stats import binomial_z, ks_statistic, octant_chi_square
from volwalk.harness.validate import validate
from volwalk.density import Constant
from volwalk.solvers import ConfigError, SolverConfig

SCENES = Path(__file__).resolve().parent.parent / "scenes"
BUNDLED = sorted(SCENES.glob("*.toml"))
SMALL_PLANE = "-0.9,-0.9,0;1.8,0,0;0,1.8,0;5,5"


def scene(name: str):
    return load_scene(SCENES / f"{name}.toml")


class TestScene:
    @pytest.mark.parametrize("path", BUNDLED, ids=lambda p: p.stem)
    def test_round_trip(self, path):
        s = load_scene(path)
        text = serialize_scene(s)
        again = parse_scene(text, base_dir=path.parent, name=path.stem)
        assert again == s
        assert serialize_scene(again) == text

    def test_bundled_scenes_present(self):
        assert len(BUNDLED) >= 6

    def test_eps_too_large(self):
        text = (SCENES / "ball_dirichlet.toml").read_text().replace("eps = 0.001", "eps = 0.02")
        with pytest.raises(SceneError, match="tenth"):
            parse_scene(text)

    def test_missing_section(self):
        with pytest.raises(SceneError, match="density"):
            parse_scene("[medium]\nprimitives = [{ type = 'sphere', center = [0, 0, 0], radius = 1.0 }]\n")

    def test_unknown_solver_key(self):
        text = (SCENES / "ball_dirichlet.toml").read_text() + "tolerance = 3\n"
        with pytest.raises(SceneError):
            parse_scene(text)

    def test_bad_particle_boundary(self):
        text = (SCENES / "ball_dirichlet.toml").read_text().replace('boundary = "dirichlet"', 'boundary = "robin"')
        with pytest.raises(SceneError):
            parse_scene(text)

    def test_invalid_toml(self):
        with pytest.raises(SceneError, match="TOML"):
            parse_scene("[medium\n")

    def test_grid_density_path_resolves(self):
        s = scene("grid_cloud")
        assert s.density_field.global_max > 0


class TestPlane:
    def test_parse_and_str(self):
        p = EvalPlane.parse("-1,-1,0;2,0,0;0,2,0;3,2")
        assert p.shape == (2, 3)
        assert EvalPlane.parse(str(p)) == p

    def test_points(self):
        p = EvalPlane.parse("-1,-1,0;2,0,0;0,2,0;3,2")
        pts = p.points()
        assert pts.shape == (2, 3, 3)
        npt.assert_allclose(pts[0, 0], (-1, -1, 0))
        npt.assert_allclose(pts[1, 2], (1, 1, 0))
        npt.assert_allclose(p.point(1, 0), (0, -1, 0))
        assert p.point_id(2, 1) == 5

    @pytest.mark.parametrize(
        "text", ["1,2,3", "0,0,0;1,0,0;2,0,0;4,4", "0,0,0;1,0,0;0,1,0;1,4", "0,0,0;1,0,0;0,1,0;a,b", "0,0;1,0,0;0,1,0;4,4"]
    )
    def test_rejects(self, text):
        with pytest.raises(PlaneError):
            EvalPlane.parse(text)

    def test_mask(self):
        p = EvalPlane.parse("-1.2,-1.2,0;2.4,0,0;0,2.4,0;3,3")
        m = p.mask(scene("ball_dirichlet").medium)
        npt.assert_array_equal(m, [[False, False, False], [False, True, False], [False, False, False]])


class TestStats:
    def test_ks_null_passes(self):
        x = np.sort(np.random.default_rng(0).random(100_000))
        assert ks_statistic(x, lambda t: t).passed

    def test_ks_shift_fails(self):
        x = np.sort(np.random.default_rng(1).random(10_000) + 0.05)
        assert not ks_statistic(x, lambda t: np.clip(t, 0, 1)).passed

    def test_ks_scaling(self):
        x = np.sort(np.random.default_rng(2).random(10_000))
        assert ks_statistic(x, lambda t: t).D < 3 / math.sqrt(10_000)

    def test_ks_matches_scipy(self):
        x = np.sort(np.random.default_rng(3).normal(size=500))
        assert ks_statistic(x, stats.norm.cdf).D == pytest.approx(stats.kstest(x, "norm").statistic, rel=1e-12)

    def test_ks_unsorted(self):
        with pytest.raises(ValueError, match="sorted"):
            ks_statistic(np.random.default_rng(4).random(200), lambda t: t)

    def test_chi_square(self):
        rng = np.random.default_rng(5)
        d = rng.normal(size=(8000, 3))
        assert octant_chi_square(d).passed
        assert not octant_chi_square(np.abs(d)).passed

    def test_binomial_z(self):
        assert binomial_z(50, 100, 0.5) == 0.0
        assert binomial_z(60, 100, 0.5) == pytest.approx(2.0)


class TestCompare:
    def setup_method(self):
        rng = np.random.default_rng(6)
        self.mean = rng.random((4, 5))
        self.mean[0, 0] = np.nan
        self.var = np.full((4, 5), 1e-4)

    def test_self_is_zero(self):
        c = compare_arrays(self.mean, self.var, self.mean, self.var)
        assert (c.mae, c.rmse, c.max_abs, c.z_exceed_count) == (0.0, 0.0, 0.0, 0)
        assert c.n_points == 19

    def test_one_shifted_point(self):
        b = self.mean.copy()
        b[2, 3] += 0.25
        c = compare_arrays(self.mean, self.var, b, self.var)
        assert c.max_abs == pytest.approx(0.25)
        assert c.z_exceed_count == 1

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            compare_arrays(self.mean, self.var, self.mean[:3], self.var[:3])

    def test_domain_mismatch(self):
        b = self.mean.copy()
        b[1, 1] = np.nan
        with pytest.raises(ValueError):
            compare_arrays(self.mean, self.var, b, self.var)

    def test_bound(self):
        assert [z_exceed_bound(n) for n in (9, 100, 1000, 4096)] == [1, 3, 9, 22]

    @settings(max_examples=30)
    @given(st.integers(1, 5000))
    def test_bound_covers_expectation(self, n):
        assert z_exceed_bound(n) >= n * 2 * stats.norm.sf(3) - 1


class TestHistogram:
    def test_summary(self):
        h = Histogram.of(np.array([1, 1, 2, 3, 10]))
        assert h.total == 5 and h.median == 2 and h.mean == pytest.approx(3.4)
        assert Histogram.from_dict(h.as_dict()).as_dict() == h.as_dict()


class TestRun:
    def test_constant_data(self):
        s = scene("constant_data")
        rep = run(s, "vwos", EvalPlane.parse(SMALL_PLANE))
        vals = rep.mean[rep.mask]
        assert np.all(vals == 0.7)
        assert np.all(rep.variance[rep.mask] == 0.0)

    def test_zero_density_matches_wos(self):
        s = scene("ball_dirichlet")
        s = replace(s, density=Constant(0.0))
        plane = EvalPlane.parse(SMALL_PLANE)
        cfg = replace(s.solver, n_walks=16)
        a, b = run(s, "vwos", plane, cfg), run(s, "wos", plane, cfg)
        npt.assert_array_equal(a.mean, b.mean)
        npt.assert_array_equal(a.variance, b.variance)

    def test_walk_counts(self):
        s = scene("ball_dirichlet")
        rep = run(s, "vwos", EvalPlane.parse(SMALL_PLANE), replace(s.solver, n_walks=8))
        assert int(rep.n_walks.sum()) == 8 * rep.n_points
        assert rep.histograms["walk_length"].total == 8 * rep.n_points

    def test_ea_walks(self):
        s = scene("ball_dirichlet")
        rep = run(s, "ea", EvalPlane.parse(SMALL_PLANE), replace(s.solver, n_walks=8), configs=4)
        assert int(rep.n_walks.sum()) == 8 * rep.n_points

    @pytest.mark.parametrize(
        "name, method, configs, walks",
        [("ball_dirichlet", "vwost", None, 8), ("box_neumann", "vwos", None, 8), ("ball_dirichlet", "ea", None, 8), ("ball_dirichlet", "ea", 3, 8), ("ball_dirichlet", "rk4", None, 8)],
    )
    def test_rejected_before_compute(self, name, method, configs, walks):
        with pytest.raises(ConfigError):
            check_method(scene(name), method, configs, walks)

    def test_value_range(self):
        lo, hi = value_range(scene("ball_dirichlet"), EvalPlane.parse(SMALL_PLANE))
        assert lo == pytest.approx(0.0, abs=1e-12)
        assert 0.5 < hi <= 1.0


class TestIo:
    def test_outputs(self, tmp_path):
        s = scene("ball_dirichlet")
        plane = EvalPlane.parse(SMALL_PLANE)
        rep = run(s, "vwos", plane, replace(s.solver, n_walks=8))
        paths = write_outputs(rep, tmp_path, value_range(s, plane))
        header = paths["csv"].read_text().splitlines()[0]
        assert header.split(",") == CSV_HEADER
        pfm = read_pfm(paths["pfm"])
        assert pfm.shape == (5, 5)
        npt.assert_array_equal(np.isnan(pfm), ~rep.mask)
        npt.assert_allclose(pfm[rep.mask], rep.mean[rep.mask].astype(np.float32))
        assert paths["pfm"].read_bytes().startswith(b"Pf\n5 5\n-1.0\n")
        ppm = read_ppm(paths["ppm"])
        assert ppm.shape == (5, 5, 3)
        # the preview is stored top row first
        npt.assert_array_equal(ppm[::-1, :, 0][~rep.mask], 0)
        report = json.loads(paths["report"].read_text())
        assert report["total_walks"] == 8 * rep.n_points
        assert report["config"]["method"] == "vwos"
        back = load_run(tmp_path)
        npt.assert_array_equal(back.mean, rep.mean)
        npt.assert_array_equal(back.n_walks, rep.n_walks)
        assert compare(back, rep).max_abs == 0.0

    def test_csv_without_plane(self, tmp_path):
        s = scene("ball_dirichlet")
        rep = run(s, "vwos", EvalPlane.parse(SMALL_PLANE), replace(s.solver, n_walks=4))
        write_outputs(rep, tmp_path, (0.0, 1.0))
        back = read_csv(tmp_path / "results.csv")
        assert back.n_points == rep.n_points

    def test_byte_determinism(self, tmp_path):
        s = scene("box_neumann")
        plane = EvalPlane.parse("-0.8,-0.8,0.1;1.6,0,0;0,1.6,0;4,3")
        cfg = replace(s.solver, n_walks=8)
        a = write_outputs(run(s, "vwost", plane, cfg, threads=1), tmp_path / "a", (0, 1))
        b = write_outputs(run(s, "vwost", plane, cfg, threads=3), tmp_path / "b", (0, 1))
        for k in ("csv", "pfm", "ppm"):
            assert a[k].read_bytes() == b[k].read_bytes()

    def test_tone_map(self):
        img = np.array([[0.0, 0.5, 1.0, np.nan]])
        npt.assert_array_equal(tone_map(img, 0.0, 1.0), [[0, 128, 255, 0]])
        npt.assert_array_equal(tone_map(np.array([[2.0]]), 2.0, 2.0), [[128]])

    def test_pfm_round_trip(self, tmp_path):
        img = np.random.default_rng(7).random((3, 4)).astype(np.float32)
        write_pfm(img, tmp_path / "x.pfm")
        npt.assert_array_equal(read_pfm(tmp_path / "x.pfm"), img)


class TestValidate:
    @pytest.mark.parametrize("suite", ["distributions", "solvers", "memory"])
    def test_default_suites_pass(self, suite):
        out = validate(suite, seed=0)
        assert out["pass"], [c for c in out["checks"] if not c["pass"]]

    def test_zero_density_scene_passes_solvers(self):
        s = replace(scene("ball_dirichlet"), density=Constant(0.0))
        assert validate("solvers", s, seed=1)["pass"]

    def test_unknown_suite(self):
        with pytest.raises(ValueError):
            validate("geometry")


class TestCli:
    def test_solve_compare_stats(self, tmp_path, capsys):
        args = ["--scene", str(SCENES / "ball_dirichlet.toml"), "--plane", SMALL_PLANE, "--walks", "8"]
        assert main(["solve", *args, "--method", "vwos", "--out", str(tmp_path / "v")]) == 0
        assert main(["solve", *args, "--method", "ea", "--configs", "4", "--out", str(tmp_path / "e")]) == 0
        assert (tmp_path / "v" / "results.csv").exists()
        capsys.readouterr()
        assert main(["compare", str(tmp_path / "v"), str(tmp_path / "e"), "--out", str(tmp_path / "c.json")]) == 0
        metrics = json.loads(capsys.readouterr().out)
        assert set(metrics) >= {"mae", "rmse", "max_abs", "z_exceed_count"}
        assert main(["stats", str(tmp_path / "v")]) == 0
        assert "walk_length" in capsys.readouterr().out

    def test_bad_method_bc(self, tmp_path, capsys):
        rc = main(["solve", "--scene", str(SCENES / "ball_dirichlet.toml"), "--method", "vwost", "--plane", SMALL_PLANE, "--out", str(tmp_path)])
        assert rc == 2
        assert "requires neumann" in capsys.readouterr().err
        assert not (tmp_path / "results.csv").exists()

    def test_bad_plane(self, tmp_path, capsys):
        rc = main(["solve", "--scene", str(SCENES / "ball_dirichlet.toml"), "--method", "vwos", "--plane", "1,2", "--out", str(tmp_path)])
        assert rc == 2

    def test_missing_scene(self, tmp_path):
        assert main(["solve", "--scene", str(tmp_path / "nope.toml"), "--method", "vwos", "--plane", SMALL_PLANE, "--out", str(tmp_path)]) == 2

    def test_validate(self, tmp_path, capsys):
        assert main(["validate", "--suite", "memory", "--out", str(tmp_path / "v.json")]) == 0
        assert json.loads((tmp_path / "v.json").read_text())["pass"] is True

    def test_memory_flag(self, tmp_path):
        rc = main(["solve", "--scene", str(SCENES / "ball_dirichlet.toml"), "--method", "vwos", "--plane", SMALL_PLANE, "--walks", "4", "--memory", "finite:2,2", "--out", str(tmp_path)])
        assert rc == 0
        assert json.loads((tmp_path / "report.json").read_text())["config"]["solver"]["memory"] == "finite:2,2"


@pytest.mark.slow
class TestTiming:
    def test_mushroom_budget(self):
        s = scene("mushroom_c")
        plane = EvalPlane.parse("-1.15,-1.15,0;2.3,0,0;0,2.3,0;64,64")
        rep = run(s, "vwos", plane, replace(s.solver, n_walks=256))
        assert rep.wall_clock < 300.0
        assert rep.truncated_total == 0
