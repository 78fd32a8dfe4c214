import math
from pathlib import Path

import numpy as np
import pytest

from chemolab.config import load_config, parse_config
from chemolab.diagnostics import CumulativeIntegrals, record
from chemolab.errors import ConfigError
from chemolab.model import Constant, Grid, ModelParams
from chemolab.ode import OdeState
from chemolab.pde import PdeState
from chemolab.scenarios import (CHECKS, SERIES_HEADER, read_report, read_series, run_scenario,
                                write_series)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def cfg_text(name, **edits):
    text = (CONFIGS / f"{name}.ini").read_text()
    for old, new in edits.items():
        assert old in text, old
        text = text.replace(old, new)
    return text


def check_report(report):
    assert list(report.verdicts) == list(CHECKS[report.scenario])


class TestWriteSeries:
    def equilibrium_records(self, times):
        g = Grid.interval(8)
        p = ModelParams(1, 1, 2, 1)
        recs = []
        for t in times:
            s = PdeState(np.full(8, 1 / 3), np.full(8, 4 / 3), t, g)
            recs.append(record(s, OdeState(1 / 3, 4 / 3, t), p, Constant(1.0), g))
        return recs

    def test_equilibrium_row(self, tmp_path):
        recs = self.equilibrium_records([0.0])
        path = write_series(recs, CumulativeIntegrals.from_records(recs), tmp_path / "s.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == SERIES_HEADER
        data = read_series(path)
        for name in ("k1", "k2", "k3", "F1", "F2", "l2_u_err_sq", "l2_v_err_sq", "int_k1"):
            assert abs(data[name][0]) <= 1e-10, name

    def test_round_trip_is_exact(self, tmp_path):
        rng = np.random.default_rng(4)
        g = Grid.interval(16)
        p = ModelParams(1, 1, 2, 1)
        recs = [record(PdeState(rng.uniform(0.1, 1, 16), rng.uniform(0.1, 1, 16), t, g),
                       OdeState(0.4, 0.7, t), p, Constant(1.0), g) for t in (0.0, 0.1, 0.3)]
        cum = CumulativeIntegrals.from_records(recs)
        data = read_series(write_series(recs, cum, tmp_path / "s.csv"))
        for i, rec in enumerate(recs):
            assert data["k1"][i] == rec.k1
            assert data["F1"][i] == rec.F1
            assert data["f_inhom_sq"][i] == rec.f_inhomogeneity_sq
        assert np.array_equal(data["int_k3"], cum["int_k3"])

    def test_int_k1_is_trapezoid(self, tmp_path):
        g = Grid.interval(8)
        x = g.centers()[0]
        p = ModelParams(1, 1, 2, 1)
        recs = [record(PdeState(0.5 + eps * np.cos(np.pi * x), np.ones(8), t, g), OdeState(0.5, 1.0, t),
                       p, Constant(1.0), g) for t, eps in ((0.0, 0.2), (0.7, 0.1))]
        data = read_series(write_series(recs, CumulativeIntegrals.from_records(recs), tmp_path / "s.csv"))
        assert data["int_k1"][1] == pytest.approx(0.5 * 0.7 * (data["k1"][0] + data["k1"][1]), rel=1e-15)

    def test_missing_F1_is_empty(self, tmp_path):
        g = Grid.interval(4)
        recs = [record(PdeState([0.0, 1, 1, 1], np.ones(4), 0.0, g), OdeState(0.75, 1.0),
                       ModelParams(1, 1, 2, 1), Constant(1.0), g)]
        path = write_series(recs, CumulativeIntegrals.from_records(recs), tmp_path / "s.csv")
        row = path.read_text().splitlines()[1].split(",")
        assert row[6] == ""
        assert math.isnan(read_series(path)["F1"][0])

    def test_empty_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            write_series([], CumulativeIntegrals(), tmp_path / "s.csv")


class TestSteadyState:
    def test_interior(self, tmp_path):
        rep = run_scenario(load_config(CONFIGS / "steady_state.ini"), out_dir=tmp_path)
        check_report(rep)
        assert rep.passed and rep.exit_code() == 0
        assert rep.verdicts["equilibrium_linf"].value < 1e-6
        meta, checks = read_report(tmp_path / "report.txt")
        assert float(meta["target_u"]) == pytest.approx(1 / 3)
        assert checks["equilibrium_linf"][0] == "pass"
        series = read_series(tmp_path / "series.csv")
        assert series["t"][-1] == pytest.approx(100.0)

    def test_trivial(self):
        rep = run_scenario(load_config(CONFIGS / "steady_state_trivial.ini"))
        assert rep.passed
        assert rep.metadata["target_u"] == "0"

    def test_needs_constant_source(self):
        text = cfg_text("steady_state", **{"type = constant\nf0 = 1": "type = periodic\nmean = 1"})
        with pytest.raises(ConfigError):
            run_scenario(parse_config(text))

    def test_tight_tolerance_fails(self):
        text = cfg_text("steady_state", **{"t_end = 100": "t_end = 2", "linf = 1e-3": "linf = 1e-9"})
        rep = run_scenario(parse_config(text))
        assert rep.verdicts["equilibrium_linf"].status == "fail"
        assert rep.exit_code() == 1


def test_convergence_scenario(tmp_path):
    rep = run_scenario(load_config(CONFIGS / "convergence.ini"), out_dir=tmp_path)
    check_report(rep)
    assert rep.passed, rep.verdicts
    assert rep.verdicts["l2_distance"].value <= 1e-2
    series = read_series(tmp_path / "series.csv")
    assert len(series["t"]) == 1501
    assert np.all(np.diff(series["int_k1"]) >= 0)


class TestPeriodic:
    def test_a0(self, tmp_path):
        rep = run_scenario(load_config(CONFIGS / "periodic_a0.ini"), out_dir=tmp_path)
        check_report(rep)
        assert rep.passed
        assert (tmp_path / "periodic_orbit.csv").exists()

    def test_a0_below_threshold_is_inconclusive(self):
        rep = run_scenario(parse_config(cfg_text("periodic_a0", **{"r = 2": "r = 0.8"})))
        assert all(v.status == "inconclusive" for v in rep.verdicts.values())
        assert rep.exit_code() == 0 and not rep.numerical_failure

    def test_a0_rejects_production(self):
        with pytest.raises(ConfigError):
            run_scenario(parse_config(cfg_text("periodic_a0", **{"a = 0": "a = 1"})))

    def test_probe(self):
        rep = run_scenario(load_config(CONFIGS / "periodic_probe.ini"))
        check_report(rep)
        assert rep.verdicts["probe_residual"].status == "pass"

    def test_probe_miss_is_inconclusive(self):
        text = cfg_text("periodic_probe", **{"probe_max_iters = 50": "probe_max_iters = 1",
                                             "probe_tol = 1e-9": "probe_tol = 1e-15"})
        rep = run_scenario(parse_config(text))
        assert rep.verdicts["probe_residual"].status == "inconclusive"
        assert rep.exit_code() == 0


class TestOdeOnly:
    def test_bounds_hold(self, tmp_path):
        rep = run_scenario(load_config(CONFIGS / "ode_only.ini"), out_dir=tmp_path)
        check_report(rep)
        assert rep.passed
        header = (tmp_path / "ode_series.csv").read_text().splitlines()[0]
        assert header == "t,u_tilde,v_tilde"

    def test_below_threshold_is_inconclusive(self):
        rep = run_scenario(parse_config(cfg_text("ode_only", **{"r = 4": "r = 1.5"})))
        assert rep.verdicts["u_persistence"].status == "inconclusive"
        assert rep.verdicts["u_upper_bound"].status == "pass"


class TestSweep:
    def small(self, mode="pde", plane="r_f0"):
        return parse_config(cfg_text("sweep", **{
            "sweep_r = 0.5,3,21": "sweep_r = 0.5,3,6",
            "sweep_y = 0.5,3,21": "sweep_y = 0.5,3,6",
            "sweep_mode = pde": f"sweep_mode = {mode}",
            "sweep_plane = r_f0": f"sweep_plane = {plane}",
        }))

    @pytest.mark.parametrize("mode", ["pde", "ode"])
    def test_boundary_tracks_diagonal(self, tmp_path, mode):
        rep = run_scenario(self.small(mode), out_dir=tmp_path)
        check_report(rep)
        assert rep.passed
        lines = (tmp_path / "region.csv").read_text().splitlines()
        assert lines[0] == "r,f0,u_final,v_final,survived,predicted_interior"
        assert len(lines) == 37

    def test_r_a_plane(self, tmp_path):
        rep = run_scenario(self.small("ode", "r_a"), out_dir=tmp_path)
        assert rep.passed
        assert (tmp_path / "region.csv").read_text().startswith("r,a,")

    def test_worker_count_does_not_change_output(self, tmp_path):
        outs = []
        for workers in (1, 4):
            text = cfg_text("sweep", **{"sweep_r = 0.5,3,21": "sweep_r = 0.5,3,6",
                                        "sweep_y = 0.5,3,21": "sweep_y = 0.5,3,6",
                                        "sweep_mode = pde": f"sweep_mode = pde\nworkers = {workers}"})
            cfg = parse_config(text)
            run_scenario(cfg, out_dir=tmp_path / str(workers))
            outs.append((tmp_path / str(workers) / "region.csv").read_bytes())
        assert outs[0] == outs[1]


class TestFailures:
    def test_cfl_violation(self, tmp_path):
        rep = run_scenario(load_config(CONFIGS / "cfl_violation.ini"), out_dir=tmp_path)
        check_report(rep)
        assert rep.numerical_failure and rep.exit_code() == 3
        assert all(v.status == "inconclusive" for v in rep.verdicts.values())
        assert "CFL" in rep.metadata["error"]
        assert read_series(tmp_path / "series.csv")["t"][0] == 0.0
        _, checks = read_report(tmp_path / "report.txt")
        assert checks["tail_k1"] == ("inconclusive", None, None)


def test_deterministic_with_seed(tmp_path):
    text = cfg_text("convergence", **{"family = cosine": "family = random", "t_end = 150": "t_end = 20",
                                      "window = 15": "window = 2"})
    cfg = parse_config(text)
    run_scenario(cfg, seed=11, out_dir=tmp_path / "a")
    run_scenario(cfg, seed=11, out_dir=tmp_path / "b")
    run_scenario(cfg, seed=12, out_dir=tmp_path / "c")
    a, b, c = ((tmp_path / d / "series.csv").read_bytes() for d in "abc")
    assert a == b and a != c
    meta, _ = read_report(tmp_path / "a" / "report.txt")
    assert meta["seed"] == "11"
