"""Scenario orchestration, CSV series and ``report.txt`` output."""
from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .config import ScenarioConfig, cell_size, initial_fields, sweep_axis
from .diagnostics import CumulativeIntegrals, friedman_tello_tail_test
from .errors import ConfigError, NumericError, SolverError, ThresholdError
from .model import Constant, HomogeneousPeriodic, SeparablePerturbed
from .ode import (OdeState, check_lemma32_bounds, equilibrium_constant_f,
                  find_periodic_orbit_a_pos, integrate_ode, periodic_initials_a0,
                  period_map, r_min_a_pos)
from .pde import PdeState, SchemeConfig, run

log = logging.getLogger(__name__)

SERIES_HEADER = ("t,mass_u,mass_v,k1,k2,k3,F1,F2,grad_u_sq,grad_v_sq,lap_v_sq,"
                 "l2_u_err_sq,l2_v_err_sq,f_inhom_sq,int_k1,int_k2,int_k3,"
                 "int_grad_u,int_grad_v,int_lap_v")
_RECORD_COLUMNS = ("t", "mass_u", "mass_v", "k1", "k2", "k3", "F1", "F2", "grad_u_sq",
                   "grad_v_sq", "lap_v_sq", "l2_u_err_sq", "l2_v_err_sq", "f_inhomogeneity_sq")
_CUMULATIVE_COLUMNS = ("int_k1", "int_k2", "int_k3", "int_grad_u", "int_grad_v", "int_lap_v")

CHECKS = {
    "steady_state": ("equilibrium_linf",),
    "ode_only": ("u_upper_bound", "v_upper_bound", "u_persistence"),
    "convergence": ("tail_k1", "tail_k2", "tail_k3", "l2_distance", "int_k1_plateau",
                    "mass_lower_bound"),
    "periodic_a0": ("period_map_residual", "orbit_attraction"),
    "periodic_probe_a_pos": ("probe_residual",),
    "sweep": ("stability_boundary",),
}

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"


@dataclass
class Verdict:
    status: str
    value: Optional[float] = None
    tol: Optional[float] = None

    @classmethod
    def at_most(cls, value, tol):
        return cls(PASS if value <= tol else FAIL, float(value), tol)

    @classmethod
    def at_least(cls, value, tol):
        return cls(PASS if value >= tol else FAIL, float(value), tol)


@dataclass
class ScenarioReport:
    scenario: str
    verdicts: dict
    series_files: list = field(default_factory=list)
    wall_time: float = 0.0
    numerical_failure: bool = False
    metadata: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(v.status == PASS for v in self.verdicts.values())

    def exit_code(self):
        if self.numerical_failure:
            return 3
        if any(v.status == FAIL for v in self.verdicts.values()):
            return 1
        return 0


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    return f"{float(x):.17g}"


def write_series(records, cumulative: CumulativeIntegrals, path):
    """Write diagnostics and running integrals as CSV (17 significant digits)."""
    if not records:
        raise ValueError("no records to write")
    if len(cumulative) != len(records):
        raise ValueError("cumulative integrals do not match the records")
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(SERIES_HEADER + "\n")
        for i, rec in enumerate(records):
            row = [_fmt(getattr(rec, c)) for c in _RECORD_COLUMNS]
            row += [_fmt(cumulative[c][i]) for c in _CUMULATIVE_COLUMNS]
            fh.write(",".join(row) + "\n")
    return path


def read_series(path):
    """Parse a series CSV back into ``{column: ndarray}`` (empty fields become NaN)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    names = lines[0].split(",")
    rows = [[float(x) if x else math.nan for x in line.split(",")] for line in lines[1:]]
    data = np.array(rows).reshape(len(rows), len(names))
    return {name: data[:, i] for i, name in enumerate(names)}


def _write_table(path, header, rows):
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")
    return Path(path)


def write_report(report: ScenarioReport, path):
    """``name: status value=<v> tol=<t>`` per check, preceded by ``meta.*`` lines."""
    lines = [f"meta.scenario: {report.scenario}"]
    for key, value in report.metadata.items():
        lines.append(f"meta.{key}: {value}")
    lines.append(f"meta.wall_time: {report.wall_time:.3f}")
    lines.append(f"meta.numerical_failure: {str(report.numerical_failure).lower()}")
    for name, v in report.verdicts.items():
        value = "none" if v.value is None else f"{v.value:.6g}"
        tol = "none" if v.tol is None else f"{v.tol:.6g}"
        lines.append(f"{name}: {v.status} value={value} tol={tol}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return Path(path)


def read_report(path):
    """Return ``(metadata, {check: (status, value, tol)})`` from a report file."""
    meta, checks = {}, {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        key, _, rest = line.partition(": ")
        if key.startswith("meta."):
            meta[key[5:]] = rest
            continue
        status, *pairs = rest.split()
        kv = dict(p.split("=", 1) for p in pairs)
        conv = {k: None if x == "none" else float(x) for k, x in kv.items()}
        checks[key] = (status, conv.get("value"), conv.get("tol"))
    return meta, checks


# -- scenario runners -------------------------------------------------------


def _scheme(cfg: ScenarioConfig):
    r = cfg.run
    return SchemeConfig(r.dt, cfl_safety=r.cfl_safety, track_split=r.track_split,
                        adaptive=r.adaptive_dt, backend=r.backend)


def _initial_state(cfg: ScenarioConfig, seed):
    u0, v0 = initial_fields(cfg.initial, cfg.grid, cfg.params, cfg.source, seed)
    state = PdeState(u0, v0, 0.0, cfg.grid)
    return state.with_split() if cfg.run.track_split else state


def _run_pde(cfg, seed, out_dir, report):
    """Run the PDE and always write whatever series was produced."""
    tol = cfg.tolerances
    try:
        samples = run(_initial_state(cfg, seed), cfg.params, cfg.source, _scheme(cfg),
                      cfg.t_end, cfg.sample_every, tol["ode_rtol"], tol["ode_atol"],
                      cfg.run.wall_clock_limit)
    except SolverError as exc:
        partial = exc.partial or []
        if partial and out_dir is not None:
            recs = [rec for _, rec in partial]
            report.series_files.append(
                write_series(recs, CumulativeIntegrals.from_records(recs), out_dir / "series.csv"))
        raise
    if out_dir is not None:
        recs = [rec for _, rec in samples]
        report.series_files.append(
            write_series(recs, CumulativeIntegrals.from_records(recs), out_dir / "series.csv"))
    return samples


def _steady_state(cfg, seed, out_dir, report):
    if not isinstance(cfg.source, Constant):
        raise ConfigError("steady_state needs source.type=constant")
    eq = equilibrium_constant_f(cfg.params, cfg.source.f0)
    u_t, v_t = eq.stable
    report.metadata.update(target_u=f"{u_t:.17g}", target_v=f"{v_t:.17g}", regime=eq.stability)
    samples = _run_pde(cfg, seed, out_dir, report)
    final = samples[-1][0]
    dist = max(float(np.max(np.abs(final.u - u_t))), float(np.max(np.abs(final.v - v_t))))
    return {"equilibrium_linf": Verdict.at_most(dist, cfg.tolerances["linf"])}


def _ode_initial(cfg):
    return OdeState(cfg.initial.u0, cfg.initial.v0)


def _sample_times(t_end, every):
    n = int(math.floor(t_end / every + 1e-9))
    return [k * every for k in range(1, n + 1) if k * every < t_end]


def _ode_only(cfg, seed, out_dir, report):
    tol = cfg.tolerances
    init = _ode_initial(cfg)
    traj = integrate_ode(init, cfg.params, cfg.source, cfg.t_end,
                         _sample_times(cfg.t_end, cfg.sample_every), tol["ode_rtol"], tol["ode_atol"])
    if out_dir is not None:
        rows = [(s.t, s.u_tilde, s.v_tilde) for s in traj.samples]
        report.series_files.append(_write_table(out_dir / "ode_series.csv",
                                                ("t", "u_tilde", "v_tilde"), rows))
    bounds = check_lemma32_bounds(traj, cfg.params, cfg.source, tol["bound_slack"])
    threshold = r_min_a_pos(init, cfg.params, cfg.source)
    report.metadata.update(r_threshold=f"{threshold:.17g}",
                           u_lower_observed=f"{bounds.u_lower_observed:.17g}")
    if cfg.params.r > threshold:
        persistence = Verdict.at_least(bounds.u_lower_observed, tol["persistence"])
    else:
        # below the sufficient threshold nothing is claimed; record the observation
        persistence = Verdict(INCONCLUSIVE, bounds.u_lower_observed, tol["persistence"])
    return {
        "u_upper_bound": Verdict.at_most(bounds.u_excess, tol["bound_slack"]),
        "v_upper_bound": Verdict.at_most(bounds.v_excess, tol["bound_slack"]),
        "u_persistence": persistence,
    }


def _convergence(cfg, seed, out_dir, report):
    tol = cfg.tolerances
    samples = _run_pde(cfg, seed, out_dir, report)
    recs = [rec for _, rec in samples]
    cum = CumulativeIntegrals.from_records(recs)
    verdicts = {}
    for name in ("k1", "k2", "k3"):
        test = friedman_tello_tail_test([(r.t, getattr(r, name)) for r in recs],
                                        tol["window"], tol["tail_tol"])
        verdicts[f"tail_{name}"] = Verdict(PASS if test.decaying else FAIL,
                                           max(test.tail_mean, test.cumulative_slope),
                                           tol["tail_tol"])
    last = recs[-1]
    dist = math.sqrt(last.l2_u_err_sq) + math.sqrt(last.l2_v_err_sq)
    verdicts["l2_distance"] = Verdict.at_most(dist, tol["l2"])
    t = np.array(cum.t)
    int_k1 = cum["int_k1"]
    t_start = t[-1] - tol["window"]
    slope = (int_k1[-1] - float(np.interp(t_start, t, int_k1))) / tol["window"]
    verdicts["int_k1_plateau"] = Verdict.at_most(slope, tol["plateau_slope"])
    verdicts["mass_lower_bound"] = Verdict.at_least(min(r.mass_u for r in recs), tol["mass_floor"])
    report.metadata.update(int_k1=f"{int_k1[-1]:.17g}")
    return verdicts


def _periodic_source(cfg):
    if not isinstance(cfg.source, (HomogeneousPeriodic, SeparablePerturbed)):
        raise ConfigError(f"{cfg.scenario} needs a periodic source")
    return cfg.source.ftilde.period


def _periodic_a0(cfg, seed, out_dir, report):
    if cfg.params.a != 0:
        raise ConfigError("periodic_a0 needs params.a = 0")
    period = _periodic_source(cfg)
    tol = cfg.tolerances
    rt, at = tol["ode_rtol"], tol["ode_atol"]
    try:
        x_per = np.array(periodic_initials_a0(cfg.params, cfg.source))
    except ThresholdError as exc:
        report.metadata["note"] = str(exc)
        return {name: Verdict(INCONCLUSIVE) for name in CHECKS["periodic_a0"]}
    residual = float(np.max(np.abs(period_map(x_per, cfg.params, cfg.source, period, rt, at) - x_per)))
    report.metadata.update(u0_per=f"{x_per[0]:.17g}", v0_per=f"{x_per[1]:.17g}")

    # the orbit is T-periodic, so its value at any time is the flow at t mod T
    t_end = cfg.t_end
    phases = sorted({math.fmod(t_end, period), math.fmod(0.5 * t_end, period)} - {0.0})
    orbit = integrate_ode(OdeState(*x_per), cfg.params, cfg.source, period,
                          [p for p in phases if p < period], rt, at)
    lookup = {round(s.t, 12): np.array([s.u_tilde, s.v_tilde]) for s in orbit.samples}

    def orbit_at(t):
        return lookup.get(round(math.fmod(t, period), 12), x_per)

    generic = integrate_ode(_ode_initial(cfg), cfg.params, cfg.source, t_end, [0.5 * t_end], rt, at)
    mid = next(s for s in generic.samples if abs(s.t - 0.5 * t_end) < 1e-12)
    d_half = float(np.max(np.abs([mid.u_tilde, mid.v_tilde] - orbit_at(0.5 * t_end))))
    end = generic.final
    d_end = float(np.max(np.abs([end.u_tilde, end.v_tilde] - orbit_at(t_end))))
    if out_dir is not None:
        rows = [(s.t, s.u_tilde, s.v_tilde) for s in
                integrate_ode(OdeState(*x_per), cfg.params, cfg.source, period,
                              list(np.linspace(0, period, 101)[1:-1]), rt, at).samples]
        report.series_files.append(_write_table(out_dir / "periodic_orbit.csv",
                                                ("t", "u_tilde", "v_tilde"), rows))
    report.metadata.update(distance_half=f"{d_half:.6g}", distance_end=f"{d_end:.6g}")
    attraction_ok = d_end <= max(d_half, tol["residual"])
    return {
        "period_map_residual": Verdict.at_most(residual, tol["residual"]),
        "orbit_attraction": Verdict(PASS if attraction_ok else FAIL, d_end, max(d_half, tol["residual"])),
    }


def _periodic_probe(cfg, seed, out_dir, report):
    period = _periodic_source(cfg)
    if cfg.params.a <= 0:
        raise ConfigError("periodic_probe_a_pos needs params.a > 0")
    tol = cfg.tolerances
    guess = _ode_initial(cfg) if cfg.initial.family == "constant" else None
    res = find_periodic_orbit_a_pos(cfg.params, cfg.source, guess, tol["probe_max_iters"],
                                    tol["probe_tol"], period, tol["ode_rtol"], tol["ode_atol"])
    report.metadata.update(u0=f"{res.u0:.17g}", v0=f"{res.v0:.17g}", iterations=res.iterations,
                           converged=str(res.converged).lower())
    # existence is open for a > 0, so a miss is never reported as a failure
    status = PASS if res.converged else INCONCLUSIVE
    return {"probe_residual": Verdict(status, res.residual, tol["probe_tol"])}


def _sweep_point(cfg, r, y):
    sw = cfg.sweep
    if sw.plane == "r_f0":
        params = replace(cfg.params, r=float(r))
        f0 = float(y)
    else:
        params = replace(cfg.params, r=float(r), a=float(y))
        f0 = sw.f0
    source = Constant(f0)
    if sw.mode == "ode":
        traj = integrate_ode(_ode_initial(cfg), params, source, cfg.t_end,
                             rel_tol=1e-6, abs_tol=1e-9)
        u_end, v_end = traj.final.u_tilde, traj.final.v_tilde
    else:
        u0, v0 = initial_fields(cfg.initial, cfg.grid, params, source)
        scheme = replace(_scheme(cfg), track_split=False)
        samples = run(PdeState(u0, v0, 0.0, cfg.grid), params, source, scheme,
                      cfg.t_end, cfg.t_end, 1e-6, 1e-9)
        final = samples[-1][1]
        u_end, v_end = final.mass_u, final.mass_v
    return float(r), float(y), u_end, v_end, u_end > cfg.tolerances["survival"], f0 < r


def _sweep(cfg, seed, out_dir, report):
    sw = cfg.sweep
    rs, ys = sweep_axis(sw.r_range), sweep_axis(sw.y_range)
    points = [(r, y) for r in rs for y in ys]
    workers = sw.workers or os.cpu_count() or 1
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda p: _sweep_point(cfg, *p), points))
    results.sort(key=lambda row: (row[0], row[1]))
    y_name = "f0" if sw.plane == "r_f0" else "a"
    if out_dir is not None:
        report.series_files.append(_write_table(
            out_dir / "region.csv",
            ("r", y_name, "u_final", "v_final", "survived", "predicted_interior"), results))
    # distance of misclassified points from the line f0 = r, in sweep cells
    cell = cell_size(sw.r_range) if sw.plane == "r_a" else max(cell_size(sw.r_range), cell_size(sw.y_range))
    worst = 0.0
    for r, y, _, _, survived, predicted in results:
        if survived != predicted:
            f0 = y if sw.plane == "r_f0" else sw.f0
            worst = max(worst, abs(f0 - r) / cell)
    report.metadata.update(points=len(results), misclassified=int(sum(row[4] != row[5] for row in results)))
    return {"stability_boundary": Verdict.at_most(worst, 1.0)}


_RUNNERS = {
    "steady_state": _steady_state,
    "ode_only": _ode_only,
    "convergence": _convergence,
    "periodic_a0": _periodic_a0,
    "periodic_probe_a_pos": _periodic_probe,
    "sweep": _sweep,
}


def run_scenario(cfg: ScenarioConfig, seed=None, out_dir=None) -> ScenarioReport:
    """Run ``cfg`` and return one verdict per check of its scenario.

    Solver and integrator failures become ``inconclusive`` verdicts with
    ``numerical_failure`` set, never exceptions.  Files go to ``out_dir``
    (default ``cfg.output_dir``; nothing is written when both are None).
    """
    out_dir = out_dir if out_dir is not None else cfg.output_dir
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
    seed = cfg.initial.seed if seed is None else seed
    report = ScenarioReport(cfg.scenario, {}, metadata={"seed": seed})
    started = time.monotonic()
    try:
        verdicts = _RUNNERS[cfg.scenario](cfg, seed, out_dir, report)
    except (SolverError, NumericError) as exc:
        log.warning("numerical failure in %s: %s", cfg.scenario, exc)
        report.numerical_failure = True
        report.metadata["error"] = str(exc).replace("\n", " ")
        verdicts = {name: Verdict(INCONCLUSIVE) for name in CHECKS[cfg.scenario]}
    report.verdicts = {name: verdicts[name] for name in CHECKS[cfg.scenario]}
    report.wall_time = time.monotonic() - started
    if out_dir is not None:
        write_report(report, out_dir / "report.txt")
    return report
