"""Functionals monitored along PDE runs, and the finite-horizon decay test."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from .errors import DomainError, InconclusiveError
from .model import (Grid, as_field, f_l1_deviation, grad_l2_sq, integral, l2_norm_sq,
                    source_field)

F1_FLOOR = 1e-300


def h(s):
    """s - 1 - ln s, nonnegative with its only zero at s = 1."""
    return s - 1.0 - np.log(s)


def neumann_laplacian(values, grid: Grid) -> np.ndarray:
    """3-point (1D) / 5-point (2D) Laplacian with zero-flux boundary faces."""
    f = as_field(values, grid)
    out = np.zeros_like(f)
    for axis, hx in enumerate(grid.spacing):
        flux = np.diff(f, axis=axis) / (hx * hx)
        lo = [slice(None)] * f.ndim
        hi = [slice(None)] * f.ndim
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        out[tuple(lo)] += flux
        out[tuple(hi)] -= flux
    return out


def k1(u, grid: Grid) -> float:
    """Spatial variance of u (two-pass, so never negative)."""
    f = as_field(u, grid)
    return l2_norm_sq(f - integral(f, grid), grid)


def k2(mass_u: float, u_tilde: float) -> float:
    return (mass_u - u_tilde) ** 2


def k3(v, grid: Grid, v_tilde: float) -> float:
    return l2_norm_sq(as_field(v, grid) - v_tilde, grid)


def lyapunov_F1(u, grid: Grid, u_tilde: float, floor=F1_FLOOR) -> float:
    if not u_tilde > 0:
        raise DomainError("u_tilde must be > 0")
    f = as_field(u, grid)
    bad = np.flatnonzero(f.ravel() <= floor)
    if bad.size:
        raise DomainError(f"u is not positive at cell {int(bad[0])}; h(s) blows up as s -> 0")
    return float(np.sum(h(f / u_tilde)) * grid.cell_measure)


def lyapunov_F2(mass_u: float, u_tilde: float) -> float:
    if not (mass_u > 0 and u_tilde > 0):
        raise DomainError("F2 needs positive mass and u_tilde")
    return math.log(mass_u) - math.log(u_tilde)


def laplacian_l2_sq(v, grid: Grid) -> float:
    if max(grid.shape) < 3:
        raise DomainError("laplacian needs at least 3 cells along some axis")
    return l2_norm_sq(neumann_laplacian(v, grid), grid)


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    mass_u: float
    mass_v: float
    k1: float
    k2: float
    k3: float
    F1: Optional[float]
    F2: Optional[float]
    grad_u_sq: float
    grad_v_sq: float
    lap_v_sq: float
    l2_u_err_sq: float
    l2_v_err_sq: float
    f_inhomogeneity_sq: float
    f_l1_err: float = 0.0
    f1_missing: bool = False


def record(state, ode_state, params, spec, grid: Grid) -> DiagnosticsRecord:
    """Evaluate every monitored functional for one PDE/ODE pair."""
    u, v = as_field(state.u, grid, "u"), as_field(state.v, grid, "v")
    ut, vt = ode_state.u_tilde, ode_state.v_tilde
    mass_u, mass_v = integral(u, grid), integral(v, grid)
    try:
        F1 = lyapunov_F1(u, grid, ut)
    except DomainError:
        F1 = None
    try:
        F2 = lyapunov_F2(mass_u, ut)
    except DomainError:
        F2 = None
    f = source_field(spec, grid, state.t)
    lap = laplacian_l2_sq(v, grid) if max(grid.shape) >= 3 else 0.0
    return DiagnosticsRecord(
        t=float(state.t),
        mass_u=mass_u,
        mass_v=mass_v,
        k1=k1(u, grid),
        k2=k2(mass_u, ut),
        k3=k3(v, grid, vt),
        F1=F1,
        F2=F2,
        grad_u_sq=grad_l2_sq(u, grid),
        grad_v_sq=grad_l2_sq(v, grid),
        lap_v_sq=lap,
        l2_u_err_sq=l2_norm_sq(u - ut, grid),
        l2_v_err_sq=l2_norm_sq(v - vt, grid),
        f_inhomogeneity_sq=l2_norm_sq(f - integral(f, grid), grid),
        f_l1_err=f_l1_deviation(spec, grid, state.t),
        f1_missing=F1 is None,
    )


CUMULATIVE_SOURCES = {
    "int_k1": "k1",
    "int_k2": "k2",
    "int_k3": "k3",
    "int_grad_u": "grad_u_sq",
    "int_grad_v": "grad_v_sq",
    "int_lap_v": "lap_v_sq",
    "int_f_l1_err": "f_l1_err",
}


class CumulativeIntegrals:
    """Running trapezoid integrals of selected record fields."""

    def __init__(self):
        self.t = []
        self.series = {name: [] for name in CUMULATIVE_SOURCES}
        self._last = None

    @classmethod
    def from_records(cls, records):
        acc = cls()
        for rec in records:
            acc.update(rec)
        return acc

    def update(self, rec: DiagnosticsRecord):
        if self._last is not None and rec.t < self._last.t:
            raise ValueError("records must be time-sorted")
        for name, src in CUMULATIVE_SOURCES.items():
            column = self.series[name]
            if self._last is None:
                column.append(0.0)
            else:
                dt = rec.t - self._last.t
                column.append(column[-1] + 0.5 * dt * (getattr(rec, src) + getattr(self._last, src)))
        self.t.append(rec.t)
        self._last = rec

    def __getitem__(self, name):
        return np.asarray(self.series[name])

    def __len__(self):
        return len(self.t)


@dataclass(frozen=True)
class TailTest:
    decaying: bool
    tail_mean: float
    cumulative: float
    cumulative_slope: float


def friedman_tello_tail_test(series, window: float, slope_tol: float) -> TailTest:
    """Finite-horizon stand-in for "integrable with bounded derivative implies decay".

    ``series`` is a sequence of ``(t, k)`` pairs.  The verdict requires both
    the mean of k over the last window and the growth rate of its running
    integral there to be at most ``slope_tol``.
    """
    arr = np.asarray(series, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 2:
        raise InconclusiveError("series must be a list of (t, k) pairs")
    t, k = arr[:, 0], arr[:, 1]
    if np.any(np.diff(t) <= 0):
        raise ValueError("series must be strictly time-sorted")
    if np.any(k < 0) or not np.all(np.isfinite(k)):
        raise ValueError("series values must be finite and nonnegative")
    if not window > 0 or t[-1] - t[0] < 3 * window:
        raise ValueError("series must span at least three windows")
    cum = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (k[1:] + k[:-1]))])
    t_start = t[-1] - window
    in_tail = t >= t_start
    tail_mean = float(np.mean(k[in_tail]))
    cum_start = float(np.interp(t_start, t, cum))
    slope = (float(cum[-1]) - cum_start) / window
    decaying = tail_mean <= slope_tol and slope <= slope_tol
    return TailTest(bool(decaying), tail_mean, float(cum[-1]), slope)


def record_field_names():
    return [f.name for f in fields(DiagnosticsRecord)]
