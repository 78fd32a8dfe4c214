"""Finite-volume IMEX solver for the repulsive chemotaxis system on unit-measure grids.

Each step first solves the chemical equation (implicit diffusion and decay,
explicit production and supply), then the cell equation (implicit
diffusion, explicit upwind chemotactic flux and reaction using the new
chemical).  Boundary faces carry no flux.

1D runs go through a compiled kernel; 2D runs (and the ``numpy`` backend in
1D, kept as a cross-check) use sparse operators, with conjugate gradients
for the 2D linear solves.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from . import _kernels
from .diagnostics import record as make_record
from .errors import (CFLError, InconclusiveError, RunTimeout, ShapeError, SolverError,
                     StepNumericError)
from .model import (Grid, ModelParams, SourceSpec, as_field, integral,
                    l2_norm_sq, source_coefficients)
from .ode import OdeState, integrate_ode


@dataclass(frozen=True, eq=False)
class PdeState:
    u: np.ndarray
    v: np.ndarray
    t: float
    grid: Grid
    w: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("u", "v", "w", "z"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = as_field(arr, self.grid, name).copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if (self.w is None) != (self.z is None):
            raise ValueError("w and z must be given together")

    @property
    def tracks_split(self):
        return self.w is not None

    def with_split(self):
        """Copy with w = z = v / 2."""
        return replace(self, w=0.5 * self.v, z=0.5 * self.v)


@dataclass(frozen=True)
class SchemeConfig:
    dt: float
    cfl_safety: float = 0.5
    track_split: bool = False
    adaptive: bool = False
    theta_diffusion: float = 1.0
    advection_scheme: str = "upwind"
    backend: str = "auto"
    linear_rtol: float = 1e-12
    max_halvings: int = 20

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must lie in (0, 1]")
        if self.theta_diffusion != 1.0:
            raise ValueError("only backward Euler diffusion (theta = 1) is implemented")
        if self.advection_scheme != "upwind":
            raise ValueError("only upwind advection is implemented")
        if self.backend not in ("auto", "numba", "numpy"):
            raise ValueError(f"unknown backend {self.backend!r}")


def neumann_matrix(grid: Grid):
    """Sparse zero-flux Laplacian, row-major cell ordering."""
    def axis_op(n, h):
        main = np.full(n, -2.0)
        if n > 1:
            main[0] = main[-1] = -1.0
        else:
            main[0] = 0.0
        off = np.ones(n - 1)
        return sparse.diags([off, main, off], [-1, 0, 1]) / (h * h)

    ops = [axis_op(n, h) for n, h in zip(grid.shape, grid.spacing)]
    if grid.dimension == 1:
        return ops[0].tocsr()
    nx, ny = grid.shape
    return (sparse.kron(ops[0], sparse.identity(ny)) + sparse.kron(sparse.identity(nx), ops[1])).tocsr()


class _Coefficients:
    """Raw coefficients for a stepper; the order check runs with r = 0."""

    def __init__(self, D, chi, r, a, source):
        self.D, self.chi, self.r, self.a = D, chi, r, a
        self.source = source  # (mean, amp, period, phase, p_scale, p_rate, q_flat)

    @classmethod
    def from_model(cls, params: ModelParams, spec: SourceSpec, grid: Grid):
        return cls(params.D, params.chi, params.r, params.a, source_coefficients(spec, grid))


def courant_rate(v, grid: Grid, chi: float) -> float:
    """CFL number per unit time: sum over axes of max |chi * jump(v)| / h^2."""
    v = np.asarray(v).reshape(grid.shape)
    total = 0.0
    for axis, h in enumerate(grid.spacing):
        if grid.shape[axis] > 1:
            total += float(np.max(np.abs(chi * np.diff(v, axis=axis)))) / (h * h)
    return total


class _NumbaStepper:
    def __init__(self, grid, coef, cfl):
        self.grid, self.coef, self.cfl = grid, coef, cfl
        self.dx = grid.spacing[0]
        self._factors = {}
        self.info = np.zeros(4)

    def _factor(self, dt):
        fac = self._factors.get(dt)
        if fac is None:
            n = self.grid.n_cells
            k = dt / (self.dx * self.dx)
            deg = np.full(n, 2.0)
            deg[0] = deg[-1] = 1.0 if n > 1 else 0.0
            v_cp, v_inv = _kernels.thomas_factor(1.0 + dt + k * deg, -k)
            u_cp, u_inv = _kernels.thomas_factor(1.0 + self.coef.D * k * deg, -self.coef.D * k)
            fac = (v_cp, v_inv, -k, u_cp, u_inv, -self.coef.D * k)
            self._factors[dt] = fac
        return fac

    def advance(self, arrays, step0, t0, dt, nsteps):
        u, v, w, z = arrays
        track = w is not None
        if not track:
            w = z = u  # placeholders, never touched
        c = self.coef
        v_cp, v_inv, v_off, u_cp, u_inv, u_off = self._factor(dt)
        _kernels.advance_1d(u, v, w, z, track, step0, t0, dt, nsteps, self.dx,
                            c.D, c.chi, c.r, c.a, *c.source, self.cfl,
                            v_cp, v_inv, v_off, u_cp, u_inv, u_off, self.info)
        return int(self.info[0]), int(self.info[1]), int(self.info[2]), float(self.info[3])


class _NumpyStepper:
    def __init__(self, grid, coef, cfl, linear_rtol):
        self.grid, self.coef, self.cfl, self.rtol = grid, coef, cfl, linear_rtol
        self.lap = neumann_matrix(grid)
        self._solvers = {}
        mean, amp, period, phase, p_scale, p_rate, q = coef.source
        self._src = (mean, amp, 2 * math.pi / period, phase, p_scale, p_rate, q.reshape(grid.shape))

    def _solver(self, dt):
        pair = self._solvers.get(dt)
        if pair is None:
            eye = sparse.identity(self.grid.n_cells, format="csr")
            mv = (eye * (1.0 + dt) - dt * self.lap).tocsc()
            mu = (eye - dt * self.coef.D * self.lap).tocsc()
            if self.grid.dimension == 1:
                lv, lu = spla.splu(mv), spla.splu(mu)
                pair = (lv.solve, lu.solve)
            else:
                pair = (self._cg(mv), self._cg(mu))
            self._solvers[dt] = pair
        return pair

    def _cg(self, mat):
        def solve(b):
            x, info = spla.cg(mat, b, x0=b.copy(), rtol=self.rtol, atol=0.0, maxiter=10 * len(b))
            if info != 0:
                raise SolverError(f"conjugate gradient did not converge (info={info})")
            return x
        return solve

    def source(self, t):
        mean, amp, omega, phase, p_scale, p_rate, q = self._src
        return mean + amp * math.sin(omega * (t + phase)) + p_scale * math.exp(-p_rate * t) * q

    def courant(self, vn, dt):
        return courant_rate(vn, self.grid, self.coef.chi) * dt

    def advance(self, arrays, step0, t0, dt, nsteps):
        u, v, w, z = arrays
        shape = self.grid.shape
        c = self.coef
        solve_v, solve_u = self._solver(dt)
        for s in range(nsteps):
            t = t0 + (step0 + s) * dt
            f = self.source(t)
            vn = solve_v((v + dt * (c.a * u + f)).ravel()).reshape(shape)
            if w is not None:
                wn = solve_v((w + dt * c.a * u).ravel()).reshape(shape)
                zn = solve_v((z + dt * f).ravel()).reshape(shape)
            courant = self.courant(vn, dt)
            if courant > self.cfl:
                return s, _kernels.CFL, -1, courant
            rhs = u + dt * (c.r * u * (1.0 - u) - u * vn)
            for axis, h in enumerate(self.grid.spacing):
                if shape[axis] < 2:
                    continue
                lo = [slice(None)] * u.ndim
                hi = [slice(None)] * u.ndim
                lo[axis], hi[axis] = slice(0, -1), slice(1, None)
                lo, hi = tuple(lo), tuple(hi)
                vel = -c.chi * np.diff(vn, axis=axis) / h
                flux = dt * vel * np.where(vel > 0.0, u[lo], u[hi]) / h
                rhs[lo] -= flux
                rhs[hi] += flux
            un = solve_u(rhs.ravel()).reshape(shape)
            bad = np.flatnonzero(~(np.isfinite(un) & np.isfinite(vn)).ravel())
            if bad.size:
                return s, _kernels.NAN, int(bad[0]), courant
            bad = np.flatnonzero(((un < _kernels.NEG_TOL) | (vn < _kernels.NEG_TOL)).ravel())
            if bad.size:
                return s, _kernels.NEGATIVE, int(bad[0]), courant
            if w is not None:
                gap = np.abs(wn + zn - vn).ravel()
                bad = np.flatnonzero(gap > _kernels.SPLIT_TOL * (1.0 + np.max(np.abs(vn))))
                if bad.size:
                    return s, _kernels.SPLIT, int(bad[0]), courant
                w[...] = wn
                z[...] = zn
            u[...] = un
            v[...] = vn
        return nsteps, _kernels.OK, -1, courant if nsteps else 0.0


def _make_stepper(grid, coef, cfg: SchemeConfig):
    backend = cfg.backend
    if backend == "auto":
        backend = "numba" if grid.dimension == 1 else "numpy"
    if backend == "numba":
        if grid.dimension != 1:
            raise ValueError("the numba backend is 1D only")
        return _NumbaStepper(grid, coef, cfg.cfl_safety)
    return _NumpyStepper(grid, coef, cfg.cfl_safety, cfg.linear_rtol)


def _advance(stepper, arrays, t_base, step0, dt, nsteps, cfg, depth=0):
    """Advance ``nsteps`` steps of size ``dt`` from step index ``step0``.

    With ``cfg.adaptive`` a step failing the CFL test is redone as two half
    steps, recursively, so the step grid is never shifted.
    """
    done = 0
    while done < nsteps:
        k, status, cell, courant = stepper.advance(arrays, step0 + done, t_base, dt, nsteps - done)
        done += k
        if status == _kernels.OK:
            return
        t_fail = t_base + (step0 + done) * dt
        if status == _kernels.CFL:
            if cfg.adaptive and depth < cfg.max_halvings:
                _advance(stepper, arrays, t_fail, 0, 0.5 * dt, 2, cfg, depth + 1)
                done += 1
                continue
            # implicit smoothing flattens v more at large dt, so also bound the
            # rate by the chemical the failed step started from
            rate = max(courant / dt, courant_rate(arrays[1], stepper.grid, stepper.coef.chi))
            suggested = 0.9 * stepper.cfl / rate
            raise CFLError(f"CFL number {courant:.3g} exceeds {stepper.cfl} at t={t_fail:.6g}; "
                           f"try dt <= {suggested:.3g}", suggested)
        if status == _kernels.NAN:
            raise StepNumericError(f"non-finite value at cell {cell}, t={t_fail:.6g}", cell)
        if status == _kernels.NEGATIVE:
            raise StepNumericError(f"positivity lost at cell {cell}, t={t_fail:.6g}", cell)
        if status == _kernels.SPLIT:
            raise StepNumericError(f"w + z drifted from v at cell {cell}, t={t_fail:.6g}", cell)
        raise SolverError(f"unknown kernel status {status}")


def _working_arrays(state: PdeState, track: bool):
    flat = [np.array(state.u, dtype=float).ravel(), np.array(state.v, dtype=float).ravel()]
    if track:
        if not state.tracks_split:
            raise ValueError("split tracking needs a state with w and z")
        flat += [np.array(state.w).ravel(), np.array(state.z).ravel()]
    else:
        flat += [None, None]
    if state.grid.dimension == 2:
        flat = [a if a is None else a.reshape(state.grid.shape) for a in flat]
    return flat


def _state_from(arrays, t, grid):
    u, v, w, z = arrays
    return PdeState(u.copy(), v.copy(), t, grid,
                    None if w is None else w.copy(), None if z is None else z.copy())


def step(state: PdeState, params: ModelParams, spec: SourceSpec, cfg: SchemeConfig) -> PdeState:
    """Advance one IMEX step of size ``cfg.dt``."""
    track = cfg.track_split and state.tracks_split
    stepper = _make_stepper(state.grid, _Coefficients.from_model(params, spec, state.grid), cfg)
    arrays = _working_arrays(state, track)
    _advance(stepper, arrays, state.t, 0, cfg.dt, 1, cfg)
    return _state_from(arrays, state.t + cfg.dt, state.grid)


def step_split(state: PdeState, params: ModelParams, spec: SourceSpec, cfg: SchemeConfig) -> PdeState:
    """One step that also advances w (production part) and z (supply part) of v."""
    if not state.tracks_split:
        raise ValueError("state carries no w, z fields")
    return step(state, params, spec, replace(cfg, track_split=True))


def mass_balance_residual(before: PdeState, after: PdeState, params: ModelParams, dt: float) -> float:
    """Defect of the discrete mass balance over one step.

    Transport and diffusion telescope across faces, so only the reaction
    (evaluated as in the scheme, with the new chemical) may change the mass.
    """
    if before.grid.shape != after.grid.shape:
        raise ShapeError("states live on different grids")
    grid = before.grid
    u0 = np.asarray(before.u)
    reaction = params.r * u0 * (1.0 - u0) - u0 * np.asarray(after.v)
    return abs(integral(after.u, grid) - integral(u0, grid) - dt * integral(reaction, grid))


def ode_initial(state: PdeState) -> OdeState:
    """Homogeneous initial values: spatial means of u and v."""
    return OdeState(integral(state.u, state.grid), integral(state.v, state.grid), state.t)


def _n_steps(span, dt):
    return max(1, int(math.ceil(span / dt - 1e-9)))


def run(initial: PdeState, params: ModelParams, spec: SourceSpec, cfg: SchemeConfig,
        t_end: float, sample_every: float, ode_rtol=1e-9, ode_atol=1e-12,
        wall_clock_limit: Optional[float] = None):
    """Integrate to ``t_end`` and sample diagnostics against the homogeneous ODE.

    Returns a list of ``(PdeState, DiagnosticsRecord)``, the first at the
    initial time.  Solver errors carry the samples gathered so far in
    ``exc.partial``.
    """
    if not (t_end > initial.t and sample_every > 0):
        raise ValueError("need t_end > initial time and sample_every > 0")
    grid = initial.grid
    dt = cfg.dt
    total = _n_steps(t_end - initial.t, dt)
    per_sample = max(1, int(round(sample_every / dt)))
    marks = list(range(0, total, per_sample)) + [total]
    times = [initial.t + n * dt for n in marks]
    traj = integrate_ode(ode_initial(initial), params, spec, times[-1], times[1:-1],
                         rel_tol=ode_rtol, abs_tol=ode_atol)
    ode_at = traj.samples
    track = cfg.track_split and initial.tracks_split
    stepper = _make_stepper(grid, _Coefficients.from_model(params, spec, grid), cfg)
    arrays = _working_arrays(initial, track)
    started = time.monotonic()
    state = _state_from(arrays, initial.t, grid)
    out = [(state, make_record(state, ode_at[0], params, spec, grid))]
    for i in range(1, len(marks)):
        try:
            _advance(stepper, arrays, initial.t, marks[i - 1], dt, marks[i] - marks[i - 1], cfg)
        except SolverError as exc:
            exc.partial = out
            raise
        state = _state_from(arrays, times[i], grid)
        out.append((state, make_record(state, ode_at[i], params, spec, grid)))
        if wall_clock_limit is not None and time.monotonic() - started > wall_clock_limit:
            exc = RunTimeout(f"wall-clock limit {wall_clock_limit}s hit at t={times[i]:.6g}")
            exc.partial = out
            raise exc
    return out


# -- verification ----------------------------------------------------------


def _observed_order(errors, ratio=2.0):
    errors = np.asarray(errors, dtype=float)
    if np.any(np.diff(errors) >= 0) or np.any(errors <= 0):
        raise InconclusiveError(f"errors are not monotonically decreasing: {errors}")
    return float(math.log(errors[-2] / errors[-1]) / math.log(ratio))


def _restrict(fine):
    return 0.5 * (fine[0::2] + fine[1::2])


def spatial_order_check(params: ModelParams, spec: SourceSpec, refinement_levels=3,
                        mode="diffusion", base_cells=16, t_end=0.1, dt_factor=0.1,
                        backend="auto"):
    """Observed spatial order of the 1D solver on N, 2N, 4N, ... cells, dt ~ dx^2.

    ``mode="diffusion"`` switches every term but cell diffusion off and
    compares with ``1 + exp(-D pi^2 t) cos(pi x)``.  ``mode="full"`` runs the
    whole system from smooth data and uses differences between successive
    levels (self-convergence).
    """
    if refinement_levels < 3:
        raise InconclusiveError("need at least three refinement levels")
    finals = []
    grids = []
    for level in range(refinement_levels):
        grid = Grid.interval(base_cells * 2 ** level)
        dx = grid.spacing[0]
        dt = dt_factor * dx * dx
        steps = _n_steps(t_end, dt)
        dt = t_end / steps
        (x,) = grid.centers()
        if mode == "diffusion":
            coef = _Coefficients(params.D, 0.0, 0.0, 0.0,
                                 (0.0, 0.0, 1.0, 0.0, 0.0, 1.0, np.zeros(grid.n_cells)))
            u0 = 1.0 + np.cos(np.pi * x)
            v0 = np.zeros(grid.n_cells)
        elif mode == "full":
            coef = _Coefficients.from_model(params, spec, grid)
            u0 = 0.5 * (1.0 + 0.3 * np.cos(np.pi * x))
            v0 = 1.0 + 0.3 * np.cos(2 * np.pi * x)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        stepper = _make_stepper(grid, coef, SchemeConfig(dt, cfl_safety=1.0, backend=backend))
        arrays = [u0.copy(), v0.copy(), None, None]
        _advance(stepper, arrays, 0.0, 0, dt, steps, SchemeConfig(dt, cfl_safety=1.0))
        finals.append(arrays[0])
        grids.append(grid)
    if mode == "diffusion":
        errors = []
        for u, grid in zip(finals, grids):
            (x,) = grid.centers()
            exact = 1.0 + math.exp(-params.D * math.pi ** 2 * t_end) * np.cos(np.pi * x)
            errors.append(math.sqrt(l2_norm_sq(u - exact, grid)))
    else:
        errors = [math.sqrt(l2_norm_sq(coarse - _restrict(fine), grid))
                  for coarse, fine, grid in zip(finals[:-1], finals[1:], grids[:-1])]
    return _observed_order(errors)


# -- snapshot export -------------------------------------------------------


def export_field(path, values, t: float, grid: Grid, binary=False):
    """Dump cell values in row-major order after a ``t=<time> n=<cells> dim=<d>`` header."""
    arr = np.ascontiguousarray(as_field(values, grid)).ravel()
    header = f"t={t!r} n={arr.size} dim={grid.dimension}\n"
    if binary:
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(arr.astype("<f8").tobytes())
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(header)
            for value in arr:
                fh.write(f"{value:.17g}\n")


def read_field(path):
    """Inverse of :func:`export_field`; returns ``(t, dim, values)``."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        meta = dict(item.split("=", 1) for item in header)
        n = int(meta["n"])
        body = fh.read()
    try:
        values = np.array([float(x) for x in body.decode("ascii").split()])
    except (UnicodeDecodeError, ValueError):
        values = None
    if values is None or values.size != n:
        values = np.frombuffer(body, dtype="<f8").copy()
    if values.size != n:
        raise ShapeError(f"expected {n} values, found {values.size}")
    return float(meta["t"]), int(meta["dim"]), values
