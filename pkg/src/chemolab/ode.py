"""The spatially homogeneous system and its periodic behaviour.

    u' = r u (1 - u) - u v
    v' = a u - v + ftilde(t)

together with the split form (v = w + z, w' = a u - w, z' = ftilde - z),
the constant-source equilibria, the growth-rate thresholds and the
periodic orbit machinery.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate

from .errors import DomainError, NumericError, ThresholdError
from .integrators import IntegratorStats, dormand_prince
from .model import (Constant, ModelParams, SourceSpec, eval_source_homogeneous,
                    ftilde_sup_norm, source_period)

NEG_TOL = -1e-12


@dataclass(frozen=True)
class OdeState:
    u_tilde: float
    v_tilde: float
    t: float = 0.0

    def as_array(self):
        return np.array([self.u_tilde, self.v_tilde])


@dataclass(frozen=True)
class SplitOdeState:
    u_tilde: float
    w_tilde: float
    z_tilde: float
    t: float = 0.0

    @classmethod
    def from_unsplit(cls, state: OdeState):
        half = 0.5 * state.v_tilde
        return cls(state.u_tilde, half, half, state.t)


@dataclass
class OdeTrajectory:
    samples: list
    integrator_stats: IntegratorStats = field(default_factory=IntegratorStats)

    @property
    def times(self):
        return np.array([s.t for s in self.samples])

    def values(self):
        """Array of shape (n_samples, n_components)."""
        return np.array([[getattr(s, k) for k in _components(s)] for s in self.samples])

    @property
    def final(self):
        return self.samples[-1]


def _components(state):
    if isinstance(state, SplitOdeState):
        return ("u_tilde", "w_tilde", "z_tilde")
    return ("u_tilde", "v_tilde")


def _ftilde_callable(spec: SourceSpec):
    if isinstance(spec, Constant):
        f0 = float(spec.f0)
        return lambda t: f0
    ft = spec.ftilde
    m, amp, w, ph = ft.mean_level, ft.amplitude, 2 * math.pi / ft.period, ft.phase
    return lambda t: m + amp * math.sin(w * (t + ph))


def ode_rhs(state: OdeState, t: float, params: ModelParams, spec: SourceSpec):
    u, v = state.u_tilde, state.v_tilde
    if not (math.isfinite(u) and math.isfinite(v)):
        raise NumericError("ODE state is not finite")
    du = params.r * u * (1.0 - u) - u * v
    dv = params.a * u - v + eval_source_homogeneous(spec, t)
    return du, dv


def _make_rhs(params, spec):
    r, a = params.r, params.a
    ftilde = _ftilde_callable(spec)

    def fun(t, y):
        u, v = y
        return np.array([r * u * (1.0 - u) - u * v, a * u - v + ftilde(t)])
    return fun


def _make_split_rhs(params, spec):
    r, a = params.r, params.a
    ftilde = _ftilde_callable(spec)

    def fun(t, y):
        u, w, z = y
        return np.array([r * u * (1.0 - u) - u * (w + z), a * u - w, ftilde(t) - z])
    return fun


def _nonneg_check(t, y):
    if y.min() < NEG_TOL:
        raise NumericError(f"ODE state went negative at t={t:.6g}: {y}")


def _check_tolerances(t_end, rel_tol, abs_tol):
    if not t_end > 0:
        raise DomainError("t_end must be > 0")
    for tol in (rel_tol, abs_tol):
        if not 0 < tol <= 1e-2:
            raise DomainError("tolerances must lie in (0, 1e-2]")


def integrate_ode(initial: OdeState, params: ModelParams, spec: SourceSpec, t_end: float,
                  output_times=None, rel_tol=1e-9, abs_tol=1e-12) -> OdeTrajectory:
    """Integrate the homogeneous system from ``initial.t`` to ``t_end``."""
    _check_tolerances(t_end, rel_tol, abs_tol)
    y0 = initial.as_array()
    check = _nonneg_check if y0.min() >= 0 else None
    times, ys, stats = dormand_prince(_make_rhs(params, spec), initial.t, y0, t_end,
                                      output_times, rel_tol, abs_tol, check=check)
    samples = [OdeState(float(y[0]), float(y[1]), float(t)) for t, y in zip(times, ys)]
    return OdeTrajectory(samples, stats)


def integrate_ode_batch(initials, params_list, spec: SourceSpec, t_end: float,
                        output_times=None, rel_tol=1e-9, abs_tol=1e-12):
    """Integrate several (initial, params) pairs as one stacked system.

    All trajectories share the step sequence, and the error test covers
    every component, so each one is integrated at least as accurately as it
    would be alone.  Intended for parameter scans where per-step Python
    overhead dominates.
    """
    if len(initials) != len(params_list) or not initials:
        raise ValueError("need one initial state per parameter set")
    _check_tolerances(t_end, rel_tol, abs_tol)
    if len({s.t for s in initials}) != 1:
        raise ValueError("batched trajectories must share the initial time")
    r = np.array([p.r for p in params_list])
    a = np.array([p.a for p in params_list])
    ftilde = _ftilde_callable(spec)
    n = len(initials)

    def fun(t, y):
        u, v = y[:n], y[n:]
        return np.concatenate([r * u * (1.0 - u) - u * v, a * u - v + ftilde(t)])

    y0 = np.array([s.u_tilde for s in initials] + [s.v_tilde for s in initials])
    check = _nonneg_check if y0.min() >= 0 else None
    times, ys, stats = dormand_prince(fun, initials[0].t, y0, t_end, output_times,
                                      rel_tol, abs_tol, check=check)
    return [OdeTrajectory([OdeState(float(y[i]), float(y[n + i]), float(t))
                           for t, y in zip(times, ys)], stats) for i in range(n)]


def integrate_split_ode(initial: SplitOdeState, params: ModelParams, spec: SourceSpec,
                        t_end: float, output_times=None, rel_tol=1e-9,
                        abs_tol=1e-12) -> OdeTrajectory:
    _check_tolerances(t_end, rel_tol, abs_tol)
    y0 = np.array([initial.u_tilde, initial.w_tilde, initial.z_tilde])
    check = _nonneg_check if y0.min() >= 0 else None
    times, ys, stats = dormand_prince(_make_split_rhs(params, spec), initial.t, y0, t_end,
                                      output_times, rel_tol, abs_tol, check=check)
    samples = [SplitOdeState(*map(float, y), float(t)) for t, y in zip(times, ys)]
    return OdeTrajectory(samples, stats)


# -- equilibria and thresholds ----------------------------------------------


@dataclass(frozen=True)
class Equilibria:
    trivial: tuple
    interior: Optional[tuple]
    stability: str  # "interior_stable", "trivial_stable" or "degenerate"

    @property
    def stable(self):
        return self.trivial if self.interior is None else self.interior


def equilibrium_constant_f(params: ModelParams, f0: float) -> Equilibria:
    """Spatially homogeneous steady states for a constant supply ``f0``.

    The interior state exists (and is the stable one) iff ``f0 < r``.
    """
    if f0 < 0:
        raise DomainError("f0 must be >= 0")
    r, a = params.r, params.a
    if f0 < r:
        interior = ((r - f0) / (r + a), r * (f0 + a) / (r + a))
        return Equilibria((0.0, float(f0)), interior, "interior_stable")
    tag = "degenerate" if f0 == r else "trivial_stable"
    return Equilibria((0.0, float(f0)), None, tag)


def _periodic_ftilde(spec):
    if isinstance(spec, Constant):
        raise DomainError("source has no periodic homogeneous part")
    return spec.ftilde


def r_min_a0(spec: SourceSpec) -> float:
    """Period average of ftilde; the exact survival threshold when a = 0."""
    return _periodic_ftilde(spec).average()


def r_min_a_pos(initial: OdeState, params: ModelParams, spec: SourceSpec) -> float:
    """Sufficient growth rate for persistence of u_tilde when a > 0 (not sharp)."""
    return max(initial.v_tilde,
               params.a * max(initial.u_tilde, 1.0) + ftilde_sup_norm(spec))


def _sine_exp_antiderivative(m, amp, omega, phi, t):
    """Integral over [0, t] of (m + amp sin(omega s + phi)) e^s ds."""
    def prim(s):
        return math.exp(s) * (math.sin(omega * s + phi) - omega * math.cos(omega * s + phi))
    return m * math.expm1(t) + amp * (prim(t) - prim(0.0)) / (1.0 + omega * omega)


def periodic_initials_a0(params: ModelParams, spec: SourceSpec):
    """Initial values of the unique positive T-periodic solution when a = 0.

    v0 = (e^T - 1)^-1 * int_0^T ftilde(s) e^s ds and
    u0 = (e^{E(T)} - 1) / int_0^T r e^{E(s)} ds with
    E(s) = int_0^s (r - v_per(tau)) dtau, v_per the periodic chemical.

    ``v_per`` has a closed form for the sinusoidal family, which turns E into
    a closed form as well; only the outer integral needs quadrature.
    """
    if params.a != 0:
        raise DomainError("periodic_initials_a0 requires a = 0; use find_periodic_orbit_a_pos")
    ft = _periodic_ftilde(spec)
    r = params.r
    threshold = ft.average()
    if not r > threshold:
        raise ThresholdError(f"r = {r} does not exceed the period average {threshold}")
    m, amp, T = ft.mean_level, ft.amplitude, ft.period
    omega = 2 * math.pi / T
    phi = omega * ft.phase

    v0 = _sine_exp_antiderivative(m, amp, omega, phi, T) / math.expm1(T)

    def v_per(s):
        return math.exp(-s) * (v0 + _sine_exp_antiderivative(m, amp, omega, phi, s))

    def f_int(s):
        return m * s + amp / omega * (math.cos(phi) - math.cos(omega * s + phi))

    # int_0^s v_per = int_0^s ftilde - (v_per(s) - v0), from v' = -v + ftilde
    def exponent(s):
        return r * s - f_int(s) + v_per(s) - v0

    e_T = T * (r - m)
    # scaled by e^{-E(T)} so large r*T cannot overflow
    denom, _ = integrate.quad(lambda s: r * math.exp(exponent(s) - e_T), 0.0, T,
                              epsabs=0.0, epsrel=1e-13, limit=200)
    u0 = -math.expm1(-e_T) / denom
    if not (u0 > 0 and v0 > 0):
        raise NumericError(f"periodic initial values are not positive: {(u0, v0)}")
    return u0, v0


def period_map(x0, params: ModelParams, spec: SourceSpec, period: float,
               rel_tol=1e-10, abs_tol=1e-13):
    """Flow of the homogeneous system over one period, started at time 0."""
    traj = integrate_ode(OdeState(float(x0[0]), float(x0[1])), params, spec, period,
                         rel_tol=rel_tol, abs_tol=abs_tol)
    return np.array([traj.final.u_tilde, traj.final.v_tilde])


@dataclass(frozen=True)
class PeriodicOrbitResult:
    u0: float
    v0: float
    residual: float
    converged: bool
    iterations: int


def find_periodic_orbit_a_pos(params: ModelParams, spec: SourceSpec, guess: Optional[OdeState] = None,
                              max_iters=50, tol=1e-9, period=None, rel_tol=1e-10,
                              abs_tol=1e-13) -> PeriodicOrbitResult:
    """Search for a fixed point of the period map when a > 0.

    Plain fixed-point iteration is tried first; whenever it contracts slower
    than halving per iterate, a Newton step on ``P(x) - x`` with a
    finite-difference Jacobian is taken instead (backtracked if it does not
    reduce the residual).  This is a numerical probe; ``converged`` is only
    set when the residual is at or below ``tol``.
    """
    if params.a <= 0:
        raise DomainError("a must be > 0; use periodic_initials_a0 for a = 0")
    if period is None:
        period = source_period(spec)
        if period is None:
            raise DomainError("constant source: pass an explicit period")
    if guess is None:
        a0 = ModelParams(params.D, params.chi, params.r, 0.0)
        try:
            guess = OdeState(*periodic_initials_a0(a0, spec))
        except (ThresholdError, DomainError):
            guess = OdeState(0.5, ftilde_sup_norm(spec))

    def pmap(x):
        return period_map(x, params, spec, period, rel_tol, abs_tol)

    x = np.array([guess.u_tilde, guess.v_tilde], dtype=float)
    px = pmap(x)
    res = float(np.max(np.abs(px - x)))
    best = (res, x.copy())
    growth = 0
    for it in range(1, max_iters + 1):
        if res <= tol:
            return PeriodicOrbitResult(float(x[0]), float(x[1]), res, True, it - 1)
        # plain iterate
        x_fp = np.maximum(px, 0.0)
        p_fp = pmap(x_fp)
        res_fp = float(np.max(np.abs(p_fp - x_fp)))
        if res_fp <= 0.5 * res:
            x_new, p_new, res_new = x_fp, p_fp, res_fp
        else:
            x_new, p_new, res_new = _newton_step(pmap, x, px, res)
            if res_fp < res_new:
                x_new, p_new, res_new = x_fp, p_fp, res_fp
        growth = growth + 1 if res_new > res else 0
        x, px, res = x_new, p_new, res_new
        if res < best[0]:
            best = (res, x.copy())
        if growth >= 10:
            break
    res, x = best
    return PeriodicOrbitResult(float(x[0]), float(x[1]), res, res <= tol, max_iters)


def _newton_step(pmap, x, px, res):
    g = px - x
    jac = np.empty((2, 2))
    for j in range(2):
        eps = 1e-6 * max(1.0, abs(x[j]))
        xp = x.copy()
        xp[j] += eps
        jac[:, j] = (pmap(xp) - xp - g) / eps
    try:
        delta = np.linalg.solve(jac, -g)
    except np.linalg.LinAlgError:
        return x, px, res
    lam = 1.0
    for _ in range(8):
        x_try = np.maximum(x + lam * delta, 0.0)
        p_try = pmap(x_try)
        r_try = float(np.max(np.abs(p_try - x_try)))
        if r_try < res:
            return x_try, p_try, r_try
        lam *= 0.5
    return x_try, p_try, r_try


@dataclass(frozen=True)
class BoundCheck:
    ubound_ok: bool
    vbound_ok: bool
    u_lower_observed: float
    u_excess: float
    v_excess: float


def check_lemma32_bounds(traj: OdeTrajectory, params: ModelParams, spec: SourceSpec,
                         slack=1e-9) -> BoundCheck:
    """Check u <= max(u0, 1) and v <= max(v0, a max(u0, 1) + sup ftilde) on every sample.

    ``u_excess``/``v_excess`` are the largest overshoots (negative when the
    bound holds with room to spare).
    """
    vals = np.array([[s.u_tilde, s.v_tilde] for s in traj.samples])
    u0, v0 = vals[0]
    u_cap = max(u0, 1.0)
    v_cap = max(v0, params.a * u_cap + ftilde_sup_norm(spec))
    u_excess = float(np.max(vals[:, 0]) - u_cap)
    v_excess = float(np.max(vals[:, 1]) - v_cap)
    return BoundCheck(u_excess <= slack, v_excess <= slack, float(np.min(vals[:, 0])),
                      u_excess, v_excess)
