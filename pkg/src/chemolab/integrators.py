"""Dormand-Prince 5(4) embedded Runge-Kutta integration.

Steps are truncated so that every requested output time is hit exactly,
which gives dense output without interpolation.  The fifth-order solution
is propagated; the embedded fourth-order one only feeds the error estimate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, StiffnessError

A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
# fifth minus fourth order weights
E1, E3, E4, E5, E6, E7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40

SAFETY = 0.9
MIN_FACTOR, MAX_FACTOR = 0.2, 5.0
# PI controller exponents (Hairer & Wanner II.4)
ALPHA, BETA = 0.7 / 5, 0.4 / 5


@dataclass
class IntegratorStats:
    steps: int = 0
    rejected: int = 0
    max_error_estimate: float = 0.0


def _dp_stages(fun, t, y, k1, h):
    k2 = fun(t + C2 * h, y + h * (A21 * k1))
    k3 = fun(t + C3 * h, y + h * (A31 * k1 + A32 * k2))
    k4 = fun(t + C4 * h, y + h * (A41 * k1 + A42 * k2 + A43 * k3))
    k5 = fun(t + C5 * h, y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4))
    k6 = fun(t + h, y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5))
    y_new = y + h * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6)
    k7 = fun(t + h, y_new)
    err = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)
    return y_new, k7, err


def _initial_step(fun, t0, y0, f0, span, rtol, atol):
    scale = atol + rtol * np.abs(y0)
    d0 = float(np.max(np.abs(y0) / scale))
    d1 = float(np.max(np.abs(f0) / scale))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    f1 = fun(t0 + h0, y0 + h0 * f0)
    d2 = float(np.max(np.abs(f1 - f0) / scale)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, span)


def dormand_prince(fun, t0, y0, t_end, output_times=None, rtol=1e-9, atol=1e-12,
                   check=None, max_steps=10_000_000):
    """Integrate ``y' = fun(t, y)`` from ``t0`` to ``t_end``.

    Parameters
    ----------
    fun : callable
        ``fun(t, y) -> ndarray`` right-hand side.
    output_times : sequence of float, optional
        Increasing times in ``[t0, t_end]`` at which the solution is recorded.
        ``t0`` and ``t_end`` are always included.
    rtol, atol : float
        A step is accepted when ``|err_i| <= atol + rtol * max(|y_i|, |y_new_i|)``.
    check : callable, optional
        ``check(t, y)`` called after every accepted step; may raise.

    Returns
    -------
    times : ndarray
    states : ndarray, shape (len(times), len(y0))
    stats : IntegratorStats
    """
    y = np.array(y0, dtype=float)
    if not np.all(np.isfinite(y)):
        raise NumericError("initial state is not finite")
    span = t_end - t0
    if not span > 0:
        raise ValueError("t_end must exceed t0")
    outs = sorted({float(t) for t in (output_times if output_times is not None else ())}
                  | {float(t0), float(t_end)})
    if outs[0] < t0 or outs[-1] > t_end:
        raise ValueError("output times must lie in [t0, t_end]")

    h_min = 1e-14 * abs(t_end)
    stats = IntegratorStats()
    times, states = [outs[0]], [y.copy()]
    t = float(t0)
    k1 = fun(t, y)
    h = _initial_step(fun, t, y, k1, span, rtol, atol)
    err_prev = 1.0
    i_out = 1
    while i_out < len(outs):
        target = outs[i_out]
        remaining = target - t
        hit = h >= remaining * (1 - 1e-12)
        step = remaining if hit else h
        y_new, k7, err = _dp_stages(fun, t, y, k1, step)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = float(np.max(np.abs(err) / scale))
        if not math.isfinite(err_norm) or not np.all(np.isfinite(y_new)):
            if step <= h_min:
                raise NumericError(f"non-finite state near t={t:.6g}")
            h = step * MIN_FACTOR
            stats.rejected += 1
            continue
        if err_norm <= 1.0:
            t = target if hit else t + step
            y, k1 = y_new, k7
            stats.steps += 1
            stats.max_error_estimate = max(stats.max_error_estimate, float(np.max(np.abs(err))))
            if check is not None:
                check(t, y)
            if hit:
                times.append(t)
                states.append(y.copy())
                i_out += 1
            if err_norm == 0.0:
                factor = MAX_FACTOR
            else:
                factor = SAFETY * err_norm ** -ALPHA * err_prev ** BETA
                factor = min(MAX_FACTOR, max(MIN_FACTOR, factor))
            err_prev = max(err_norm, 1e-4)
            # a truncated landing step says nothing about the natural step size
            h = max(h, step * factor) if hit else step * factor
        else:
            stats.rejected += 1
            h = step * max(MIN_FACTOR, SAFETY * err_norm ** -(1 / 5))
        if h < h_min:
            raise StiffnessError(f"step size {h:.3g} underflowed at t={t:.6g}")
        if stats.steps + stats.rejected > max_steps:
            raise StiffnessError("maximum number of steps exceeded")
    return np.array(times), np.array(states), stats


def dormand_prince_fixed(fun, t0, y0, t_end, n_steps):
    """Fixed-step Dormand-Prince (fifth-order solution), for order checks."""
    y = np.array(y0, dtype=float)
    h = (t_end - t0) / n_steps
    t = float(t0)
    k1 = fun(t, y)
    for i in range(n_steps):
        y, k1, _ = _dp_stages(fun, t, y, k1, h)
        t = t0 + (i + 1) * h
    return y
