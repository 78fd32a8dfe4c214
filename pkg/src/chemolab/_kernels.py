"""Compiled 1D IMEX kernel.

One call advances up to ``nsteps`` steps in place and stops at the first
failure, leaving the arrays at the last completed step.
"""
import math

import numpy as np
from numba import njit

# status codes written to info[1]
OK, CFL, NAN, NEGATIVE, SPLIT = 0, 1, 2, 3, 4

NEG_TOL = -1e-12
SPLIT_TOL = 1e-10


@njit(cache=True, nogil=True)
def thomas_factor(diag, off):
    """Factor the symmetric tridiagonal matrix (diag, off on both sides)."""
    n = diag.shape[0]
    cp = np.empty(n)
    inv = np.empty(n)
    inv[0] = 1.0 / diag[0]
    cp[0] = off * inv[0]
    for i in range(1, n):
        m = diag[i] - off * cp[i - 1]
        inv[i] = 1.0 / m
        cp[i] = off * inv[i]
    return cp, inv


@njit(cache=True, nogil=True)
def thomas_solve(off, cp, inv, d, x):
    n = d.shape[0]
    x[0] = d[0] * inv[0]
    for i in range(1, n):
        x[i] = (d[i] - off * x[i - 1]) * inv[i]
    for i in range(n - 2, -1, -1):
        x[i] -= cp[i] * x[i + 1]


@njit(cache=True, nogil=True)
def advance_1d(u, v, w, z, track, step0, t0, dt, nsteps, dx, D, chi, r, a,
               f_mean, f_amp, f_period, f_phase, p_scale, p_rate, q,
               cfl, v_cp, v_inv, v_off, u_cp, u_inv, u_off, info):
    """Advance (u, v[, w, z]) by up to ``nsteps`` IMEX steps.

    Step k runs from t0 + (step0 + k) dt.  ``info`` receives
    (steps_done, status, offending cell, CFL number).
    """
    n = u.shape[0]
    f = np.empty(n)
    rhs = np.empty(n)
    vn = np.empty(n)
    wn = np.empty(n)
    zn = np.empty(n)
    un = np.empty(n)
    omega = 2.0 * math.pi / f_period
    for s in range(nsteps):
        t = t0 + (step0 + s) * dt
        ft = f_mean + f_amp * math.sin(omega * (t + f_phase))
        pt = p_scale * math.exp(-p_rate * t)
        for i in range(n):
            f[i] = ft + pt * q[i]
        # chemical: implicit diffusion and decay, explicit production and supply
        for i in range(n):
            rhs[i] = v[i] + dt * (a * u[i] + f[i])
        thomas_solve(v_off, v_cp, v_inv, rhs, vn)
        if track:
            for i in range(n):
                rhs[i] = w[i] + dt * a * u[i]
            thomas_solve(v_off, v_cp, v_inv, rhs, wn)
            for i in range(n):
                rhs[i] = z[i] + dt * f[i]
            thomas_solve(v_off, v_cp, v_inv, rhs, zn)
        vmax = 0.0
        for i in range(n - 1):
            vel = abs(chi * (vn[i + 1] - vn[i]) / dx)
            if vel > vmax:
                vmax = vel
        courant = vmax * dt / dx
        if courant > cfl:
            info[0] = s
            info[1] = CFL
            info[2] = -1
            info[3] = courant
            return
        # cells: explicit reaction using the new chemical
        for i in range(n):
            rhs[i] = u[i] + dt * (r * u[i] * (1.0 - u[i]) - u[i] * vn[i])
        # faces: conservative upwind flux J = -chi u grad(v)
        for i in range(n - 1):
            vel = -chi * (vn[i + 1] - vn[i]) / dx
            up = u[i] if vel > 0.0 else u[i + 1]
            flux = dt * vel * up / dx
            rhs[i] -= flux
            rhs[i + 1] += flux
        thomas_solve(u_off, u_cp, u_inv, rhs, un)
        for i in range(n):
            if not (math.isfinite(un[i]) and math.isfinite(vn[i])):
                info[0] = s
                info[1] = NAN
                info[2] = i
                info[3] = courant
                return
        for i in range(n):
            if un[i] < NEG_TOL or vn[i] < NEG_TOL:
                info[0] = s
                info[1] = NEGATIVE
                info[2] = i
                info[3] = courant
                return
        if track:
            vabs = 0.0
            for i in range(n):
                if abs(vn[i]) > vabs:
                    vabs = abs(vn[i])
            for i in range(n):
                if abs(wn[i] + zn[i] - vn[i]) > SPLIT_TOL * (1.0 + vabs):
                    info[0] = s
                    info[1] = SPLIT
                    info[2] = i
                    info[3] = courant
                    return
            for i in range(n):
                w[i] = wn[i]
                z[i] = zn[i]
        for i in range(n):
            u[i] = un[i]
            v[i] = vn[i]
        info[3] = courant
    info[0] = nsteps
    info[1] = OK
    info[2] = -1
