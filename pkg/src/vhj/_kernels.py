"""Numba inner loops for the explicit monotone scheme.

The update at interior node i is

    u_i' = u_i + dt * ( (u_{i+1} - 2 u_i + u_{i-1}) / h^2
                        - H((u_i - u_{i-1})/h, (u_{i+1} - u_i)/h)
                        + f_i )

with H the upwind Hamiltonian (max(p-,0)^2 + min(p+,0)^2)^(m/2) and the
boundary nodes pinned to the Dirichlet values.  The time step is refreshed
every `refresh` steps from the largest slope the Hamiltonian can actually
see; slopes pointing into the domain from the boundary layer never enter H
or its derivatives, so they do not constrain dt.
"""
from __future__ import annotations

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_NONFINITE = 1


@njit(cache=True, nogil=True)
def upwind_slope_bound(u, h):
    """Largest magnitude among max(p-,0) and -min(p+,0) over interior nodes."""
    n = u.shape[0] - 1
    P = 0.0
    for i in range(1, n):
        pm = (u[i] - u[i - 1]) / h
        pp = (u[i + 1] - u[i]) / h
        a = pm if pm > 0.0 else 0.0
        b = -pp if pp < 0.0 else 0.0
        q = a if a > b else b
        if q > P:
            P = q
    return P


@njit(cache=True, nogil=True)
def max_slope(u, h):
    """Largest one-sided difference quotient magnitude (diagnostic)."""
    n = u.shape[0] - 1
    g = 0.0
    for i in range(n):
        q = abs(u[i + 1] - u[i]) / h
        if q > g:
            g = q
    return g


@njit(cache=True, nogil=True)
def advance(u, v, t, t_stop, h, m, f, g_lo, g_hi, cfl, refresh, since, dt, grad_seen):
    """Step from t until t >= t_stop.

    On return u holds the state at the returned time and v the state one step
    earlier (for snapshot interpolation).  Returns
    (status, t, t_prev, since, dt, grad_seen).
    """
    n = u.shape[0] - 1
    half_m = 0.5 * m
    inv_h = 1.0 / h
    inv_h2 = inv_h * inv_h
    t_prev = t
    if t >= t_stop:
        return STATUS_OK, t, t, since, dt, grad_seen
    cur = u
    other = v
    flips = 0
    while t < t_stop:
        if since >= refresh or dt <= 0.0:
            P = upwind_slope_bound(cur, h)
            g = max_slope(cur, h)
            if g > grad_seen:
                grad_seen = g
            if not np.isfinite(P):
                break
            dt = cfl * h * h / (2.0 + h * m * P ** (m - 1.0))
            since = 0
        for i in range(1, n):
            lap = (cur[i + 1] - 2.0 * cur[i] + cur[i - 1]) * inv_h2
            pm = (cur[i] - cur[i - 1]) * inv_h
            pp = (cur[i + 1] - cur[i]) * inv_h
            a = pm if pm > 0.0 else 0.0
            b = pp if pp < 0.0 else 0.0
            A = a * a + b * b
            if m == 2.0:
                H = A
            else:
                H = A**half_m
            other[i] = cur[i] + dt * (lap - H + f[i])
        other[0] = g_lo
        other[n] = g_hi
        tmp = cur
        cur = other
        other = tmp
        flips += 1
        t_prev = t
        t = t + dt
        since += 1
        if not np.isfinite(cur[n // 2]):
            break
    # ensure u holds the current state and v the previous one
    if flips % 2 == 1:
        for i in range(n + 1):
            tmp2 = u[i]
            u[i] = v[i]
            v[i] = tmp2
    status = STATUS_OK if np.isfinite(u[n // 2]) else STATUS_NONFINITE
    if status == STATUS_OK and t < t_stop:
        status = STATUS_NONFINITE  # left the loop early via break
    return status, t, t_prev, since, dt, grad_seen
