"""Implicit solvers for the stationary discretization.

These accelerate the approach to steady states of the explicit scheme.  The
backward-Euler continuation solves the same spatial discretization with an
unconditionally stable implicit step and a geometrically growing pseudo-time
step: bounded iterates converge to a fixed point of the explicit update,
unbounded descent means the stationary problem has no solution in range.

The discrete system admits spurious steep solutions with one-cell boundary
layers far below the physical branch, so results are only accepted by callers
together with proximity and stability checks (see ergodic.py).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

__all__ = ["steady_residual", "relative_residual", "newton_polish", "be_continuation", "SteadyOutcome"]


def _ham_terms(v: np.ndarray, h: float, m: float):
    pm = np.diff(v) / h
    a = np.maximum(pm[:-1], 0.0)
    b = np.minimum(pm[1:], 0.0)
    A = a * a + b * b
    H = A ** (0.5 * m)
    Am = np.where(A > 0.0, A, 1.0) ** (0.5 * m - 1.0)
    dH_dpm = np.where(A > 0.0, m * Am * a, 0.0)
    dH_dpp = np.where(A > 0.0, m * Am * b, 0.0)
    return H, dH_dpm, dH_dpp


def steady_residual(v: np.ndarray, h: float, m: float, f: np.ndarray) -> np.ndarray:
    """Interior residual of the stationary scheme (length n-1)."""
    H, _, _ = _ham_terms(v, h, m)
    lap = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / (h * h)
    return lap - H + f[1:-1]


def relative_residual(v: np.ndarray, h: float, m: float, f: np.ndarray) -> float:
    """Residual scaled nodewise by the magnitude of the balancing terms.

    Steep boundary layers make the absolute residual meaningless (the terms
    being balanced reach 1/h^2 scale), so convergence is judged relative to
    them.
    """
    H, _, _ = _ham_terms(v, h, m)
    lap = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / (h * h)
    F = lap - H + f[1:-1]
    return float(np.max(np.abs(F) / (1.0 + np.abs(lap) + H + np.abs(f[1:-1]))))


def _jacobian_bands(v: np.ndarray, h: float, m: float):
    _, dH_dpm, dH_dpp = _ham_terms(v, h, m)
    lower = 1.0 / h**2 + dH_dpm / h
    diag = -2.0 / h**2 - dH_dpm / h + dH_dpp / h
    upper = 1.0 / h**2 - dH_dpp / h
    return lower, diag, upper


def newton_polish(
    v0: np.ndarray,
    h: float,
    m: float,
    f: np.ndarray,
    g_lo: float,
    g_hi: float,
    tol: float = 1e-12,
    max_iter: int = 60,
):
    """Damped Newton on the stationary system from a near-solution guess.

    Returns (v, converged).  The step is clamped in sup norm, which is enough
    when the initial guess is already in the basin; callers must not trust a
    result that moved far from the guess.
    """
    n = v0.shape[0] - 1
    v = v0.copy()
    v[0], v[n] = g_lo, g_hi
    for _ in range(max_iter):
        if relative_residual(v, h, m, f) < tol:
            return v, True
        F = steady_residual(v, h, m, f)
        lower, diag, upper = _jacobian_bands(v, h, m)
        ab = np.zeros((3, n - 1))
        ab[0, 1:] = upper[:-1]
        ab[1, :] = diag
        ab[2, :-1] = lower[1:]
        try:
            dv = solve_banded((1, 1), ab, -F)
        except Exception:
            return v, False
        cap = 0.25 * (1.0 + float(np.max(np.abs(v))))
        step = min(1.0, cap / (float(np.max(np.abs(dv))) + 1e-300))
        v[1:-1] += step * dv
        if not np.all(np.isfinite(v)):
            return v, False
    return v, relative_residual(v, h, m, f) < tol


@dataclass(frozen=True)
class SteadyOutcome:
    state: np.ndarray
    status: str  # "fixed_point" | "descent" | "stall"
    iterations: int
    residual: float


def _be_step(v, dt, h, m, f, g_lo, g_hi, inner_max=16):
    """One nonlinear backward-Euler step w = v + dt F(w); Newton inner loop.

    Converged when the Newton increment stagnates at rounding level; the
    residual itself has a machine floor set by the steep-node term sizes.
    """
    n = v.shape[0] - 1
    w = v.copy()
    w[0], w[n] = g_lo, g_hi
    for _ in range(inner_max):
        Fw = steady_residual(w, h, m, f)
        G = (w[1:-1] - v[1:-1]) - dt * Fw
        lower, diag, upper = _jacobian_bands(w, h, m)
        ab = np.zeros((3, n - 1))
        ab[0, 1:] = -dt * upper[:-1]
        ab[1, :] = 1.0 - dt * diag
        ab[2, :-1] = -dt * lower[1:]
        try:
            dw = solve_banded((1, 1), ab, -G)
        except Exception:
            return w, False
        w[1:-1] += dw
        if not np.all(np.isfinite(w)):
            return w, False
        if float(np.max(np.abs(dw))) <= 1e-12 * (1.0 + float(np.max(np.abs(w)))):
            return w, True
    return w, False


def implicit_advance(
    u: np.ndarray,
    h: float,
    m: float,
    f: np.ndarray,
    g_lo: float,
    g_hi: float,
    t: float,
    t_stop: float,
    dt_macro: float,
) -> tuple[np.ndarray, float]:
    """Integrate to t_stop with nonlinear backward-Euler macro steps.

    Unconditionally stable; used for long-horizon drift measurements where
    the explicit CFL step collapses with the steepening boundary layer.  The
    escape rate and steady states agree with the explicit scheme (same
    spatial operator); only transient details differ at O(dt_macro).
    """
    v = u.copy()
    while t < t_stop - 1e-12:
        dt = min(dt_macro, t_stop - t)
        w, ok = _be_step(v, dt, h, m, f, g_lo, g_hi)
        tries = 0
        while not ok:
            dt *= 0.25
            tries += 1
            if tries > 40:
                raise FloatingPointError("implicit step failed to converge")
            w, ok = _be_step(v, dt, h, m, f, g_lo, g_hi)
        v = w
        t += dt
    return v, t


def be_continuation(
    v0: np.ndarray,
    h: float,
    m: float,
    f: np.ndarray,
    g_lo: float,
    g_hi: float,
    drop_limit: float,
    tol: float = 1e-11,
    max_steps: int = 400,
) -> SteadyOutcome:
    """Backward-Euler pseudo-time continuation from v0.

    Converges to a fixed point when one attracts v0; declares descent when the
    center value has fallen by more than drop_limit (no steady state below).
    """
    n = v0.shape[0] - 1
    v = v0.copy()
    v[0], v[n] = g_lo, g_hi
    center0 = float(v[n // 2])
    dt = h * h
    dt_floor = 1e-6 * h * h
    fails = 0
    for k in range(max_steps):
        r = relative_residual(v, h, m, f)
        if r < tol:
            return SteadyOutcome(v, "fixed_point", k, r)
        if v[n // 2] < center0 - drop_limit:
            return SteadyOutcome(v, "descent", k, r)
        w, ok = _be_step(v, dt, h, m, f, g_lo, g_hi)
        if ok:
            v = w
            dt = min(dt * 2.5, 1e12)
            fails = 0
        else:
            dt *= 0.2
            fails += 1
            if dt < dt_floor and fails > 60:
                return SteadyOutcome(v, "stall", k, r)
    return SteadyOutcome(v, "stall", max_steps, relative_residual(v, h, m, f))
