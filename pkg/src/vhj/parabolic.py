"""Explicit monotone finite-difference solver for the evolution problem.

The scheme is upwind in the gradient term (Osher-Sethian form of |p|^m),
centered in the diffusion and explicit Euler in time, which makes each update
nondecreasing in the neighboring values under the CFL step used here.  That
discrete comparison principle is what the long-time classification and all
envelope checks lean on.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .errors import SolverAbort, VhjError
from .model import GridFunction, ProblemSpec

__all__ = [
    "SolverConfig",
    "Trajectory",
    "Classification",
    "numerical_hamiltonian",
    "stable_dt",
    "step",
    "solve_parabolic",
    "classify_longtime",
]


def numerical_hamiltonian(p_minus, p_plus, m: float):
    """Upwind value for |p|^m from one-sided slopes (monotone, consistent).

    Accepts scalars or arrays.  Nondecreasing in p_minus, nonincreasing in
    p_plus; equals |p|^m when both arguments are the same one-signed slope.
    """
    if not (1.0 < m <= 2.0):
        raise ValueError(f"m out of (1, 2]: {m}")
    a = np.maximum(p_minus, 0.0)
    b = np.minimum(p_plus, 0.0)
    A = a * a + b * b
    out = A ** (0.5 * m)
    if np.isscalar(p_minus) and np.isscalar(p_plus):
        return float(out)
    return out


def _upwind_bound(u: np.ndarray, h: float) -> float:
    pm = np.diff(u) / h
    a = np.maximum(pm[:-1], 0.0)
    b = np.maximum(-pm[1:], 0.0)
    if a.size == 0:
        return 0.0
    return float(max(a.max(), b.max()))


def stable_dt(problem: ProblemSpec, u: GridFunction, cfl_safety: float = 0.4) -> float:
    """Monotonicity-preserving explicit step: cfl * h^2 / (2 + h m P^(m-1)).

    P is the largest slope magnitude that can enter the upwind Hamiltonian
    (slopes pointing into the domain from a pinned boundary cannot), which is
    exactly what the monotonicity bound involves.
    """
    if not (0.0 < cfl_safety < 1.0):
        raise ValueError("cfl_safety must lie in (0, 1)")
    v = u.values
    if not np.all(np.isfinite(v)):
        raise ValueError("grid function contains non-finite values")
    h = problem.mesh.h
    P = _upwind_bound(v, h)
    return cfl_safety * h * h / (2.0 + h * problem.m * P ** (problem.m - 1.0))


def step(u: GridFunction, problem: ProblemSpec, dt: float) -> GridFunction:
    """One explicit Euler update; boundary nodes reset to the Dirichlet data."""
    if dt > stable_dt(problem, u, 0.5) * (1.0 + 1e-12):
        raise ValueError(f"dt={dt} violates the stability bound")
    v = u.values
    h = problem.mesh.h
    f = problem.f_nodes()
    lap = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / (h * h)
    H = numerical_hamiltonian((v[1:-1] - v[:-2]) / h, (v[2:] - v[1:-1]) / h, problem.m)
    out = v.copy()
    out[1:-1] = v[1:-1] + dt * (lap - H + f[1:-1])
    out[0] = problem.g_lo
    out[-1] = problem.g_hi
    if not np.all(np.isfinite(out)):
        raise SolverAbort("non-finite values after explicit step")
    return GridFunction(problem.mesh, out)


@dataclass(frozen=True)
class SolverConfig:
    """Knobs of a parabolic run; tolerances are overridable per experiment."""

    t_end: float
    snapshot_times: tuple = ()
    cfl_safety: float = 0.4
    gradient_cap: float = float("inf")
    escape_window: Optional[float] = None
    tol_steady_base: float = 1e-9
    escape_residual_tol: float = 1e-2
    dt_refresh_every: int = 100
    integrator: str = "explicit"  # "explicit" | "implicit" (long-horizon drift runs)

    def __post_init__(self) -> None:
        if self.t_end <= 0:
            raise ValueError("t_end must be positive")
        if self.integrator not in ("explicit", "implicit"):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if not (0.0 < self.cfl_safety < 1.0):
            raise ValueError("cfl_safety must lie in (0, 1)")
        ts = tuple(float(t) for t in self.snapshot_times)
        if any(t < 0 or t > self.t_end + 1e-12 for t in ts):
            raise ValueError("snapshot_times must lie in [0, t_end]")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("snapshot_times must be strictly increasing")
        object.__setattr__(self, "snapshot_times", ts)

    def with_(self, **kw) -> "SolverConfig":
        d = self.__dict__.copy()
        d.update(kw)
        return SolverConfig(**d)


@dataclass(frozen=True)
class Trajectory:
    problem: ProblemSpec
    snapshots: tuple  # of (t, GridFunction)
    final_time: float
    status: str  # "completed" | "aborted"
    abort_reason: Optional[str] = None
    max_slope_seen: float = 0.0

    def snapshot_times(self) -> np.ndarray:
        return np.array([t for t, _ in self.snapshots])

    def values_matrix(self) -> np.ndarray:
        return np.stack([g.values for _, g in self.snapshots])


class Stepper:
    """Resumable explicit integrator with exact-time snapshot interpolation.

    The dt sequence is a function of the state history alone (frozen between
    refreshes), so interleaving snapshot requests does not perturb it.
    """

    def __init__(self, problem: ProblemSpec, config: SolverConfig, u0: Optional[np.ndarray] = None):
        self.problem = problem
        self.config = config
        self.h = problem.mesh.h
        self.m = problem.m
        self.f = np.ascontiguousarray(problem.f_nodes())
        self.u = np.ascontiguousarray(u0.copy() if u0 is not None else problem.u0_nodes())
        if not np.all(np.isfinite(self.u)):
            raise ValueError("initial state contains non-finite values")
        self.v = self.u.copy()
        self.t = 0.0
        self.t_prev = 0.0
        self._since = 10**9  # force a dt refresh on first use
        self._dt = 0.0
        self.grad_seen = 0.0

    def advance_to(self, t_stop: float) -> np.ndarray:
        """Advance past t_stop and return the state interpolated at t_stop."""
        if t_stop < self.t_prev - 1e-12:
            raise ValueError(f"cannot rewind to t={t_stop} (t_prev={self.t_prev})")
        if t_stop > self.t:
            status, self.t, self.t_prev, self._since, self._dt, self.grad_seen = _kernels.advance(
                self.u,
                self.v,
                self.t,
                t_stop,
                self.h,
                self.m,
                self.f,
                self.problem.g_lo,
                self.problem.g_hi,
                self.config.cfl_safety,
                self.config.dt_refresh_every,
                self._since,
                self._dt,
                self.grad_seen,
            )
            if status != _kernels.STATUS_OK:
                raise SolverAbort(f"non-finite values at t={self.t:.6g}")
        if self.t == t_stop or self.t <= self.t_prev:
            return self.u.copy()
        # linear interpolation inside the step that crossed t_stop
        th = (t_stop - self.t_prev) / (self.t - self.t_prev)
        th = min(max(th, 0.0), 1.0)
        return (1.0 - th) * self.v + th * self.u


def solve_parabolic(problem: ProblemSpec, config: SolverConfig) -> Trajectory:
    """Run the evolution problem, collecting snapshots at the requested times."""
    stepper = Stepper(problem, config)
    times = list(config.snapshot_times)
    if not times or abs(times[-1] - config.t_end) > 1e-12:
        times = times + [config.t_end]
    snaps = []
    status, reason = "completed", None
    for tq in times:
        try:
            u = stepper.advance_to(tq)
        except SolverAbort as exc:
            status, reason = "aborted", str(exc)
            break
        snaps.append((tq, GridFunction(problem.mesh, u)))
    return Trajectory(
        problem=problem,
        snapshots=tuple(snaps),
        final_time=stepper.t if status == "completed" else stepper.t_prev,
        status=status,
        abort_reason=reason,
        max_slope_seen=stepper.grad_seen,
    )


@dataclass(frozen=True)
class Classification:
    verdict: str  # "converged" | "linear_escape" | "undetermined"
    u_inf: Optional[GridFunction] = None
    slope: Optional[float] = None
    diagnostics: dict = field(default_factory=dict)


def classify_longtime(problem: ProblemSpec, config: SolverConfig) -> Classification:
    """Decide between convergence to a steady state and linear escape.

    Samples the final two escape windows of the run.  Converged requires the
    sup-norm change across a full window to drop below the steady tolerance;
    linear escape requires the midpoint drift to fit a line with relative
    residual below ``escape_residual_tol``.
    """
    L = problem.mesh.length
    w = config.escape_window if config.escape_window is not None else 10.0 * L * L
    if w < 10.0 * L * L:
        raise ValueError(f"escape_window must be >= 10*length^2 = {10 * L * L}, got {w}")
    if config.t_end < 2.0 * w:
        raise ValueError("t_end must cover two escape windows")

    n_sub = 8
    ts = [config.t_end - 2.0 * w + j * (w / n_sub) for j in range(2 * n_sub + 1)]
    states = []
    if config.integrator == "implicit":
        from .stationary import implicit_advance

        u = problem.u0_nodes()
        t = 0.0
        f = problem.f_nodes()
        dt_macro = w / 16.0
        try:
            for tq in ts:
                u, t = implicit_advance(
                    u, problem.mesh.h, problem.m, f, problem.g_lo, problem.g_hi, t, tq, dt_macro
                )
                states.append(u.copy())
        except FloatingPointError as exc:
            raise SolverAbort(f"implicit integration failed: {exc}") from exc
    else:
        stepper = Stepper(problem, config)
        try:
            for tq in ts:
                states.append(stepper.advance_to(tq))
        except SolverAbort as exc:
            raise SolverAbort(f"trajectory aborted during classification: {exc}") from exc

    scale = 1.0 + problem.data_scale()
    tol_steady = config.tol_steady_base * scale
    steady_gap = float(np.max(np.abs(states[-1] - states[n_sub])))

    mid = problem.mesh.midpoint_index
    tarr = np.asarray(ts)
    varr = np.array([s[mid] for s in states])
    # window-span drift averages over the first half of the sampled range
    slopes_w = (varr[n_sub:] - varr[:-n_sub]) / w
    slope = float(np.mean(slopes_w[: n_sub + 1]))
    # linear fit over the last window
    tl, vl = tarr[n_sub:], varr[n_sub:]
    A = np.polyfit(tl, vl, 1)
    resid = vl - np.polyval(A, tl)
    slope_last = float(A[0])
    rel_res = float(np.sqrt(np.mean(resid**2)) / (abs(slope_last) * w + 1e-300))
    A0 = np.polyfit(tarr[: n_sub + 1], varr[: n_sub + 1], 1)
    slope_drift = abs(slope_last - float(A0[0]))

    diag = {
        "steady_gap": steady_gap,
        "tol_steady": tol_steady,
        "slope_last_window": slope_last,
        "slope_window_average": slope,
        "slope_fit_rel_residual": rel_res,
        "slope_drift_between_windows": slope_drift,
        "escape_window": w,
    }
    if steady_gap < tol_steady:
        return Classification("converged", GridFunction(problem.mesh, states[-1]), None, diag)
    if abs(slope) * w > 10.0 * tol_steady and rel_res < config.escape_residual_tol:
        return Classification("linear_escape", None, slope, diag)
    return Classification("undetermined", None, None, diag)
