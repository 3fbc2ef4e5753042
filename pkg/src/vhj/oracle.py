"""Closed-form and quadrature ground truth for constant sources on an interval.

For f identically equal to f0 on (-R, R) the additive eigenvalue of the
explosive stationary problem has a one-dimensional reduction: with
p = phi' and a = -c0 > 0, p solves p' = |p|^m + a from p(0) = 0 and blows
up after the half-length R, which pins a through

    integral_0^inf dp / (p^m + a) = R.

Everything in this module is independent of the finite-difference code and
is used to cross-check it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq

from .model import GridFunction, Mesh1D

__all__ = [
    "OracleResult",
    "ShootingProfile",
    "quad_K",
    "closed_form_K",
    "c_exact_constant_f",
    "hopf_cole_eigenvalue",
    "shoot_profile",
    "example25_threshold",
    "blowup_exponent",
    "blowup_prefactor",
    "gradient_prefactor",
]

P_BLOWUP = 1e8  # slope magnitude treated as "blown up" by the shooting integrator


def blowup_exponent(m: float) -> float:
    """Rate alpha of the d^-alpha divergence of the explosive profile (m < 2)."""
    return (2.0 - m) / (m - 1.0)


def blowup_prefactor(m: float) -> float:
    """Constant in front of d^-alpha in the boundary expansion (m < 2)."""
    if not m < 2.0:
        raise ValueError("prefactor is defined for m < 2 (the m = 2 profile is logarithmic)")
    return (m - 1.0) ** ((m - 2.0) / (m - 1.0)) / (2.0 - m)


def gradient_prefactor(m: float) -> float:
    """Limit of d^(1/(m-1)) |phi'| at the boundary."""
    return (m - 1.0) ** (-1.0 / (m - 1.0))


def closed_form_K(m: float) -> float:
    return 2.0 * np.pi / (m * np.sin(np.pi / m))


def quad_K(m: float) -> float:
    """Adaptive quadrature of the full-line integral of 1/(|s|^m + 1).

    Raises for m <= 1 where the integral diverges; the result is verified
    against the closed form to 1e-10 relative.
    """
    if m <= 1.0:
        raise ValueError(f"integral diverges for m <= 1 (got m={m})")
    val, err = quad(lambda s: 1.0 / (1.0 + s**m), 0.0, np.inf, epsabs=0.0, epsrel=1e-13, limit=400)
    K = 2.0 * val
    ref = closed_form_K(m)
    if abs(K - ref) > 1e-10 * abs(ref):
        raise ArithmeticError(f"quadrature {K!r} disagrees with closed form {ref!r} for m={m}")
    return K


def hopf_cole_eigenvalue(R: float) -> float:
    """m = 2 value of c0 via the principal Dirichlet eigenvalue of psi'' = c psi."""
    return -((np.pi / (2.0 * R)) ** 2)


@dataclass(frozen=True)
class OracleResult:
    c_exact: float
    K_m: float
    method: str  # "quadrature" | "eigenvalue"
    profile: GridFunction | None = None

    def to_dict(self) -> dict:
        return {"c_exact": self.c_exact, "K_m": self.K_m, "method": self.method}


def _blowup_length(a: float, m: float) -> float:
    """integral_0^inf dp / (p^m + a)."""
    val, _ = quad(lambda p: 1.0 / (p**m + a), 0.0, np.inf, epsabs=0.0, epsrel=1e-13, limit=400)
    return val


def c_exact_constant_f(m: float, R: float, f0: float = 0.0) -> OracleResult:
    """Ergodic constant for f == f0 on (-R, R), by length-condition root finding.

    The root of integral_0^inf dp/(p^m + a) = R in a gives c0 = -a, and the
    constant source shifts it to c = c0 - f0.  The closed form
    -(K/(2R))^(m/(m-1)) and, for m = 2, the Dirichlet eigenvalue are used
    as independent consistency checks.
    """
    if not (1.0 < m <= 2.0):
        raise ValueError(f"m out of (1, 2]: {m}")
    if R <= 0:
        raise ValueError(f"R must be positive: {R}")
    K = quad_K(m)
    a_closed = (K / (2.0 * R)) ** (m / (m - 1.0))
    a = brentq(
        lambda a_: _blowup_length(a_, m) - R,
        a_closed * 0.5,
        a_closed * 2.0,
        xtol=1e-300,
        rtol=8.9e-16,
        maxiter=200,
    )
    if abs(a - a_closed) > 1e-10 * a_closed:
        raise ArithmeticError(
            f"length-condition root {a!r} disagrees with closed form {a_closed!r}"
        )
    c0 = -a
    if m == 2.0:
        ev = hopf_cole_eigenvalue(R)
        if abs(c0 - ev) > 1e-10 * abs(ev):
            raise ArithmeticError(f"quadrature c0 {c0!r} vs eigenvalue {ev!r} disagree")
    return OracleResult(c_exact=c0 - f0, K_m=K, method="quadrature")


@dataclass(frozen=True)
class ShootingProfile:
    """Explosive profile on mesh nodes; nodes too close to the boundary for the
    integrator are filled from the boundary expansion and flagged."""

    profile: GridFunction
    extrapolated: np.ndarray  # bool per node
    d_reliable: float  # smallest distance-to-boundary resolved by the integrator

    def __post_init__(self) -> None:
        e = np.asarray(self.extrapolated, dtype=bool).copy()
        e.flags.writeable = False
        object.__setattr__(self, "extrapolated", e)


def _tail_increment(m: float, d_from: float, d_to: float) -> float:
    """phi(d_to) - phi(d_from) from the leading boundary expansion (d_to < d_from)."""
    if m < 2.0:
        Cs = blowup_prefactor(m)
        al = blowup_exponent(m)
        return Cs * (d_to ** (-al) - d_from ** (-al))
    return float(np.log(d_from) - np.log(d_to))


def shoot_profile(m: float, R: float, f0: float, mesh: Mesh1D) -> ShootingProfile:
    """Integrate the profile ODE and sample it at the mesh nodes.

    The profile of the explosive problem for a constant source does not
    depend on f0 (the shift is absorbed by the constant), so f0 only enters
    through the associated c reported elsewhere.  Integration runs in the
    slope variable p, where x(p) and phi(p) are smooth quadratures:

        dx/dp = 1/(p^m + a),   dphi/dp = p/(p^m + a).
    """
    if abs(mesh.x_lo + R) > 1e-9 or abs(mesh.x_hi - R) > 1e-9:
        raise ValueError("mesh must span (-R, R)")
    res = c_exact_constant_f(m, R, 0.0)
    a = -res.c_exact

    def rhs(p, y):
        den = p**m + a
        return [1.0 / den, p / den]

    p_max = P_BLOWUP
    sol = solve_ivp(
        rhs,
        (0.0, p_max),
        [0.0, 0.0],
        method="DOP853",
        rtol=1e-12,
        atol=1e-14,
        dense_output=True,
    )
    if not sol.success:
        raise ArithmeticError(f"profile integration failed: {sol.message}")
    x_end = sol.y[0][-1]
    d_cut = R - x_end  # distance not resolved before the slope cap
    if d_cut < 0:
        raise ArithmeticError("blow-up length exceeded R; inconsistent a")

    x = mesh.nodes
    d = np.minimum(x - mesh.x_lo, mesh.x_hi - x)
    h = mesh.h
    d_anchor = max(3.0 * h, 2.0 * d_cut)
    phi = np.empty_like(x)
    extrap = d < d_anchor

    def phi_at(ax: float) -> float:
        if ax <= 0.0:
            return 0.0
        p_here = brentq(lambda p: sol.sol(p)[0] - ax, 0.0, p_max, xtol=1e-14, rtol=8.9e-16)
        return float(sol.sol(p_here)[1])

    phi_anchor = phi_at(R - d_anchor)
    for i, (xi, di) in enumerate(zip(x, d)):
        if extrap[i]:
            if di <= 0.0:
                di = min(h * 1e-6, d_anchor * 1e-6)  # boundary node: finite stand-in
            phi[i] = phi_anchor + _tail_increment(m, d_anchor, di)
        else:
            phi[i] = phi_at(abs(xi))
    phi -= phi.min()
    return ShootingProfile(GridFunction(mesh, phi), extrap, max(d_cut, 0.0))


def example25_threshold(m: float, R: float) -> tuple[float, float]:
    """(C_necessary, C_sharp) for solvability of the constant-source problem
    with f = -C^m.

    C_necessary comes from the necessary bound C^(m-1) <= K/R; C_sharp is the
    exact flip point where the ergodic constant c0 + C^m changes sign.
    """
    if not (1.0 < m <= 2.0):
        raise ValueError(f"m out of (1, 2]: {m}")
    if R <= 0:
        raise ValueError(f"R must be positive: {R}")
    K = quad_K(m)
    C_necessary = (K / R) ** (1.0 / (m - 1.0))
    C_sharp = (K / (2.0 * R)) ** (1.0 / (m - 1.0))
    assert C_sharp < C_necessary
    return C_necessary, C_sharp
