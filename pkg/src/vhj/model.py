"""Meshes, grid functions, scalar fields and problem specifications.

Everything here is immutable after construction and safe to share between
concurrently running experiments.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Mesh1D",
    "GridFunction",
    "ScalarField",
    "ProblemSpec",
    "build_mesh",
    "distance_field",
    "sample",
]

COMPAT_TOL = 1e-12  # |u0(boundary) - g| allowed at construction


@dataclass(frozen=True)
class Mesh1D:
    """Uniform mesh on [x_lo, x_hi] with n_cells cells (n_cells + 1 nodes)."""

    x_lo: float
    x_hi: float
    n_cells: int

    def __post_init__(self) -> None:
        if not (np.isfinite(self.x_lo) and np.isfinite(self.x_hi)):
            raise ValueError("mesh endpoints must be finite")
        if self.x_hi <= self.x_lo:
            raise ValueError(f"degenerate interval: [{self.x_lo}, {self.x_hi}]")
        if self.n_cells < 4:
            raise ValueError(f"n_cells must be >= 4, got {self.n_cells}")

    @property
    def h(self) -> float:
        return (self.x_hi - self.x_lo) / self.n_cells

    @property
    def n_nodes(self) -> int:
        return self.n_cells + 1

    @property
    def nodes(self) -> np.ndarray:
        x = np.linspace(self.x_lo, self.x_hi, self.n_cells + 1)
        x.flags.writeable = False
        return x

    @property
    def length(self) -> float:
        return self.x_hi - self.x_lo

    @property
    def half_length(self) -> float:
        return 0.5 * (self.x_hi - self.x_lo)

    @property
    def midpoint_index(self) -> int:
        return self.n_cells // 2


@dataclass(frozen=True)
class GridFunction:
    """Nodal values of a scalar field on a :class:`Mesh1D`."""

    mesh: Mesh1D
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.mesh.n_nodes,):
            raise ValueError(
                f"values shape {v.shape} does not match mesh with {self.mesh.n_nodes} nodes"
            )
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def norm_inf(self) -> float:
        return float(np.max(np.abs(self.values)))

    def shifted(self, k: float) -> "GridFunction":
        return GridFunction(self.mesh, self.values + k)

    def normalized_min_zero(self) -> "GridFunction":
        return GridFunction(self.mesh, self.values - float(np.min(self.values)))

    def to_csv(self) -> str:
        """Serialize as ``x,value`` rows at full double precision."""
        buf = io.StringIO()
        buf.write("x,value\n")
        for x, v in zip(self.mesh.nodes, self.values):
            buf.write(f"{x:.17g},{v:.17g}\n")
        return buf.getvalue()

    @staticmethod
    def from_csv(text: str) -> "GridFunction":
        lines = [ln for ln in text.strip().splitlines() if ln]
        if not lines or lines[0].strip() != "x,value":
            raise ValueError("expected header 'x,value'")
        xs, vs = [], []
        for ln in lines[1:]:
            a, b = ln.split(",")
            xs.append(float(a))
            vs.append(float(b))
        x = np.asarray(xs)
        if len(x) < 5:
            raise ValueError("too few rows for a valid grid function")
        mesh = Mesh1D(float(x[0]), float(x[-1]), len(x) - 1)
        return GridFunction(mesh, np.asarray(vs))


@dataclass(frozen=True)
class ScalarField:
    """A scalar source/datum on the interval: constant, polynomial or table.

    ``lipschitz_bound`` is user-supplied metadata recording a bound on the
    derivative; it is echoed into reports but not consumed by any algorithm.
    """

    kind: str
    params: tuple
    lipschitz_bound: float = 0.0

    _KINDS = ("constant", "polynomial", "table")

    def __post_init__(self) -> None:
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}")
        if self.lipschitz_bound < 0:
            raise ValueError("lipschitz_bound must be nonnegative")
        if self.kind == "table":
            xs, ys = self.params
            if len(xs) != len(ys) or len(xs) < 2:
                raise ValueError("table needs matching x/y arrays with >= 2 points")
            if not np.all(np.diff(xs) > 0):
                raise ValueError("table abscissae must be strictly increasing")

    @staticmethod
    def constant(v: float) -> "ScalarField":
        return ScalarField("constant", (float(v),))

    @staticmethod
    def polynomial(coeffs: Sequence[float], lipschitz_bound: float | None = None) -> "ScalarField":
        c = tuple(float(a) for a in coeffs)
        if not c:
            raise ValueError("polynomial needs at least one coefficient")
        lb = 0.0 if lipschitz_bound is None else float(lipschitz_bound)
        return ScalarField("polynomial", c, lb)

    @staticmethod
    def table(xs: Sequence[float], ys: Sequence[float], lipschitz_bound: float | None = None) -> "ScalarField":
        xs = tuple(float(a) for a in xs)
        ys = tuple(float(a) for a in ys)
        lb = 0.0 if lipschitz_bound is None else float(lipschitz_bound)
        return ScalarField("table", (xs, ys), lb)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.full_like(x, self.params[0])
        if self.kind == "polynomial":
            # coefficients are low-to-high degree
            out = np.zeros_like(x)
            for c in reversed(self.params):
                out = out * x + c
            return out
        xs, ys = self.params
        if np.any(x < xs[0] - 1e-12) or np.any(x > xs[-1] + 1e-12):
            raise ValueError("table does not cover the requested interval")
        return np.interp(x, xs, ys)

    def covers(self, x_lo: float, x_hi: float) -> bool:
        if self.kind != "table":
            return True
        xs, _ = self.params
        return xs[0] <= x_lo + 1e-12 and xs[-1] >= x_hi - 1e-12


@dataclass(frozen=True)
class ProblemSpec:
    """The data tuple of the evolution problem: interval, gradient exponent m,
    source f, boundary values and initial datum."""

    mesh: Mesh1D
    m: float
    f: ScalarField
    g_lo: float
    g_hi: float
    u0: ScalarField

    def __post_init__(self) -> None:
        if not (1.0 < self.m <= 2.0):
            raise ValueError(f"m out of subquadratic range (1, 2]: {self.m}")
        for fld, name in ((self.f, "f"), (self.u0, "u0")):
            if not fld.covers(self.mesh.x_lo, self.mesh.x_hi):
                raise ValueError(f"{name} table does not cover the interval")
        u0_lo = float(self.u0(self.mesh.x_lo))
        u0_hi = float(self.u0(self.mesh.x_hi))
        if abs(u0_lo - self.g_lo) > COMPAT_TOL or abs(u0_hi - self.g_hi) > COMPAT_TOL:
            raise ValueError(
                "initial datum incompatible with boundary values: "
                f"u0({self.mesh.x_lo})={u0_lo}, g_lo={self.g_lo}; "
                f"u0({self.mesh.x_hi})={u0_hi}, g_hi={self.g_hi}"
            )

    def f_nodes(self) -> np.ndarray:
        return self.f(self.mesh.nodes)

    def u0_nodes(self) -> np.ndarray:
        v = self.u0(self.mesh.nodes).copy()
        v[0] = self.g_lo
        v[-1] = self.g_hi
        return v

    def data_scale(self) -> float:
        """Magnitude of the problem data, used to scale tolerances."""
        return float(
            max(
                np.max(np.abs(self.f_nodes())),
                np.max(np.abs(self.u0_nodes())),
                abs(self.g_lo),
                abs(self.g_hi),
            )
        )

    def with_source_shift(self, lam: float) -> "ProblemSpec":
        """Same problem with f replaced by f + lam."""
        if self.f.kind == "constant":
            f = ScalarField.constant(self.f.params[0] + lam)
        elif self.f.kind == "polynomial":
            c = list(self.f.params)
            c[0] += lam
            f = ScalarField.polynomial(c, self.f.lipschitz_bound)
        else:
            xs, ys = self.f.params
            f = ScalarField.table(xs, tuple(y + lam for y in ys), self.f.lipschitz_bound)
        return ProblemSpec(self.mesh, self.m, f, self.g_lo, self.g_hi, self.u0)


def build_mesh(x_lo: float, x_hi: float, n_cells: int) -> Mesh1D:
    """Uniform mesh with n_cells cells on [x_lo, x_hi]."""
    return Mesh1D(float(x_lo), float(x_hi), int(n_cells))


def distance_field(mesh: Mesh1D) -> GridFunction:
    """Nodal distance to the interval endpoints, min(x - x_lo, x_hi - x)."""
    x = mesh.nodes
    d = np.minimum(x - mesh.x_lo, mesh.x_hi - x)
    return GridFunction(mesh, d)


def sample(f: ScalarField, mesh: Mesh1D) -> GridFunction:
    """Evaluate a scalar field at the mesh nodes."""
    return GridFunction(mesh, f(mesh.nodes))
