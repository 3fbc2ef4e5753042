"""INI-style experiment configuration: strict parsing with full error listing.

Grammar (configparser sections, all values strings):

    [problem]
    x_lo = -1.0          # required
    x_hi = 1.0           # required
    n_cells = 200        # required
    m = 2.0              # required, 1 < m <= 2
    f = constant:-10     # constant:<v> | poly:<c0,c1,...> | table:<x:y,x:y,...>
    g_lo = 0.0
    g_hi = 0.0
    u0 = constant:0.0

    [experiment]
    kind = rate          # stationary | rate | ergodic_convergence |
                         # nonconvergence | ergodic_solve | oracle_check | holder
    output_dir = out/rate
    c_source = bisection # bisection | oracle | value:<x>
    caps = auto          # auto | comma-separated increasing floats
    nu = 0.5             # holder only
    d_min = auto         # holder only; auto = quarter of the half-length
    label =

    [solver]
    t_end = auto         # auto picks an experiment-appropriate horizon
    cfl_safety = 0.4
    escape_window = auto
    tol_steady = 1e-9
    escape_residual_tol = 1e-2
    snapshots = 40

Unknown sections or keys are rejected; every error found is reported, not
just the first.
"""
from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields

from .model import ProblemSpec, ScalarField, build_mesh

__all__ = ["ExperimentConfig", "ConfigError", "parse_config", "emit_config", "parse_field_spec"]

EXPERIMENT_KINDS = (
    "stationary",
    "rate",
    "ergodic_convergence",
    "nonconvergence",
    "ergodic_solve",
    "oracle_check",
    "holder",
)

_PROBLEM_KEYS = {"x_lo", "x_hi", "n_cells", "m", "f", "g_lo", "g_hi", "u0"}
_EXPERIMENT_KEYS = {"kind", "output_dir", "c_source", "caps", "nu", "d_min", "label"}
_SOLVER_KEYS = {
    "t_end",
    "cfl_safety",
    "escape_window",
    "tol_steady",
    "escape_residual_tol",
    "snapshots",
}


class ConfigError(ValueError):
    """Carries every validation error found in a config."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid config:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class ExperimentConfig:
    x_lo: float
    x_hi: float
    n_cells: int
    m: float
    f: str
    g_lo: float
    g_hi: float
    u0: str
    kind: str
    output_dir: str
    c_source: str = "bisection"
    caps: str = "auto"
    nu: float = 0.5
    d_min: str = "auto"
    label: str = ""
    t_end: str = "auto"
    cfl_safety: float = 0.4
    escape_window: str = "auto"
    tol_steady: float = 1e-9
    escape_residual_tol: float = 1e-2
    snapshots: int = 40

    def problem(self) -> ProblemSpec:
        mesh = build_mesh(self.x_lo, self.x_hi, self.n_cells)
        return ProblemSpec(
            mesh,
            self.m,
            parse_field_spec(self.f),
            self.g_lo,
            self.g_hi,
            parse_field_spec(self.u0),
        )

    def caps_list(self):
        if self.caps == "auto":
            return None
        return tuple(float(s) for s in self.caps.split(","))


def parse_field_spec(spec: str) -> ScalarField:
    kind, _, rest = spec.partition(":")
    kind = kind.strip()
    if kind == "constant":
        return ScalarField.constant(float(rest))
    if kind == "poly":
        return ScalarField.polynomial([float(s) for s in rest.split(",")])
    if kind == "table":
        pts = [p for p in rest.split(",") if p.strip()]
        xs, ys = [], []
        for p in pts:
            a, _, b = p.partition(":")
            xs.append(float(a))
            ys.append(float(b))
        return ScalarField.table(xs, ys)
    raise ValueError(f"unknown field spec {spec!r} (expected constant:/poly:/table:)")


def _field_spec_str(spec: str) -> str:
    parse_field_spec(spec)  # validation only
    return spec.strip()


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate; raises ConfigError listing every problem found."""
    cp = configparser.ConfigParser()
    errors = []
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from exc

    known = {"problem": _PROBLEM_KEYS, "experiment": _EXPERIMENT_KEYS, "solver": _SOLVER_KEYS}
    for sec in cp.sections():
        if sec not in known:
            errors.append(f"unknown section [{sec}]")
        else:
            for key in cp[sec]:
                if key not in known[sec]:
                    errors.append(f"unknown key '{key}' in [{sec}]")
    for sec in ("problem", "experiment"):
        if sec not in cp:
            errors.append(f"missing section [{sec}]")
    if errors:
        raise ConfigError(errors)

    vals = {}

    def take(sec, key, conv, default=None, required=False):
        raw = cp[sec].get(key) if sec in cp else None
        if raw is None:
            if required:
                errors.append(f"missing required key '{key}' in [{sec}]")
                return
            vals[key] = default
            return
        try:
            vals[key] = conv(raw)
        except (ValueError, TypeError) as exc:
            errors.append(f"bad value for '{key}' in [{sec}]: {exc}")

    take("problem", "x_lo", float, required=True)
    take("problem", "x_hi", float, required=True)
    take("problem", "n_cells", int, required=True)
    take("problem", "m", float, required=True)
    take("problem", "f", _field_spec_str, required=True)
    take("problem", "g_lo", float, 0.0)
    take("problem", "g_hi", float, 0.0)
    take("problem", "u0", _field_spec_str, "constant:0.0")
    take("experiment", "kind", str, required=True)
    take("experiment", "output_dir", str, required=True)
    take("experiment", "c_source", str, "bisection")
    take("experiment", "caps", str, "auto")
    take("experiment", "nu", float, 0.5)
    take("experiment", "d_min", str, "auto")
    take("experiment", "label", str, "")
    take("solver", "t_end", str, "auto")
    take("solver", "cfl_safety", float, 0.4)
    take("solver", "escape_window", str, "auto")
    take("solver", "tol_steady", float, 1e-9)
    take("solver", "escape_residual_tol", float, 1e-2)
    take("solver", "snapshots", int, 40)

    if errors:
        raise ConfigError(errors)

    if vals["m"] is not None and not (1.0 < vals["m"] <= 2.0):
        errors.append(f"m out of subquadratic range (1, 2]: {vals['m']}")
    if vals["kind"] not in EXPERIMENT_KINDS:
        errors.append(f"unknown experiment kind {vals['kind']!r}")
    if vals["x_lo"] is not None and vals["x_hi"] is not None and vals["x_hi"] <= vals["x_lo"]:
        errors.append("degenerate interval: x_hi <= x_lo")
    if vals["n_cells"] is not None and vals["n_cells"] < 4:
        errors.append("n_cells too small (need >= 4)")
    if vals["caps"] != "auto":
        try:
            caps = [float(s) for s in vals["caps"].split(",")]
            if len(caps) < 3 or any(b <= a for a, b in zip(caps, caps[1:])):
                errors.append("caps must be >= 3 strictly increasing values")
        except ValueError:
            errors.append(f"bad caps list {vals['caps']!r}")
    if vals["c_source"] not in ("bisection", "oracle") and not vals["c_source"].startswith("value:"):
        errors.append(f"bad c_source {vals['c_source']!r}")
    for key in ("t_end", "escape_window"):
        if vals[key] != "auto":
            try:
                float(vals[key])
            except ValueError:
                errors.append(f"bad value for '{key}': {vals[key]!r}")
    if errors:
        raise ConfigError(errors)
    cfg = ExperimentConfig(**vals)
    try:
        cfg.problem()
    except ValueError as exc:
        raise ConfigError([str(exc)]) from exc
    return cfg


def emit_config(cfg: ExperimentConfig) -> str:
    """Inverse of parse_config: parse(emit(cfg)) == cfg."""
    cp = configparser.ConfigParser()
    cp["problem"] = {
        "x_lo": repr(cfg.x_lo),
        "x_hi": repr(cfg.x_hi),
        "n_cells": str(cfg.n_cells),
        "m": repr(cfg.m),
        "f": cfg.f,
        "g_lo": repr(cfg.g_lo),
        "g_hi": repr(cfg.g_hi),
        "u0": cfg.u0,
    }
    cp["experiment"] = {
        "kind": cfg.kind,
        "output_dir": cfg.output_dir,
        "c_source": cfg.c_source,
        "caps": cfg.caps,
        "nu": repr(cfg.nu),
        "d_min": cfg.d_min,
        "label": cfg.label,
    }
    cp["solver"] = {
        "t_end": cfg.t_end,
        "cfl_safety": repr(cfg.cfl_safety),
        "escape_window": cfg.escape_window,
        "tol_steady": repr(cfg.tol_steady),
        "escape_residual_tol": repr(cfg.escape_residual_tol),
        "snapshots": str(cfg.snapshots),
    }
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
