"""Numerical laboratory for the subquadratic viscous Hamilton-Jacobi Dirichlet
problem u_t - u_xx + |u_x|^m = f(x) on an interval: monotone explicit solver,
ergodic-constant estimators, explosive boundary profile, and large-time rate
experiments checked against closed-form quadrature oracles."""

from .model import (
    GridFunction,
    Mesh1D,
    ProblemSpec,
    ScalarField,
    build_mesh,
    distance_field,
    sample,
)
from .parabolic import (
    Classification,
    SolverConfig,
    Trajectory,
    classify_longtime,
    numerical_hamiltonian,
    solve_parabolic,
    stable_dt,
    step,
)
from .ergodic import (
    BlowupFit,
    ErgodicResult,
    check_lemma22,
    default_bracket,
    estimate_c_bisection,
    estimate_c_extrapolated,
    estimate_c_slope,
    fit_blowup,
    fit_gradient_rate,
    solve_phi0,
    suggest_caps,
)
from .oracle import (
    OracleResult,
    ShootingProfile,
    c_exact_constant_f,
    closed_form_K,
    example25_threshold,
    quad_K,
    shoot_profile,
)
from .asymptotics import (
    ErgodicConvergenceReport,
    EnvelopeReport,
    RateReport,
    check_envelopes,
    fit_power,
    holder_seminorm,
    run_ergodic_convergence,
    run_nonconvergence,
    run_rate_experiment,
    run_stationary_convergence,
)
from .errors import RegimeError, SolverAbort, VhjError

__version__ = "0.1.0"
