"""Integral Nash equilibrium seeking control for multi-agent linear systems.

Simulation library and experiment CLI covering the full-information
integral controller, the limited-information variant built on per-agent
time-varying parameter estimation, and the classical perturbation-based
baseline, together with analysis oracles (Nash solve, monotonicity
certificate, integral-gain threshold, excitation monitoring, Lyapunov
diagnostics).
"""

from .analysis import (
    LyapunovTrace,
    MonotonicityCertificate,
    NashSolution,
    PEReport,
    check_monotonicity,
    fullinfo_closed_loop,
    is_hurwitz,
    lyapunov_trace,
    pe_monitor,
    recommend_tau,
    solve_ne,
)
from .config import (
    ExperimentConfig,
    apply_overrides,
    bundled_config_path,
    config_from_dict,
    list_bundled_configs,
    parse_config,
)
from .controllers import (
    BaselineController,
    DitherSpec,
    FullInfoController,
    InescController,
    baseline_derivative,
    baseline_input,
    dither,
    fullinfo_derivative,
    inesc_derivative,
)
from .errors import (
    AssumptionViolationError,
    BlowUpError,
    ConfigError,
    DiagnosticError,
    InvariantError,
    NescError,
    SolverError,
)
from .estimator import (
    EstimatorParams,
    EstimatorState,
    estimator_derivative,
    project_tangent_cone,
    true_theta,
)
from .game import (
    CallbackCost,
    GameModel,
    QuadraticCost,
    eval_cost,
    grad_full,
    grad_xi,
    pseudo_gradient_u,
    pseudo_gradient_x,
)
from .plant import plant_derivative, steady_state
from .sim import (
    ClosedLoopState,
    ConvergenceMetrics,
    SimResult,
    StateLayout,
    convergence_metrics,
    run,
    step_rk4,
)

__version__ = "0.1.0"
