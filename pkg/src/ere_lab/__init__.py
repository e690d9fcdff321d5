"""Closed-loop equilibrium strategies for time-inconsistent LQ control of FBSDEs.

The main entry points are :func:`solve_equilibrium` (or the estimator
wrapper :class:`EquilibriumLQ`), the Monte Carlo checks in
:mod:`ere_lab.montecarlo` and the ``ere-lab`` command line tool.
"""

from .config import dump_problem, dumps_problem, load_problem, loads_problem
from .estimator import EquilibriumLQ
from .exceptions import (
    AssumptionError,
    BlowUpError,
    DomainError,
    EreLabError,
    NoContractionError,
    NoConvergenceError,
    NotPositiveDefiniteError,
    ParseError,
)
from .instances import BUILTINS, get_instance
from .mollify import mollify_kernel, mollify_matrix_path, mollify_problem
from .montecarlo import McConfig, McReport, mc_cost, mc_p1_diag, simulate_closed_loop, simulate_phi, spike_test
from .ode import MatrixPath, diag_p1, integrate_p1_slice, integrate_p2, lyapunov_forward_check, p1_triangle
from .problem import (
    ProblemInstance,
    TimeGrid,
    ValidationReport,
    discounted_kernel,
    validate_assumptions,
)
from .solver import (
    RiccatiSolution,
    SolveDiagnostics,
    cstar_bound,
    cv_bound,
    equilibrium_value,
    gamma_map,
    solve_equilibrium,
)

__version__ = "0.1.0"

__all__ = [
    "AssumptionError", "BlowUpError", "BUILTINS", "DomainError", "EquilibriumLQ", "EreLabError",
    "MatrixPath", "McConfig", "McReport", "NoContractionError", "NoConvergenceError",
    "NotPositiveDefiniteError", "ParseError", "ProblemInstance", "RiccatiSolution", "SolveDiagnostics",
    "TimeGrid", "ValidationReport", "cstar_bound", "cv_bound", "diag_p1", "discounted_kernel",
    "dump_problem", "dumps_problem", "equilibrium_value", "gamma_map", "get_instance",
    "integrate_p1_slice", "integrate_p2", "load_problem", "loads_problem", "lyapunov_forward_check",
    "mc_cost", "mc_p1_diag", "mollify_kernel", "mollify_matrix_path", "mollify_problem", "p1_triangle",
    "simulate_closed_loop", "simulate_phi", "solve_equilibrium", "spike_test", "validate_assumptions",
]
