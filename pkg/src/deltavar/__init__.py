"""Calculus of variations and optimal control on finite time scales.

Exact delta calculus (jump operators, delta derivatives and integrals),
direct solvers for the basic, Lagrange, and higher-order variational
problems, and residual certificates for every first-order necessary
optimality condition, backed by independent oracles.
"""

from .errors import (
    ArityError,
    BudgetExceededError,
    DegenerateProblemError,
    DeltaVarError,
    EvalDomainError,
    InfeasibleError,
    InsufficientPointsError,
    NonConvergenceError,
    ParseError,
    ScaleDomainError,
)
from .timescale import (
    GridFunction,
    TimeScale,
    delta_derivative,
    delta_integral,
    derivative_stack,
    integration_by_parts_residuals,
    jump_operators,
    k_restriction,
    running_sigma_integral,
)
from .expr import Arity, LagrangianExpr, format_expr, parse
from .variational import (
    BasicProblem,
    ExtremalReport,
    certify,
    el_differentiated_residual,
    el_integral_residual,
    evaluate_functional,
    sigma_form_transform,
    solve_basic,
    transversality_residuals,
)
from .control import (
    ControlProblem,
    CostateTrajectory,
    WmpReport,
    costate_sweep,
    detect_abnormal,
    evaluate_objective,
    forward_simulate,
    hamiltonian,
    isoperimetric_reduce,
    solve_lagrange,
    wmp_residuals,
)
from .higher_order import (
    HigherOrderProblem,
    HigherOrderReport,
    HoElReport,
    certify_higher_order,
    costate_recursion,
    discrete_el_residual,
    evaluate_functional_ho,
    ho_el_residual,
    nested_integral_shift_residual,
    reduce_to_control,
    solve_higher_order,
)
from .oracle import (
    BruteForceResult,
    GridSearchSpec,
    KktMultipliers,
    brute_force_minimize,
    finite_diff_check,
    kkt_multipliers,
)
from .refine import RefineStudy, refine_study

__version__ = "0.1.0"
