"""Numerical toolkit for Dirichlet problems of quasilinear operators ``div(a(|grad u|)/|grad u| grad u)``."""

from .barrier import BarrierProfile, DomainGeometry, alpha_of, build_profile, eval_profile, profile_residual
from .errors import (
    ConfigError,
    ConvergenceError,
    DomainError,
    EllipticityError,
    NoRadialSolution,
    OutOfRangeError,
    PhidirError,
    PreconditionError,
    SymbolError,
)
from .estimates import (
    EstimateParams,
    Refusal,
    c0_bound,
    global_bound_mild,
    global_bound_strong,
    local_bound_mild,
    local_bound_strong,
)
from .grid2d import Grid, PicardParams, Problem2D, Solution2D, assemble_linearized, gradient_field
from .grid2d import kappa_continuation, picard_solve, weak_residual
from .radial import AsymptoticBarrier, RadialSolution, WarpedProduct
from .radial import asymptotic_barrier, asymptotic_residual, evaluate_radial, solve_radial
from .symbol import (
    ConditionReport,
    DerivedSymbol,
    Minorant,
    SymbolSpec,
    check_condition,
    derive,
    ellipticity_bounds,
    inverse_a,
    make_builtin,
    regularize,
    symbol_from_json,
)
from .verify import (
    CheckReport,
    bochner_residual,
    comparison_check,
    max_principle_check,
    monotonicity_check,
    oracle_compare,
)

__version__ = "0.1.0"
