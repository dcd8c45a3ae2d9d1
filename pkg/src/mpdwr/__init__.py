"""Mixed-precision dual-weighted-residual adaptive FEM for 2D Poisson."""

from .scalar import DOUBLE, HALF, SINGLE, Precision, mixed_dot, precision, round_to
from .mesh import (
    Mesh,
    bisect_marked,
    check_conforming,
    global_refine,
    min_element_volume,
    unit_square_template,
)
from .fespace import FESpace, QuadratureRule, Solution, build_space, interpolate, l2_error, quadrature
from .assembly import apply_dirichlet, assemble_functional, assemble_load, assemble_stiffness
from .linsolve import PCGError, SolveReport, pcg
from .problems import Functional, Problem, catalog, eval_functional, functional_error, get_functional, get_problem
from .estimator import IndicatorField, dwr_indicator, estimate_Je, galerkin_probe, residual_indicator
from .driver import (
    AdaptConfig,
    AdaptHistory,
    dual_solve_approach1,
    dual_solve_approach2,
    dual_solve_mpdwr,
    initial_mesh,
    limit_monitor,
    marking,
    mpdwr_adapt,
    post_process,
    precision_cascade,
    residual_adapt,
    revised_mpdwr,
    solve_primal,
)

__version__ = "0.1.0"
