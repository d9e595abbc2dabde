"""Numerical laboratory for the surface diffusion flow of planar
double bubbles: exact geometry of the standard equilibria, graph
perturbations, the fully nonlinear nonlocal flow, the linearized
stability operator, and end-to-end relaxation experiments.
"""

from .geometry import (
    BubbleParams,
    ConvergenceError,
    StandardBubble,
    arc_lengths,
    arc_point,
    bubble_for_areas,
    curvature_triple,
    enclosed_areas,
    is_segment_case,
    junction_constants,
    level_set_jet,
    normal_at,
    standard_bubble,
    tangent_at,
    total_length,
)
from .perturbation import (
    ArcGrid,
    FoldOverError,
    JAY,
    PerturbationField,
    TangentialProfile,
    field_from_rho,
    jay_apply,
    junction_mismatch,
    make_grid,
    push_forward,
    tangential_profile,
    zero_field,
)
from .flow import (
    AdmissibilityError,
    BoundaryResiduals,
    FlowState,
    RegimeError,
    boundary_residuals,
    diagnostics,
    graph_curvature,
    graph_metric,
    make_state,
    nonlinear_rhs,
    project_admissible,
    step_implicit,
)
from .linops import (
    DiscretePencil,
    ModeReport,
    SemisimplicityReport,
    assemble_pencil,
    bilinear_I,
    c_of,
    ls_determinant,
    matrix_D,
    null_basis,
    pencil_residual,
    semisimplicity_check,
    sign_suite,
    spectrum,
    stack_field,
    unstack_field,
)
from .lab import (
    ChartDerivativeReport,
    ChartDomainError,
    ChartPoint,
    FlowTrace,
    RunConfig,
    StabilityReport,
    chart_derivative_check,
    equilibrium_chart,
    fit_limit_bubble,
    stability_run,
)

__version__ = "0.1.0"

__all__ = [
    "AdmissibilityError", "ArcGrid", "BoundaryResiduals", "BubbleParams",
    "ChartDerivativeReport", "ChartDomainError", "ChartPoint",
    "ConvergenceError", "DiscretePencil", "FlowState", "FlowTrace",
    "FoldOverError", "JAY", "ModeReport", "PerturbationField", "RegimeError",
    "RunConfig", "SemisimplicityReport", "StabilityReport", "StandardBubble",
    "TangentialProfile", "arc_lengths", "arc_point", "assemble_pencil",
    "bilinear_I", "boundary_residuals", "bubble_for_areas", "c_of",
    "chart_derivative_check", "curvature_triple", "diagnostics",
    "enclosed_areas", "equilibrium_chart", "field_from_rho",
    "fit_limit_bubble", "graph_curvature", "graph_metric", "is_segment_case",
    "jay_apply", "junction_constants", "junction_mismatch", "level_set_jet",
    "ls_determinant", "make_grid", "make_state", "matrix_D", "normal_at",
    "nonlinear_rhs", "null_basis", "pencil_residual", "project_admissible",
    "push_forward", "semisimplicity_check", "sign_suite", "spectrum",
    "stack_field", "standard_bubble", "step_implicit", "tangent_at",
    "tangential_profile", "total_length", "unstack_field", "zero_field",
]
