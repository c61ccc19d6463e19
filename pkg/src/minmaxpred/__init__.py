"""Min-max linear prediction of the next value of a series with spline kernels."""

__version__ = "0.1.0"

from .errors import (
    ConstraintError,
    FactorizationError,
    InvariantError,
    MinmaxError,
    ParseError,
    StructureError,
)
from .kernels import (
    Classification,
    DualFunctional,
    Kernel,
    KnotGrid,
    dual_norm_sq,
    validate_kernel,
    worst_case_error,
)
from .predictor import (
    ConstraintSolutionSpace,
    PredictionResult,
    ReducedKernel,
    SemiKernel,
    Trend,
    blup_predict,
    constrained_weights,
    constraint_solution_space,
    interpolant_coefficients,
    interpolant_predict,
    interpolation_error,
    minmax_weights,
    predict,
    quadratic_extension,
    reduced_kernel,
    reduced_predict,
    semikernel_worst_error,
)
from .selection import (
    CriteriaReport,
    KernelSpec,
    RollingRun,
    maxpe,
    mspe,
    rolling_predict,
    statistical_compare,
    tournament,
)
from .spline import (
    SplineKernelSet,
    SplineModel,
    basis_002,
    bending_energy,
    curvature_map,
    energy_matrix_Q,
    evaluate,
    gram_L2,
    kernel_set,
    natural_interpolant,
    P_matrix,
    pspline_predict,
    spline_from_002,
)
