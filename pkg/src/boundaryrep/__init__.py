"""Boundary representations of free and Fuchsian groups.

Exact cylinder-measure operator theory on free-group Cayley trees, numeric
orbit experiments on the hyperbolic disk, and the shared geometric layer
(Gromov products, horofunctions, visual metrics, shadows) connecting them.
"""

from .counting import (
    EquidistributionRow,
    equidistribution,
    equidistribution_series,
    growth_exponent,
    margulis_fit,
    transfer_pair_frequency,
)
from .exact import ExactScalar
from .measure import (
    RegularityCertificate,
    SamplingSet,
    annulus_weight_average,
    build_sampling_set,
    certify_regularity,
    decreasing_integral_bounds,
    default_certificate,
    int_as_log_bounds,
    sampled_integral,
    sampling_weight_bound,
    tree_level_weight_sum,
)
from .plane import (
    ArcSet,
    CacheExhaustedError,
    CirclePoint,
    MobiusIsometry,
    OrbitCache,
    PlaneModel,
    build_group,
)
from .reps import (
    ArcStepFunction,
    CompressedOperator,
    ConvergenceRow,
    GroupAlgebraVector,
    LambdaWindowReport,
    PlaneRhoImage,
    SimpleFunction,
    apply_rho,
    build_Tt,
    compress_rho,
    convergence_experiment,
    inner,
    lambda_eval,
    lambda_l1,
    lambda_l1_mc,
    lambda_l1_window,
    matrix_coefficient,
    sup_norm_Tt1,
    tail_bound_check,
    tail_bound_constant,
    truncation_rank,
    truncation_rank_series,
    tt1_boundary_value,
    tt_pairing,
    unitarity_defect,
)
from .space import (
    BoundaryBall,
    GeometryError,
    InfiniteProductError,
    annulus_cone_membership,
    busemann_cocycle,
    chopped_cocycle,
    chopped_product,
    gromov_product,
    shadow,
    thicken,
    visual_distance,
)
from .spectra import (
    EllipticElementError,
    MarkedLengthTable,
    RescalingReport,
    displacement_sequence,
    marked_length_table,
    rescaling_invariance_check,
    translation_length,
)
from .tree import Cylinder, CylinderSet, FreeGroupModel, TreeLocus
from .words import BoundaryWord, InsufficientDepthError, ReducedWord

__version__ = "0.1.0"

__all__ = [
    "ArcSet",
    "ArcStepFunction",
    "BoundaryBall",
    "BoundaryWord",
    "CacheExhaustedError",
    "CirclePoint",
    "CompressedOperator",
    "ConvergenceRow",
    "Cylinder",
    "CylinderSet",
    "EllipticElementError",
    "EquidistributionRow",
    "ExactScalar",
    "FreeGroupModel",
    "GeometryError",
    "GroupAlgebraVector",
    "InfiniteProductError",
    "InsufficientDepthError",
    "LambdaWindowReport",
    "MarkedLengthTable",
    "MobiusIsometry",
    "OrbitCache",
    "PlaneModel",
    "PlaneRhoImage",
    "ReducedWord",
    "RegularityCertificate",
    "RescalingReport",
    "SamplingSet",
    "SimpleFunction",
    "TreeLocus",
    "annulus_cone_membership",
    "annulus_weight_average",
    "apply_rho",
    "build_Tt",
    "build_group",
    "build_sampling_set",
    "busemann_cocycle",
    "certify_regularity",
    "chopped_cocycle",
    "chopped_product",
    "compress_rho",
    "convergence_experiment",
    "decreasing_integral_bounds",
    "default_certificate",
    "displacement_sequence",
    "equidistribution",
    "equidistribution_series",
    "gromov_product",
    "growth_exponent",
    "inner",
    "int_as_log_bounds",
    "lambda_eval",
    "lambda_l1",
    "lambda_l1_mc",
    "lambda_l1_window",
    "margulis_fit",
    "marked_length_table",
    "matrix_coefficient",
    "rescaling_invariance_check",
    "sampled_integral",
    "sampling_weight_bound",
    "shadow",
    "sup_norm_Tt1",
    "tail_bound_check",
    "tail_bound_constant",
    "thicken",
    "transfer_pair_frequency",
    "translation_length",
    "tree_level_weight_sum",
    "truncation_rank",
    "truncation_rank_series",
    "tt1_boundary_value",
    "tt_pairing",
    "unitarity_defect",
    "visual_distance",
    "__version__",
]
