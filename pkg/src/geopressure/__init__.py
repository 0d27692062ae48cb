"""Geometric pressure estimators for Julia sets of polynomial and rational maps.

The hot backward-tree walk runs in a compiled extension when it is available
(``geopressure.kernels.BACKEND == "compiled"``) and in numpy otherwise.
"""
from .dimension import (
    DimensionEstimate,
    EstimatorSpec,
    PressureCurve,
    convergence_report,
    first_zero,
    pressure_curve,
)
from .errors import GeoPressureError, GeoPressureWarning
from .green import external_angle, green_potential, trace_external_ray
from .kernels import BACKEND
from .mapcore import (
    MapSpec,
    critical_points,
    derivative_modulus,
    distance_to_critical_set,
    evaluate,
    preimages,
)
from .pullback import (
    DiskEnclosure,
    PullbackParams,
    propagate_disk,
    pullinf_tree_pressure,
    telescope_diagnostic,
)
from .puzzle import (
    PuzzleLevel,
    PuzzlePiece,
    RestrictionSchedule,
    assemble_matrix,
    build_base_puzzle,
    refine_puzzle,
)
from .spectral import (
    PerronResult,
    SparseNonnegMatrix,
    entrywise_power,
    is_primitive,
    perron_root_in_t,
    spectral_radius,
)
from .tree import (
    BranchAggregate,
    FuzzyParams,
    PressureSample,
    deriv_bounds_on_disk,
    expand_tree,
    fuzzy_tree_pressure,
    multi_sample_tree_pressure,
    plain_tree_pressure,
    restricted_fuzzy_tree_pressure,
    select_base_point,
)

__version__ = "0.1.0"
