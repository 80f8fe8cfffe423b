"""Simulator and analysis toolkit for the time-bounded cylinder mobility model."""

from .analytic import (
    BoundReport,
    CapacityEstimate,
    HypothesisViolation,
    capacity_functional_pointset,
    cylinder_hit_probability_bounds,
    euler_clt_constants,
    expected_covered_volume,
    isolated_clt_constants,
    isolated_intensity_bounds,
    point_hit_probability,
    spherical_cap_volume,
    unit_ball_volume,
    volume_clt_constants,
)
from .experiments import (
    CltReport,
    DegenerateDistribution,
    SizeBlock,
    empirical_w1_to_normal,
    ks_distance_to_normal,
    run_campaign,
    variance_bracket_check,
)
from .functionals import (
    FunctionalResult,
    NerveSizeError,
    VoxelChi,
    add_one_cost,
    covered_volume_mc,
    euler_characteristic,
    euler_characteristic_voxel_oracle,
    isolated_count,
    second_difference,
)
from .intersection import (
    IndeterminateIntersection,
    kwise_intersection_nonempty,
    kwise_reach,
    min_enclosing_ball,
)
from .model import (
    Cylinder,
    CylinderStack,
    Degenerate,
    Direction,
    DirectionLaw,
    Discrete,
    ModelParams,
    StackingSchedule,
    UniformCap,
    contains_point,
    pairwise_intersects,
    pairwise_intersects_stacked,
    pairwise_min_distance,
    position_at,
    v_shadow,
)
from .sampling import (
    CylinderSample,
    sample_direction,
    sample_poisson_basepoints,
    sample_stacked_directions,
    sample_tbc,
    with_extra,
)

__all__ = [name for name in dir() if not name.startswith("_")]

__version__ = "0.1.0"
