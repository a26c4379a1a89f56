"""Geometric fabrics: composable second-order motion policies on transform trees."""

from .spec_algebra import (
    DEFAULT_RIDGE,
    DimensionError,
    PolicyValue,
    SpecValue,
    TaskMapEval,
    metric_weighted_average,
    pullback_spec,
    resolve_policy,
    sum_specs,
)
from .finsler import (
    BarrierDomainError,
    EnergyEval,
    EuclideanEnergy,
    GatedBarrierEnergy,
    IsotropicEnergy,
    RiemannianEnergy,
    WeightedEuclideanEnergy,
    validate_finsler,
)
from .kinematics import BodyPoint, BodyPointMap, PlanarArm, particle_map
from .tree import RootResolution, TransformTree, resolve_root
from .speed_control import (
    BasicDamping,
    RegulatorTrace,
    SpeedControlParams,
    basic_damping,
    energization_alpha,
    regulate,
    zero_work_force,
)
from .runtime import (
    FabricSystem,
    IntegratorConfig,
    SettleStop,
    Trajectory,
    detect_convergence,
    read_csv,
    rollout,
    step,
)
from .metrics import MetricsReport, arc_length_difference, compare_variants, path_difference
from .scenario import ScenarioError, load_scenario
from .harness import build_tree, recompute_metrics, run_scenario, variants

__version__ = "0.1.0"
