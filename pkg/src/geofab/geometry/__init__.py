from .maps import (
    CircleDistanceMap,
    ComposedMap,
    IdentityMap,
    JointLimitMap,
    LineDistanceMap,
    OffsetMap,
    PlaneSignedDistanceMap,
    SegmentSetDistanceMap,
    TaskMap,
    compose,
)
from .potentials import (
    BarrierInversePower,
    ConstantProfile,
    LimitPotential,
    Potential,
    PulledPotential,
    RBFProfile,
    SoftNormAttractor,
    TanhSwitchProfile,
)
from .terms import (
    EXECUTION,
    FORCING,
    GEOMETRIC,
    STYLE_TO_KIND,
    FabricTerm,
    attractor_term,
    default_config_term,
    joint_limit_terms,
    lift_hd2,
    obstacle_term,
)
from .cubby import CubbyScene, cubby_terms
