"""Planar shelf-of-cubbies scene and the heuristic terms for reaching into it.

A shelf is a row of open boxes sharing one front plane. The terms cover
extraction from a cubby, attraction into the target cubby, a waypoint in
front of the opening and collision avoidance with the walls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..finsler import GatedBarrierEnergy, IsotropicEnergy
from .maps import LineDistanceMap, OffsetMap, PlaneSignedDistanceMap, SegmentSetDistanceMap
from .potentials import (
    BarrierInversePower,
    LimitPotential,
    PulledPotential,
    RBFProfile,
    SoftNormAttractor,
    tanh_switch,
    tanh_switch_slope,
)
from .terms import GEOMETRIC, FabricTerm


@dataclass(frozen=True)
class CubbyScene:
    """``count`` cubbies of ``width`` x ``depth`` in a row.

    ``front_point`` is the outer corner of the first cubby on the front plane,
    ``normal`` the outward normal of the front plane. Cubbies extend along the
    tangent obtained by rotating ``normal`` by -90 degrees.
    """

    front_point: np.ndarray
    normal: np.ndarray
    width: float = 0.6
    depth: float = 0.6
    count: int = 3
    target_index: int = 1

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        object.__setattr__(self, "normal", n / np.linalg.norm(n))
        object.__setattr__(self, "front_point", np.asarray(self.front_point, dtype=float))
        if not 0 <= self.target_index < self.count:
            raise ValueError("target_index out of range")

    @property
    def tangent(self) -> np.ndarray:
        return np.array([self.normal[1], -self.normal[0]])

    def opening_center(self, index: int) -> np.ndarray:
        return self.front_point + (index + 0.5) * self.width * self.tangent

    def target_point(self) -> np.ndarray:
        return self.opening_center(self.target_index) - 0.5 * self.depth * self.normal

    def waypoint(self, offset: float) -> np.ndarray:
        return self.opening_center(self.target_index) + offset * self.normal

    def walls(self) -> list[tuple[np.ndarray, np.ndarray]]:
        back = -self.depth * self.normal
        segs = [(self.front_point + back, self.front_point + back + self.count * self.width * self.tangent)]
        for i in range(self.count + 1):
            a = self.front_point + i * self.width * self.tangent
            segs.append((a, a + back))
        return segs

    def front_map(self) -> PlaneSignedDistanceMap:
        return PlaneSignedDistanceMap(self.front_point, self.normal)

    def back_map(self) -> PlaneSignedDistanceMap:
        return PlaneSignedDistanceMap(self.front_point - self.depth * self.normal, self.normal)

    def center_line_map(self) -> LineDistanceMap:
        return LineDistanceMap(self.opening_center(self.target_index), self.normal)

    def collision_map(self) -> SegmentSetDistanceMap:
        return SegmentSetDistanceMap(tuple(self.walls()))


def _scalar_eval(task_map, x):
    tme = task_map.evaluate(x, np.zeros_like(x))
    return float(tme.x[0]), tme.jacobian[0]


@dataclass(frozen=True)
class ColumnSwitch:
    """``0.5 (tanh(alpha_m (y2 - r)) + 1)`` on the distance ``y2`` to the target center line."""

    line: LineDistanceMap
    alpha_m: float
    radius: float

    def __call__(self, x):
        y2, _ = _scalar_eval(self.line, np.asarray(x, dtype=float))
        return tanh_switch(y2, self.alpha_m, self.radius)

    def grad(self, x):
        y2, dy2 = _scalar_eval(self.line, np.asarray(x, dtype=float))
        return tanh_switch_slope(y2, self.alpha_m, self.radius) * dy2


@dataclass(frozen=True)
class ExtractionProfile:
    """``s(y1) ((mbar - munder) s(y2) + munder)`` with a hard front-plane gate."""

    front: PlaneSignedDistanceMap
    column: ColumnSwitch
    mbar: float
    munder: float
    d_front: float

    def front_gate(self, x) -> float:
        y1, _ = _scalar_eval(self.front, np.asarray(x, dtype=float))
        return 1.0 if y1 < self.d_front else 0.0

    def __call__(self, x):
        return self.front_gate(x) * ((self.mbar - self.munder) * self.column(x) + self.munder)

    def grad(self, x):
        return self.front_gate(x) * (self.mbar - self.munder) * self.column.grad(x)


@dataclass(frozen=True)
class SwitchedRBFProfile:
    """RBF bump around ``center`` weighted by a column switch (or its complement)."""

    center: np.ndarray
    rbf: RBFProfile
    column: ColumnSwitch
    complement: bool

    def _weight(self, x):
        s = self.column(x)
        ds = self.column.grad(x)
        return (1.0 - s, -ds) if self.complement else (s, ds)

    def __call__(self, x):
        w, _ = self._weight(x)
        return w * self.rbf(np.asarray(x, dtype=float) - self.center)

    def grad(self, x):
        rel = np.asarray(x, dtype=float) - self.center
        w, dw = self._weight(x)
        return dw * self.rbf(rel) + w * self.rbf.grad(rel)


def cubby_terms(
    scene: CubbyScene,
    mbar: float = 2.0,
    munder: float = 0.2,
    alpha_m: float = 50.0,
    r_switch: float = 0.15,
    d_front: float = 0.1,
    waypoint_offset: float = 0.15,
    k: float = 5.0,
    alpha_psi: float = 10.0,
    rbf_alpha: float = 0.75,
    limit_params: tuple[float, float, float, float] = (0.4, 0.2, 20.0, 5.0),
    k_b: float = 1.0,
    alpha_b: float = 1e-4,
    name: str = "cubby",
) -> list[FabricTerm]:
    """Extraction, target-cubby attraction, waypoint attraction and collision terms.

    The first three live on the end-effector position space (``task_map`` is
    None, so they attach to that node directly). The collision term carries
    its own distance map and is meant for every collision body point.
    """
    dim = scene.front_point.shape[0]
    column = ColumnSwitch(scene.center_line_map(), alpha_m, r_switch)
    extraction_profile = ExtractionProfile(scene.front_map(), column, mbar, munder, d_front)
    extraction = FabricTerm(
        name=f"{name}_extraction",
        task_map=None,
        energy=IsotropicEnergy(dim, extraction_profile, extraction_profile.grad),
        policy_kind=GEOMETRIC,
        potential=PulledPotential(LimitPotential(*limit_params), scene.back_map()),
    )
    rbf = RBFProfile(mbar, munder, rbf_alpha)
    target = scene.target_point()
    target_profile = SwitchedRBFProfile(target, rbf, column, complement=True)
    target_term = FabricTerm(
        name=f"{name}_target",
        task_map=None,
        energy=IsotropicEnergy(dim, target_profile, target_profile.grad),
        policy_kind=GEOMETRIC,
        potential=PulledPotential(SoftNormAttractor(k, alpha_psi), OffsetMap(target)),
    )
    waypoint = scene.waypoint(waypoint_offset)
    waypoint_profile = SwitchedRBFProfile(waypoint, rbf, column, complement=False)
    waypoint_term = FabricTerm(
        name=f"{name}_waypoint",
        task_map=None,
        energy=IsotropicEnergy(dim, waypoint_profile, waypoint_profile.grad),
        policy_kind=GEOMETRIC,
        potential=PulledPotential(SoftNormAttractor(k, alpha_psi), OffsetMap(waypoint)),
    )
    collision = FabricTerm(
        name=f"{name}_collision",
        task_map=scene.collision_map(),
        energy=GatedBarrierEnergy(k_b, power=2.0, gated=False),
        policy_kind=GEOMETRIC,
        potential=BarrierInversePower(alpha_b, c=1.0, p=8.0),
        potential_anchor="infinity",
    )
    return [extraction, target_term, waypoint_term, collision]
