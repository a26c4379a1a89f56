"""Point particle and planar N-link arm kinematics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry.maps import TaskMap
from .spec_algebra import DimensionError, TaskMapEval, as_vector


@dataclass(frozen=True)
class BodyPoint:
    """Point at fraction ``offset`` along link ``link`` (0 = proximal joint)."""

    link: int
    offset: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.offset <= 1.0:
            raise ValueError("body point offset must lie in [0, 1]")

    @property
    def label(self) -> str:
        return f"link{self.link}@{self.offset:g}"


@dataclass(frozen=True)
class PlanarArm:
    """Serial planar arm with revolute joints; angles counterclockwise positive.

    ``base_pose`` is ``(x, y, theta)`` of the first joint.
    """

    link_lengths: tuple
    base_pose: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        lengths = tuple(float(v) for v in self.link_lengths)
        if not lengths or min(lengths) <= 0.0:
            raise ValueError("link lengths must be positive")
        pose = tuple(float(v) for v in self.base_pose)
        if len(pose) != 3:
            raise ValueError("base_pose is (x, y, theta)")
        object.__setattr__(self, "link_lengths", lengths)
        object.__setattr__(self, "base_pose", pose)

    @property
    def n_joints(self) -> int:
        return len(self.link_lengths)

    @property
    def end_effector(self) -> BodyPoint:
        return BodyPoint(self.n_joints - 1, 1.0)

    def _check_point(self, point: BodyPoint):
        if not 0 <= point.link < self.n_joints:
            raise ValueError(f"link index {point.link} out of range for {self.n_joints} links")

    def _angles(self, q) -> np.ndarray:
        q = as_vector(q)
        if q.shape != (self.n_joints,):
            raise DimensionError(f"arm has {self.n_joints} joints, got q of shape {q.shape}")
        return self.base_pose[2] + np.cumsum(q)

    def _weights(self, point: BodyPoint) -> np.ndarray:
        w = np.zeros(self.n_joints)
        w[: point.link] = 1.0
        w[point.link] = point.offset
        return w * np.asarray(self.link_lengths)

    def fk(self, q, point: BodyPoint | None = None) -> np.ndarray:
        point = point or self.end_effector
        self._check_point(point)
        phi = self._angles(q)
        w = self._weights(point)
        base = np.asarray(self.base_pose[:2])
        return base + np.array([w @ np.cos(phi), w @ np.sin(phi)])

    def jacobian(self, q, qdot, point: BodyPoint | None = None) -> TaskMapEval:
        """Position, Jacobian and ``Jdot qdot`` of ``point``."""
        point = point or self.end_effector
        self._check_point(point)
        phi = self._angles(q)
        qdot = as_vector(qdot)
        if qdot.shape != (self.n_joints,):
            raise DimensionError(f"arm has {self.n_joints} joints, got qdot of shape {qdot.shape}")
        w = self._weights(point)
        c, s = w * np.cos(phi), w * np.sin(phi)
        # column k collects the links at or beyond joint k
        tail_c = np.cumsum(c[::-1])[::-1]
        tail_s = np.cumsum(s[::-1])[::-1]
        jac = np.vstack([-tail_s, tail_c])
        phidot = np.cumsum(qdot)
        curvature = -np.array([c @ phidot**2, s @ phidot**2])
        x = np.asarray(self.base_pose[:2]) + np.array([c.sum(), s.sum()])
        return TaskMapEval(x, jac, curvature)

    def default_body_points(self) -> list[BodyPoint]:
        """Joint locations after the base, link midpoints and the end-effector."""
        points = []
        for i in range(self.n_joints):
            points.append(BodyPoint(i, 0.5))
            points.append(BodyPoint(i, 1.0))
        return points


@dataclass(frozen=True)
class BodyPointMap(TaskMap):
    """Task map from joint angles to the planar position of a body point."""

    arm: PlanarArm
    point: BodyPoint
    kind = "ee_position"
    out_dim = 2

    @property
    def in_dim(self):
        return self.arm.n_joints

    def evaluate(self, q, qdot):
        q, qdot = self._check(q, qdot)
        return self.arm.jacobian(q, qdot, self.point)


def particle_map(q) -> TaskMapEval:
    """Particles live directly in the task space: identity map."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    return TaskMapEval(q.copy(), np.eye(q.shape[0]), np.zeros(q.shape[0]))


def fk(arm: PlanarArm, q, point: BodyPoint | None = None) -> np.ndarray:
    return arm.fk(q, point)


def jacobian(arm: PlanarArm, q, qdot, point: BodyPoint | None = None) -> TaskMapEval:
    return arm.jacobian(q, qdot, point)


def arm_from_lengths(lengths: Sequence[float], base_pose=(0.0, 0.0, 0.0)) -> PlanarArm:
    return PlanarArm(tuple(lengths), tuple(base_pose))
