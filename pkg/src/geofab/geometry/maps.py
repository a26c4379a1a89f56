"""Differentiable task maps with analytic Jacobians and curvature terms."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..finsler import BarrierDomainError
from ..spec_algebra import DimensionError, TaskMapEval, as_vector


class TaskMap:
    """Map ``x = phi(q)`` from a parent space of ``in_dim`` to ``out_dim``.

    Subclasses implement :meth:`evaluate`, returning position, Jacobian and
    the curvature term ``Jdot qdot``. Barrier maps (``barrier = True``) are
    valid only where every output component is positive.
    """

    kind = "abstract"
    barrier = False
    in_dim: int
    out_dim: int

    def evaluate(self, q, qdot) -> TaskMapEval:
        raise NotImplementedError

    def position(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        return self.evaluate(q, np.zeros_like(q)).x

    def _check(self, q, qdot):
        q = as_vector(q)
        qdot = as_vector(qdot)
        if q.shape != (self.in_dim,) or qdot.shape != (self.in_dim,):
            raise DimensionError(
                f"{self.kind} map expects dim {self.in_dim}, got q {q.shape}, qdot {qdot.shape}"
            )
        return q, qdot

    def check_domain(self, x: np.ndarray) -> None:
        if self.barrier and np.any(x <= 0.0):
            raise BarrierDomainError(
                f"{self.kind} map left its barrier domain (x = {float(np.min(x)):.6g})",
                value=float(np.min(x)),
            )


@dataclass(frozen=True)
class IdentityMap(TaskMap):
    dim: int
    kind = "identity"

    @property
    def in_dim(self):
        return self.dim

    @property
    def out_dim(self):
        return self.dim

    def evaluate(self, q, qdot):
        q, qdot = self._check(q, qdot)
        return TaskMapEval(q.copy(), np.eye(self.dim), np.zeros(self.dim))


@dataclass(frozen=True)
class OffsetMap(TaskMap):
    """``x = q - target``."""

    target: np.ndarray
    kind = "offset"

    def __post_init__(self):
        object.__setattr__(self, "target", np.atleast_1d(np.asarray(self.target, dtype=float)))

    @property
    def in_dim(self):
        return self.target.shape[0]

    @property
    def out_dim(self):
        return self.target.shape[0]

    def evaluate(self, q, qdot):
        q, qdot = self._check(q, qdot)
        return TaskMapEval(q - self.target, np.eye(self.in_dim), np.zeros(self.in_dim))


def _distance_curvature(u: np.ndarray, velocity: np.ndarray, dist: float) -> float:
    # d/dt (u^T v) for u = (p - c)/|p - c| with c fixed
    along = float(u @ velocity)
    return (float(velocity @ velocity) - along * along) / dist


@dataclass(frozen=True)
class CircleDistanceMap(TaskMap):
    """Normalized clearance ``x = |q - origin| / radius - 1`` to a circle."""

    origin: np.ndarray
    radius: float
    kind = "circle_distance"
    barrier = True
    out_dim = 1

    def __post_init__(self):
        object.__setattr__(self, "origin", np.atleast_1d(np.asarray(self.origin, dtype=float)))
        if self.radius <= 0:
            raise ValueError("circle radius must be positive")

    @property
    def in_dim(self):
        return self.origin.shape[0]

    def evaluate(self, q, qdot):
        q, qdot = self._check(q, qdot)
        diff = q - self.origin
        dist = float(np.linalg.norm(diff))
        if dist == 0.0:
            return TaskMapEval([-1.0], np.zeros((1, self.in_dim)), [0.0])
        u = diff / dist
        return TaskMapEval(
            [dist / self.radius - 1.0],
            u[None, :] / self.radius,
            [_distance_curvature(u, qdot, dist) / self.radius],
        )


@dataclass(frozen=True)
class JointLimitMap(TaskMap):
    """Distance of joint ``index`` to an upper (``limit - q_j``) or lower (``q_j - limit``) limit."""

    dim: int
    index: int
    limit: float
    upper: bool
    kind = "joint_limit"
    barrier = True
    out_dim = 1

    @property
    def in_dim(self):
        return self.dim

    def evaluate(self, q, qdot):
        q, qdot = self._check(q, qdot)
        sign = -1.0 if self.upper else 1.0
        jac = np.zeros((1, self.dim))
        jac[0, self.index] = sign
        return TaskMapEval([sign * (q[self.index] - self.limit)], jac, [0.0])


@dataclass(frozen=True)
class PlaneSignedDistanceMap(TaskMap):
    """Signed distance to a plane (a line in 2-D); negative behind ``normal``."""

    point: np.ndarray
    normal: np.ndarray
    kind = "plane_signed_distance"
    out_dim = 1

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))
        object.__setattr__(self, "normal", n / np.linalg.norm(n))

    @property
    def in_dim(self):
        return self.point.shape[0]

    def evaluate(self, q, qdot):
        q, qdot = self._check(q, qdot)
        return TaskMapEval([float(self.normal @ (q - self.point))], self.normal[None, :], [0.0])


@dataclass(frozen=True)
class LineDistanceMap(TaskMap):
    """Unsigned distance to the line through ``point`` along ``direction``."""

    point: np.ndarray
    direction: np.ndarray
    kind = "line_distance"
    out_dim = 1

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))
        object.__setattr__(self, "direction", d / np.linalg.norm(d))

    @property
    def in_dim(self):
        return self.point.shape[0]

    def closest_point(self, q) -> np.ndarray:
        rel = np.asarray(q, dtype=float) - self.point
        return self.point + self.direction * float(self.direction @ rel)

    def evaluate(self, q, qdot):
        q, qdot = self._check(q, qdot)
        perp = q - self.closest_point(q)
        dist = float(np.linalg.norm(perp))
        if dist < 1e-12:
            return TaskMapEval([0.0], np.zeros((1, self.in_dim)), [0.0])
        u = perp / dist
        # velocity component orthogonal to the line
        vperp = qdot - self.direction * float(self.direction @ qdot)
        return TaskMapEval([dist], u[None, :], [_distance_curvature(u, vperp, dist)])


def _closest_on_segment(p: np.ndarray, a: np.ndarray, b: np.ndarray):
    """Closest point on segment ``ab`` and whether it lies strictly inside."""
    ab = b - a
    t = float((p - a) @ ab / (ab @ ab))
    if 0.0 < t < 1.0:
        return a + t * ab, True
    return (a if t <= 0.0 else b), False


@dataclass(frozen=True)
class SegmentSetDistanceMap(TaskMap):
    """Distance from a point to the nearest of a set of wall segments.

    The Jacobian is the unit vector away from the nearest point. The
    curvature term is exact away from ties between segments.
    """

    segments: tuple
    kind = "segment_distance"
    barrier = True
    out_dim = 1

    def __post_init__(self):
        segs = tuple(
            (np.asarray(a, dtype=float), np.asarray(b, dtype=float)) for a, b in self.segments
        )
        if not segs:
            raise ValueError("need at least one segment")
        object.__setattr__(self, "segments", segs)

    @property
    def in_dim(self):
        return self.segments[0][0].shape[0]

    def _nearest(self, q):
        best, best_d, best_dir = None, np.inf, None
        for a, b in self.segments:
            c, interior = _closest_on_segment(q, a, b)
            d = float(np.linalg.norm(q - c))
            if d < best_d:
                best, best_d = c, d
                best_dir = (b - a) / np.linalg.norm(b - a) if interior else None
        return best, best_dir

    def closest_point(self, q) -> np.ndarray:
        return self._nearest(np.asarray(q, dtype=float))[0]

    def evaluate(self, q, qdot):
        q, qdot = self._check(q, qdot)
        closest, along = self._nearest(q)
        diff = q - closest
        dist = float(np.linalg.norm(diff))
        if dist == 0.0:
            return TaskMapEval([0.0], np.zeros((1, self.in_dim)), [0.0])
        u = diff / dist
        # an interior closest point slides with q: only motion across the wall counts
        v = qdot if along is None else qdot - along * float(along @ qdot)
        return TaskMapEval([dist], u[None, :], [_distance_curvature(u, v, dist)])


@dataclass(frozen=True)
class ComposedMap(TaskMap):
    """``outer(inner(q))`` with chained Jacobian and curvature."""

    inner: TaskMap
    outer: TaskMap
    kind = "composed"

    def __post_init__(self):
        if self.inner.out_dim != self.outer.in_dim:
            raise DimensionError(
                f"cannot compose {self.inner.kind} (out {self.inner.out_dim}) "
                f"with {self.outer.kind} (in {self.outer.in_dim})"
            )

    @property
    def barrier(self):
        return self.outer.barrier

    @property
    def in_dim(self):
        return self.inner.in_dim

    @property
    def out_dim(self):
        return self.outer.out_dim

    def evaluate(self, q, qdot):
        first = self.inner.evaluate(q, qdot)
        second = self.outer.evaluate(first.x, first.jacobian @ np.asarray(qdot, dtype=float))
        return TaskMapEval(
            second.x,
            second.jacobian @ first.jacobian,
            second.jacobian @ first.curvature + second.curvature,
        )


def compose(*maps: Sequence[TaskMap]) -> TaskMap:
    out = maps[0]
    for m in maps[1:]:
        out = ComposedMap(out, m)
    return out
