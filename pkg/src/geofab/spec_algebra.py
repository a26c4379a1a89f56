"""Evaluated spec values and their algebra: summation, pullback and resolution.

A natural-form spec ``(M, f)`` stands for the equation ``M xdd + f = 0`` on some
space. Specs here are plain evaluated values at a state; the functional layer
(energies, task maps, trees) produces them.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

DEFAULT_RIDGE = 1e-9


class DimensionError(ValueError):
    """Raised when spec, map or state dimensions do not line up."""


def as_vector(value) -> np.ndarray:
    """Coerce to a 1-D float array, skipping the copy when already one."""
    if type(value) is np.ndarray and value.ndim == 1 and value.dtype == np.float64:
        return value
    return np.atleast_1d(np.asarray(value, dtype=float))


def _as_matrix(value, dim: int | None = None) -> np.ndarray:
    m = np.atleast_2d(np.asarray(value, dtype=float))
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"metric must be square, got shape {m.shape}")
    if dim is not None and m.shape[0] != dim:
        raise DimensionError(f"metric has dim {m.shape[0]}, expected {dim}")
    return m


@dataclass(frozen=True)
class SpecValue:
    """Natural-form spec ``(M, f)`` evaluated at a state."""

    metric: np.ndarray
    force: np.ndarray

    def __post_init__(self):
        f = np.atleast_1d(np.asarray(self.force, dtype=float))
        m = _as_matrix(self.metric, f.shape[0])
        if f.ndim != 1:
            raise DimensionError(f"force must be a vector, got shape {f.shape}")
        m = 0.5 * (m + m.T)
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(f))):
            raise FloatingPointError("spec contains non-finite entries")
        object.__setattr__(self, "metric", m)
        object.__setattr__(self, "force", f)

    @property
    def dim(self) -> int:
        return self.force.shape[0]

    @classmethod
    def zeros(cls, dim: int) -> "SpecValue":
        return cls(np.zeros((dim, dim)), np.zeros(dim))

    def is_psd(self, rtol: float = 1e-10) -> bool:
        scale = np.linalg.norm(self.metric)
        return bool(np.linalg.eigvalsh(self.metric).min() >= -rtol * max(scale, 1.0))

    def __add__(self, other: "SpecValue") -> "SpecValue":
        return sum_specs(self, other)


@dataclass(frozen=True)
class TaskMapEval:
    """A task map evaluated at a parent state.

    ``x`` is the mapped position, ``jacobian`` the ``(child_dim, parent_dim)``
    Jacobian and ``curvature`` the ``Jdot @ qdot`` term.
    """

    x: np.ndarray
    jacobian: np.ndarray
    curvature: np.ndarray

    def __post_init__(self):
        x = as_vector(self.x)
        jac = self.jacobian
        if not (type(jac) is np.ndarray and jac.ndim == 2 and jac.dtype == np.float64):
            jac = np.atleast_2d(np.asarray(jac, dtype=float))
        curv = as_vector(self.curvature)
        if jac.shape[0] != x.shape[0] or curv.shape != x.shape:
            raise DimensionError(
                f"inconsistent task map shapes: x {x.shape}, J {jac.shape}, Jdot qdot {curv.shape}"
            )
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "jacobian", jac)
        object.__setattr__(self, "curvature", curv)

    @property
    def child_dim(self) -> int:
        return self.jacobian.shape[0]

    @property
    def parent_dim(self) -> int:
        return self.jacobian.shape[1]


@dataclass(frozen=True)
class PolicyValue:
    """Policy-form spec ``[M, pi]``: a solved acceleration with its priority metric."""

    metric: np.ndarray
    acceleration: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.acceleration, dtype=float))
        m = _as_matrix(self.metric, a.shape[0])
        object.__setattr__(self, "metric", 0.5 * (m + m.T))
        object.__setattr__(self, "acceleration", a)

    @property
    def dim(self) -> int:
        return self.acceleration.shape[0]

    def to_spec(self) -> SpecValue:
        """Natural form ``(M, -M pi)`` of this policy."""
        return SpecValue(self.metric, -self.metric @ self.acceleration)


def sum_specs(a: SpecValue, b: SpecValue) -> SpecValue:
    if a.dim != b.dim:
        raise DimensionError(f"cannot sum specs of dims {a.dim} and {b.dim}")
    return SpecValue(a.metric + b.metric, a.force + b.force)


def pullback_spec(spec: SpecValue, tme: TaskMapEval) -> SpecValue:
    """Pull ``spec`` on the child space back to the parent through ``tme``.

    Uses ``xdd = J qdd + Jdot qdot`` so the result is ``(J^T M J, J^T (f + M Jdot qdot))``.
    """
    if spec.dim != tme.child_dim:
        raise DimensionError(
            f"spec dim {spec.dim} does not match task map child dim {tme.child_dim}"
        )
    jac = tme.jacobian
    mj = spec.metric @ jac
    return SpecValue(jac.T @ mj, jac.T @ (spec.force + spec.metric @ tme.curvature))


def solve_ridge(metric: np.ndarray, rhs: np.ndarray, ridge: float = DEFAULT_RIDGE) -> np.ndarray:
    n = metric.shape[0]
    return np.linalg.solve(metric + ridge * np.eye(n), rhs)


def resolve_policy(
    spec: SpecValue, ridge: float = DEFAULT_RIDGE, warn: bool = True
) -> PolicyValue:
    """Solve ``M a + f = 0`` for ``a`` with a small ridge on ``M``.

    With ``warn`` set, a RuntimeWarning flags metrics whose smallest eigenvalue
    is below the ridge while the force is nonzero.
    """
    if warn and np.any(spec.force) and np.linalg.eigvalsh(spec.metric).min() < ridge:
        warnings.warn(
            "metric is near singular; resolution is dominated by ridge regularization",
            RuntimeWarning,
            stacklevel=2,
        )
    return PolicyValue(spec.metric, -solve_ridge(spec.metric, spec.force, ridge))


def metric_weighted_average(
    terms: Sequence[PolicyValue], ridge: float = DEFAULT_RIDGE
) -> PolicyValue:
    if not terms:
        raise ValueError("metric_weighted_average needs at least one policy")
    dim = terms[0].dim
    total = np.zeros((dim, dim))
    weighted = np.zeros(dim)
    for term in terms:
        if term.dim != dim:
            raise DimensionError(f"policy dims differ: {term.dim} vs {dim}")
        total += term.metric
        weighted += term.metric @ term.acceleration
    return PolicyValue(total, solve_ridge(total, weighted, ridge))
