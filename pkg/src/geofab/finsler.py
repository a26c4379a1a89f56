"""Finsler energy families with analytic energy tensors and curvature forces."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .spec_algebra import DimensionError, SpecValue, as_vector


class BarrierDomainError(ValueError):
    """Raised when a barrier quantity is evaluated at or past its boundary."""

    def __init__(self, message: str, value: float | None = None, where: str | None = None):
        super().__init__(message)
        self.value = value
        self.where = where


@dataclass(frozen=True)
class EnergyEval:
    energy: float
    tensor: np.ndarray
    curvature_force: np.ndarray
    hamiltonian: float

    @property
    def spec(self) -> SpecValue:
        return SpecValue(self.tensor, self.curvature_force)


class FinslerEnergy:
    """Base class for energies ``L_e(x, xdot)``.

    Subclasses implement :meth:`lagrangian` and :meth:`evaluate`. The
    Hamiltonian is derived from the velocity gradient, so subclasses also
    provide :meth:`velocity_gradient`.
    """

    family = "abstract"
    dim: int

    def lagrangian(self, x, xdot) -> float:
        raise NotImplementedError

    def velocity_gradient(self, x, xdot) -> np.ndarray:
        raise NotImplementedError

    def evaluate(self, x, xdot) -> EnergyEval:
        raise NotImplementedError

    def position_metric(self, x) -> np.ndarray:
        """Velocity-independent part of the metric (gates removed)."""
        raise NotImplementedError

    def sample_position(self, rng: np.random.Generator) -> np.ndarray:
        return rng.normal(size=self.dim)

    def _check(self, x, xdot):
        x = as_vector(x)
        xdot = as_vector(xdot)
        if x.shape != (self.dim,) or xdot.shape != (self.dim,):
            raise DimensionError(
                f"{self.family} energy of dim {self.dim} got x {x.shape}, xdot {xdot.shape}"
            )
        return x, xdot

    def _finish(self, x, xdot, energy, tensor, force) -> EnergyEval:
        h = float(xdot @ self.velocity_gradient(x, xdot) - energy)
        return EnergyEval(float(energy), tensor, force, h)


@dataclass(frozen=True)
class EuclideanEnergy(FinslerEnergy):
    """``L = 1/2 |xdot|^2``."""

    dim: int
    family = "euclidean"

    def lagrangian(self, x, xdot):
        x, xdot = self._check(x, xdot)
        return 0.5 * float(xdot @ xdot)

    def velocity_gradient(self, x, xdot):
        return np.asarray(xdot, dtype=float)

    def position_metric(self, x):
        return np.eye(self.dim)

    def evaluate(self, x, xdot):
        x, xdot = self._check(x, xdot)
        return self._finish(x, xdot, 0.5 * xdot @ xdot, np.eye(self.dim), np.zeros(self.dim))


@dataclass(frozen=True)
class WeightedEuclideanEnergy(FinslerEnergy):
    """``L = 1/2 xdot^T W xdot`` for a constant symmetric positive definite ``W``."""

    weight: np.ndarray
    family = "weighted_euclidean"

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.weight, dtype=float))
        object.__setattr__(self, "weight", 0.5 * (w + w.T))

    @property
    def dim(self) -> int:
        return self.weight.shape[0]

    def lagrangian(self, x, xdot):
        x, xdot = self._check(x, xdot)
        return 0.5 * float(xdot @ self.weight @ xdot)

    def velocity_gradient(self, x, xdot):
        return self.weight @ np.asarray(xdot, dtype=float)

    def position_metric(self, x):
        return self.weight.copy()

    def evaluate(self, x, xdot):
        x, xdot = self._check(x, xdot)
        return self._finish(
            x, xdot, 0.5 * xdot @ self.weight @ xdot, self.weight.copy(), np.zeros(self.dim)
        )


@dataclass(frozen=True)
class RiemannianEnergy(FinslerEnergy):
    """``L = 1/2 xdot^T G(x) xdot`` with a position dependent metric.

    ``metric_grad(x)`` returns the array ``dG[i, j, k] = d G_ij / d x_k``.
    """

    dim: int
    metric: Callable[[np.ndarray], np.ndarray]
    metric_grad: Callable[[np.ndarray], np.ndarray]
    family = "riemannian"

    def lagrangian(self, x, xdot):
        x, xdot = self._check(x, xdot)
        return 0.5 * float(xdot @ self.metric(x) @ xdot)

    def velocity_gradient(self, x, xdot):
        return self.metric(x) @ xdot

    def position_metric(self, x):
        return np.asarray(self.metric(np.asarray(x, dtype=float)), dtype=float)

    def evaluate(self, x, xdot):
        x, xdot = self._check(x, xdot)
        g = np.asarray(self.metric(x), dtype=float)
        dg = np.asarray(self.metric_grad(x), dtype=float)
        # d/dx (G xdot) xdot - 1/2 xdot^T dG xdot
        cross = np.einsum("ijk,j,k->i", dg, xdot, xdot)
        grad_x = 0.5 * np.einsum("jki,j,k->i", dg, xdot, xdot)
        return self._finish(x, xdot, 0.5 * xdot @ g @ xdot, g, cross - grad_x)


@dataclass(frozen=True)
class IsotropicEnergy(FinslerEnergy):
    """Riemannian energy with a scalar metric ``G(x) = g(x) I``.

    ``profile`` gives ``g(x)`` and ``profile_grad`` its gradient. Hard
    position switches inside ``profile`` contribute nothing to the gradient.
    """

    dim: int
    profile: Callable[[np.ndarray], float]
    profile_grad: Callable[[np.ndarray], np.ndarray]
    family = "riemannian"

    def lagrangian(self, x, xdot):
        x, xdot = self._check(x, xdot)
        return 0.5 * float(self.profile(x)) * float(xdot @ xdot)

    def velocity_gradient(self, x, xdot):
        return float(self.profile(x)) * np.asarray(xdot, dtype=float)

    def position_metric(self, x):
        return float(self.profile(np.asarray(x, dtype=float))) * np.eye(self.dim)

    def evaluate(self, x, xdot):
        x, xdot = self._check(x, xdot)
        g = float(self.profile(x))
        dg = np.asarray(self.profile_grad(x), dtype=float)
        speed2 = float(xdot @ xdot)
        force = xdot * float(dg @ xdot) - 0.5 * speed2 * dg
        return self._finish(x, xdot, 0.5 * g * speed2, g * np.eye(self.dim), force)


@dataclass(frozen=True)
class GatedBarrierEnergy(FinslerEnergy):
    """One dimensional barrier energy ``L = 1/2 s(xdot) k / x^p xdot^2``.

    With ``gated`` the switch ``s`` is 1 only while ``xdot < 0`` (moving
    toward the boundary); the boundary ``xdot = 0`` counts as gate off.
    Without it ``s`` is identically 1.
    """

    gain: float
    power: float = 2.0
    gated: bool = True
    family = "gated_barrier_1d"
    dim = 1

    def _x(self, x) -> float:
        value = float(as_vector(x)[0])
        if value <= 0.0:
            raise BarrierDomainError(
                f"barrier energy evaluated at x = {value:.6g} <= 0", value=value
            )
        return value

    def gate(self, xdot) -> float:
        if not self.gated:
            return 1.0
        return 1.0 if float(as_vector(xdot)[0]) < 0.0 else 0.0

    def lagrangian(self, x, xdot):
        x, xdot = self._check(x, xdot)
        xv = self._x(x)
        return 0.5 * self.gate(xdot) * self.gain / xv**self.power * float(xdot[0]) ** 2

    def velocity_gradient(self, x, xdot):
        xv = self._x(x)
        return np.array([self.gate(xdot) * self.gain / xv**self.power * float(as_vector(xdot)[0])])

    def position_metric(self, x):
        return np.array([[self.gain / self._x(x) ** self.power]])

    def sample_position(self, rng):
        return rng.uniform(0.1, 3.0, size=1)

    def evaluate(self, x, xdot):
        x, xdot = self._check(x, xdot)
        xv = self._x(x)
        s = self.gate(xdot)
        g = s * self.gain / xv**self.power
        dg = -self.power * s * self.gain / xv ** (self.power + 1.0)
        v = float(xdot[0])
        # d/dx(g v) v - 1/2 dg v^2 = 1/2 dg v^2
        force = np.array([0.5 * dg * v * v])
        return self._finish(x, xdot, 0.5 * g * v * v, np.array([[g]]), force)


@dataclass
class ValidationReport:
    positivity: bool
    homogeneity: bool
    invertibility: bool
    tensor_hd0: bool
    min_eigenvalue: float
    sample_count: int
    failures: dict[str, list[str]] = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return self.positivity and self.homogeneity and self.invertibility and self.tensor_hd0


HD2_SCALES = (0.0, 0.5, 2.0, 10.0)


def validate_finsler(
    energy: FinslerEnergy,
    sample_count: int = 100,
    seed: int = 0,
    rtol: float = 1e-8,
    eig_tol: float = 1e-12,
) -> ValidationReport:
    """Check the Finsler conditions on random states and report per condition.

    Failing states are recorded as short strings; nothing is raised.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    failures: dict[str, list[str]] = {
        "positivity": [],
        "homogeneity": [],
        "invertibility": [],
        "tensor_hd0": [],
    }
    min_eig = np.inf
    for i in range(sample_count):
        x = energy.sample_position(rng)
        xdot = rng.normal(size=energy.dim)
        base = energy.lagrangian(x, xdot)
        at_rest = energy.lagrangian(x, np.zeros(energy.dim))
        if not (base > 0.0 and abs(at_rest) <= 1e-15):
            failures["positivity"].append(f"sample {i}: L={base:.3g}, L(x,0)={at_rest:.3g}")
        for lam in HD2_SCALES:
            scaled = energy.lagrangian(x, lam * xdot)
            if abs(scaled - lam**2 * base) > rtol * (1.0 + abs(lam**2 * base)):
                failures["homogeneity"].append(f"sample {i}: lambda={lam}")
        tensor = energy.evaluate(x, xdot).tensor
        eig = float(np.linalg.eigvalsh(tensor).min())
        min_eig = min(min_eig, eig)
        if eig <= eig_tol:
            failures["invertibility"].append(f"sample {i}: min eig {eig:.3g}")
        for lam in HD2_SCALES[1:]:
            other = energy.evaluate(x, lam * xdot).tensor
            if np.linalg.norm(other - tensor) > 1e-9 * (1.0 + np.linalg.norm(tensor)):
                failures["tensor_hd0"].append(f"sample {i}: lambda={lam}")
    return ValidationReport(
        positivity=not failures["positivity"],
        homogeneity=not failures["homogeneity"],
        invertibility=not failures["invertibility"],
        tensor_hd0=not failures["tensor_hd0"],
        min_eigenvalue=float(min_eig),
        sample_count=sample_count,
        failures={k: v for k, v in failures.items() if v},
    )
