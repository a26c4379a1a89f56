"""Fabric terms: a Finsler energy paired with a policy on a task space."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad

from ..finsler import (
    FinslerEnergy,
    EnergyEval,
    GatedBarrierEnergy,
    IsotropicEnergy,
    WeightedEuclideanEnergy,
)
from ..spec_algebra import SpecValue, as_vector
from .maps import CircleDistanceMap, JointLimitMap, OffsetMap, TaskMap
from .potentials import (
    BarrierInversePower,
    LimitPotential,
    Potential,
    RBFProfile,
    SoftNormAttractor,
    TanhSwitchProfile,
)

GEOMETRIC = "geometric_hd2"
FORCING = "forcing_potential"
EXECUTION = "execution_energy"
POLICY_KINDS = (GEOMETRIC, FORCING, EXECUTION)

# fabric_style names used by scenario files
STYLE_TO_KIND = {"geometric": GEOMETRIC, "lagrangian": FORCING}


def lift_hd2(pi0: Callable[[np.ndarray], np.ndarray] | np.ndarray, x, xdot) -> np.ndarray:
    """Scale a position-only acceleration by ``|xdot|^2``."""
    xdot = np.asarray(xdot, dtype=float)
    base = pi0(np.asarray(x, dtype=float)) if callable(pi0) else np.asarray(pi0, dtype=float)
    return float(xdot @ xdot) * base


def velocity_gate(xdot) -> float:
    return 1.0 if float(as_vector(xdot)[0]) < 0.0 else 0.0


@dataclass(frozen=True)
class TermEval:
    energy: EnergyEval
    acceleration: np.ndarray | None
    forcing_gradient: np.ndarray | None


@dataclass(frozen=True)
class FabricTerm:
    """A fabric term living on the output space of ``task_map``.

    ``policy_kind`` selects how the acceleration potential is used:

    * ``geometric_hd2``: ``pi = -s |xdot|^2 dpsi``, an HD2 geometry.
    * ``forcing_potential``: ``pi = -dpsi``; the forcing gradient handed to the
      root is ``G(x) dpsi`` with ``G`` the velocity independent metric.
    * ``execution_energy``: only the energy is used.

    ``gated_policy`` applies the 1-D velocity switch ``s(xdot)`` to the
    geometric policy. ``potential_anchor`` says where the forcing potential
    is zero: ``"origin"`` or ``"infinity"`` (1-D barriers).
    """

    name: str
    task_map: TaskMap | None
    energy: FinslerEnergy
    policy_kind: str
    potential: Potential | None = None
    gated_policy: bool = False
    potential_anchor: str = "origin"

    def __post_init__(self):
        if self.policy_kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.policy_kind!r}")
        if self.policy_kind != EXECUTION and self.potential is None:
            raise ValueError(f"term {self.name!r} needs a potential")
        if self.task_map is not None and self.task_map.out_dim != self.energy.dim:
            raise ValueError(
                f"term {self.name!r}: map output dim {self.task_map.out_dim} "
                f"!= energy dim {self.energy.dim}"
            )

    @property
    def dim(self) -> int:
        return self.energy.dim

    @property
    def is_geometric(self) -> bool:
        return self.policy_kind == GEOMETRIC

    def policy(self, x, xdot) -> np.ndarray:
        x = as_vector(x)
        xdot = as_vector(xdot)
        if self.policy_kind == GEOMETRIC:
            gate = velocity_gate(xdot) if self.gated_policy else 1.0
            if gate == 0.0:
                return np.zeros_like(x)
            return gate * lift_hd2(-self.potential.gradient(x), x, xdot)
        if self.policy_kind == FORCING:
            return -self.potential.gradient(x)
        raise ValueError("execution energy terms have no policy")

    def forcing_gradient(self, x) -> np.ndarray:
        x = as_vector(x)
        return self.energy.position_metric(x) @ self.potential.gradient(x)

    def potential_value(self, x) -> float:
        """Forcing potential whose gradient is :meth:`forcing_gradient`."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.potential_anchor == "infinity":
            if x.shape != (1,):
                raise ValueError("an anchor at infinity needs a 1-D term")
            integrand = lambda s: -float(self.forcing_gradient([s])[0])
            value, _ = quad(integrand, float(x[0]), np.inf, epsabs=1e-13, epsrel=1e-12, limit=200)
            return float(value)
        if not np.any(x):
            return 0.0
        integrand = lambda t: float(self.forcing_gradient(t * x) @ x)
        value, _ = quad(integrand, 0.0, 1.0, epsabs=1e-13, epsrel=1e-12, limit=200)
        return float(value)

    def evaluate(self, x, xdot) -> TermEval:
        energy = self.energy.evaluate(x, xdot)
        if self.policy_kind == GEOMETRIC:
            return TermEval(energy, self.policy(x, xdot), None)
        if self.policy_kind == FORCING:
            return TermEval(energy, self.policy(x, xdot), self.forcing_gradient(x))
        return TermEval(energy, None, None)

    def energy_spec(self, x, xdot) -> SpecValue:
        return self.energy.evaluate(x, xdot).spec

    def policy_spec(self, x, xdot) -> SpecValue:
        """Natural form ``(M_e, -M_e pi)`` of the geometric policy."""
        ev = self.evaluate(x, xdot)
        return SpecValue(ev.energy.tensor, -ev.energy.tensor @ ev.acceleration)


def attractor_term(
    target: Sequence[float],
    k: float,
    alpha_psi: float,
    mbar: float,
    munder: float,
    alpha_m: float,
    variant: str = "rbf_metric",
    radius: float = 0.5,
    switch_sign: float = -1.0,
    policy_kind: str = FORCING,
    name: str = "attractor",
) -> FabricTerm:
    """Soft-norm attractor to ``target`` with an isotropic priority metric.

    ``rbf_metric`` peaks at the target with a Gaussian bump; ``tanh_switch_metric``
    transitions at ``radius`` (``switch_sign = -1`` gives high priority close in).
    """
    if not mbar > munder > 0:
        raise ValueError("attractor masses need mbar > munder > 0")
    if min(k, alpha_psi, alpha_m) <= 0:
        raise ValueError("attractor gains must be positive")
    target = np.atleast_1d(np.asarray(target, dtype=float))
    if variant == "rbf_metric":
        profile = RBFProfile(mbar, munder, alpha_m)
    elif variant == "tanh_switch_metric":
        profile = TanhSwitchProfile(mbar, munder, alpha_m, radius, switch_sign)
    else:
        raise ValueError(f"unknown attractor metric variant {variant!r}")
    return FabricTerm(
        name=name,
        task_map=OffsetMap(target),
        energy=IsotropicEnergy(target.shape[0], profile, profile.grad),
        policy_kind=policy_kind,
        potential=SoftNormAttractor(k, alpha_psi),
    )


def obstacle_term(
    origin: Sequence[float],
    radius: float,
    k_b: float,
    alpha_b: float,
    metric_variant: str = "velocity_gated",
    policy_kind: str = GEOMETRIC,
    c: float = 2.0,
    p: float = 8.0,
    name: str = "obstacle",
) -> FabricTerm:
    """Circle repulsion over the normalized clearance map, metric ``k_b / x^2``."""
    if radius <= 0 or k_b <= 0 or alpha_b <= 0:
        raise ValueError("obstacle radius and gains must be positive")
    if metric_variant not in ("position_only", "velocity_gated"):
        raise ValueError(f"unknown obstacle metric variant {metric_variant!r}")
    return FabricTerm(
        name=name,
        task_map=CircleDistanceMap(origin, radius),
        energy=GatedBarrierEnergy(k_b, power=2.0, gated=metric_variant == "velocity_gated"),
        policy_kind=policy_kind,
        potential=BarrierInversePower(alpha_b, c, p),
        gated_policy=True,
        potential_anchor="infinity",
    )


def joint_limit_terms(
    lower: Sequence[float],
    upper: Sequence[float],
    lam: float,
    a1: float = 0.4,
    a2: float = 0.2,
    a3: float = 20.0,
    a4: float = 5.0,
    policy_kind: str = GEOMETRIC,
    name: str = "limit",
) -> list[FabricTerm]:
    """Two 1-D barrier terms per joint, metric ``s(xdot) lam / x``."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if lower.shape != upper.shape or np.any(lower >= upper):
        raise ValueError("joint limits need lower < upper for every joint")
    dim = lower.shape[0]
    potential = LimitPotential(a1, a2, a3, a4)
    terms = []
    for j in range(dim):
        for is_upper, limit in ((True, upper[j]), (False, lower[j])):
            terms.append(
                FabricTerm(
                    name=f"{name}_{'upper' if is_upper else 'lower'}_{j}",
                    task_map=JointLimitMap(dim, j, float(limit), is_upper),
                    energy=GatedBarrierEnergy(lam, power=1.0, gated=True),
                    policy_kind=policy_kind,
                    potential=potential,
                    gated_policy=True,
                    potential_anchor="infinity",
                )
            )
    return terms


def default_config_term(
    q0: Sequence[float],
    lambda_dc: float,
    k: float,
    alpha_psi: float,
    policy_kind: str = GEOMETRIC,
    name: str = "default_config",
) -> FabricTerm:
    """Pull toward a nominal configuration with constant metric ``lambda_dc I``."""
    if lambda_dc <= 0:
        raise ValueError("lambda_dc must be positive")
    q0 = np.atleast_1d(np.asarray(q0, dtype=float))
    return FabricTerm(
        name=name,
        task_map=OffsetMap(q0),
        energy=WeightedEuclideanEnergy(lambda_dc * np.eye(q0.shape[0])),
        policy_kind=policy_kind,
        potential=SoftNormAttractor(k, alpha_psi),
    )
