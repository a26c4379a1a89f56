"""Energization, the zero-work force and the execution-energy speed regulator."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spec_algebra import SpecValue

REST_TOL = 1e-12


def energization_alpha(metric, force, pi, xdot, tol: float = REST_TOL) -> float:
    """Coefficient ``alpha`` making ``xdd = pi + alpha xdot`` conserve the energy.

    The energy with tensor ``metric`` and curvature force ``force`` is
    conserved when ``xdot^T (M (pi + alpha xdot) + f) = 0``. Returns 0 when
    ``xdot^T M xdot <= tol``.
    """
    xdot = np.asarray(xdot, dtype=float)
    metric = np.asarray(metric, dtype=float)
    denom = float(xdot @ metric @ xdot)
    if denom <= tol:
        return 0.0
    return -float(xdot @ (metric @ np.asarray(pi, dtype=float) + np.asarray(force, dtype=float))) / denom


def energize(metric, force, pi, xdot, tol: float = REST_TOL) -> np.ndarray:
    return np.asarray(pi, dtype=float) + energization_alpha(metric, force, pi, xdot, tol) * np.asarray(
        xdot, dtype=float
    )


def zero_work_force(metric, force, pi, xdot, tol: float = REST_TOL) -> np.ndarray:
    """``(I - M xdot xdot^T / (xdot^T M xdot)) (-M pi - f)``, orthogonal to ``xdot``."""
    xdot = np.asarray(xdot, dtype=float)
    metric = np.asarray(metric, dtype=float)
    raw = -metric @ np.asarray(pi, dtype=float) - np.asarray(force, dtype=float)
    denom = float(xdot @ metric @ xdot)
    if denom <= tol:
        return raw
    mx = metric @ xdot
    return raw - mx * float(xdot @ raw) / denom


@dataclass(frozen=True)
class SpeedControlParams:
    """Gains of the execution-energy speed regulator.

    ``B_base`` is the constant damping floor and ``B_gain`` the extra damping
    switched on near the goal by a tanh gate of rate ``alpha_beta`` at radius
    ``radius``. ``eta`` lets potential energy through while the execution
    energy is below ``exec_energy_target``; with ``eta_mode = "fixed"`` it is
    pinned to ``eta_value``.
    """

    B_base: float = 0.01
    B_gain: float = 6.0
    alpha_beta: float = 10.0
    radius: float = 0.5
    alpha_eta: float = 20.0
    alpha_shift: float = 0.0
    exec_energy_target: float = 0.5
    boost_gain: float = 0.0
    epsilon: float = 1e-6
    eta_mode: str = "gated"
    eta_value: float = 0.5

    def __post_init__(self):
        if not self.B_base > 0:
            raise ValueError("B_base must be positive")
        if not self.B_gain > self.B_base:
            raise ValueError("B_gain must exceed B_base")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.boost_gain < 0:
            raise ValueError("boost_gain must be non-negative")
        if self.eta_mode not in ("gated", "fixed"):
            raise ValueError(f"unknown eta_mode {self.eta_mode!r}")
        if self.eta_mode == "fixed" and not 0.0 <= self.eta_value <= 1.0:
            raise ValueError("fixed eta must lie in [0, 1]")


@dataclass(frozen=True)
class BasicDamping:
    """Constant damper ``-beta xdot`` on the system.

    With ``energized`` the geometry is first energized by the fabric energy,
    so ``beta`` is the full dissipation rate; otherwise the plain
    ``pi0 + a_psi - beta xdot`` system is used.
    """

    beta: float
    energized: bool = True

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be non-negative")


@dataclass(frozen=True)
class RegulatorTrace:
    alpha_Le: float
    alpha_ex0: float
    alpha_exPsi: float
    alpha_ex_eta: float
    s_beta: float
    eta: float
    beta_reg: float
    alpha_boost: float
    alpha_reg: float

    @property
    def beta_total(self) -> float:
        """Net damping rate relative to the energized system."""
        return self.alpha_Le - self.alpha_reg


@dataclass(frozen=True)
class Gates:
    s_beta: float
    eta: float


def damping_gate(offset_norm: float, alpha_beta: float, radius: float) -> float:
    """``0.5 (tanh(-alpha_beta (|x| - r)) + 1)``: 1 at the goal, 0 far away."""
    return 0.5 * (math.tanh(-alpha_beta * (offset_norm - radius)) + 1.0)


def eta_gate(exec_energy: float, target: float, alpha_eta: float, alpha_shift: float) -> float:
    """``0.5 (tanh(-alpha_eta (L_ex - L_d) - alpha_shift) + 1)``: 1 when too slow."""
    return 0.5 * (math.tanh(-alpha_eta * (exec_energy - target) - alpha_shift) + 1.0)


def compute_gates(x_goal_offset, exec_spec: SpecValue, xdot, params: SpeedControlParams) -> Gates:
    xdot = np.asarray(xdot, dtype=float)
    offset = 0.0 if x_goal_offset is None else float(np.linalg.norm(x_goal_offset))
    s_beta = damping_gate(offset, params.alpha_beta, params.radius)
    if params.eta_mode == "fixed":
        return Gates(s_beta, float(params.eta_value))
    l_ex = 0.5 * float(xdot @ exec_spec.metric @ xdot)
    return Gates(s_beta, eta_gate(l_ex, params.exec_energy_target, params.alpha_eta, params.alpha_shift))


def regulate(
    metric,
    pi0,
    a_psi,
    fabric: SpecValue,
    execution: SpecValue,
    x_goal_offset,
    xdot,
    params: SpeedControlParams,
    gates: Gates | None = None,
):
    """Speed-regulated root acceleration ``a_psi + pi0 + alpha_reg xdot``.

    ``gates`` may be supplied to hold ``s_beta`` and ``eta`` fixed (e.g. over
    the stages of one integration step); otherwise they are computed here.
    Returns ``(qdd, RegulatorTrace)``.
    """
    xdot = np.asarray(xdot, dtype=float)
    pi0 = np.asarray(pi0, dtype=float)
    a_psi = np.asarray(a_psi, dtype=float)
    if gates is None:
        gates = compute_gates(x_goal_offset, execution, xdot, params)
    alpha_le = energization_alpha(fabric.metric, fabric.force, pi0, xdot)
    alpha_ex0 = energization_alpha(execution.metric, execution.force, pi0, xdot)
    alpha_ex_psi = energization_alpha(execution.metric, execution.force, pi0 + a_psi, xdot)
    alpha_ex_eta = gates.eta * alpha_ex0 + (1.0 - gates.eta) * alpha_ex_psi
    beta_reg = gates.s_beta * params.B_gain + params.B_base + max(0.0, alpha_ex_eta - alpha_le)
    speed = float(np.linalg.norm(xdot))
    alpha_boost = params.boost_gain * gates.eta * (1.0 - gates.s_beta) / (speed + params.epsilon)
    alpha_reg = alpha_ex_eta - beta_reg + alpha_boost
    trace = RegulatorTrace(
        alpha_Le=alpha_le,
        alpha_ex0=alpha_ex0,
        alpha_exPsi=alpha_ex_psi,
        alpha_ex_eta=alpha_ex_eta,
        s_beta=gates.s_beta,
        eta=gates.eta,
        beta_reg=beta_reg,
        alpha_boost=alpha_boost,
        alpha_reg=alpha_reg,
    )
    return a_psi + pi0 + alpha_reg * xdot, trace


def basic_damping(metric, pi0, a_psi, beta: float, xdot, fabric: SpecValue | None = None):
    """Damped system ``pi0 + alpha_Le xdot + a_psi - beta xdot``.

    Without ``fabric`` the geometry is not energized (``alpha_Le = 0``).
    Returns ``(qdd, RegulatorTrace)`` with the gate fields set to NaN.
    """
    if beta < 0:
        raise ValueError("beta must be non-negative")
    xdot = np.asarray(xdot, dtype=float)
    pi0 = np.asarray(pi0, dtype=float)
    alpha_le = 0.0 if fabric is None else energization_alpha(fabric.metric, fabric.force, pi0, xdot)
    alpha_reg = alpha_le - beta
    nan = float("nan")
    trace = RegulatorTrace(alpha_le, nan, nan, nan, nan, nan, float(beta), 0.0, alpha_reg)
    return pi0 + np.asarray(a_psi, dtype=float) + alpha_reg * xdot, trace
