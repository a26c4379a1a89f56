"""Acceleration potentials and scalar metric profiles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..finsler import BarrierDomainError
from ..spec_algebra import as_vector
from .maps import TaskMap


class Potential:
    """Scalar potential on a task space with an analytic gradient."""

    family = "abstract"

    def value(self, x) -> float:
        raise NotImplementedError

    def gradient(self, x) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class SoftNormAttractor(Potential):
    """``k (|x| + log(1 + exp(-2 a |x|)) / a)``: a norm smoothed at the origin.

    Its gradient is ``k tanh(a |x|) x/|x|``, so the pull saturates at ``k``.
    """

    k: float
    alpha: float
    family = "soft_norm_attractor"

    def value(self, x):
        r = float(np.linalg.norm(x))
        return self.k * (r + np.logaddexp(0.0, -2.0 * self.alpha * r) / self.alpha)

    def gradient(self, x):
        x = as_vector(x)
        r = float(np.linalg.norm(x))
        if r == 0.0:
            return np.zeros_like(x)
        return self.k * np.tanh(self.alpha * r) * x / r

    def radial_derivative(self, r: float) -> float:
        return self.k * np.tanh(self.alpha * r)


def _positive_scalar(x, family: str) -> float:
    value = float(as_vector(x)[0])
    if value <= 0.0:
        raise BarrierDomainError(f"{family} evaluated at x = {value:.6g} <= 0", value=value)
    return value


@dataclass(frozen=True)
class BarrierInversePower(Potential):
    """``alpha_b / (c x^p)`` on ``x > 0``."""

    alpha_b: float
    c: float = 2.0
    p: float = 8.0
    family = "barrier_inverse_power"

    def value(self, x):
        v = _positive_scalar(x, self.family)
        return self.alpha_b / (self.c * v**self.p)

    def gradient(self, x):
        v = _positive_scalar(x, self.family)
        return np.array([-self.p * self.alpha_b / (self.c * v ** (self.p + 1.0))])


@dataclass(frozen=True)
class LimitPotential(Potential):
    """``a1 / x^2 + a2 log(exp(-a3 (x - a4)) + 1)`` on ``x > 0``."""

    a1: float = 0.4
    a2: float = 0.2
    a3: float = 20.0
    a4: float = 5.0
    family = "limit_potential"

    def value(self, x):
        v = _positive_scalar(x, self.family)
        return self.a1 / v**2 + self.a2 * np.logaddexp(0.0, -self.a3 * (v - self.a4))

    def gradient(self, x):
        v = _positive_scalar(x, self.family)
        return np.array([-2.0 * self.a1 / v**3 - self.a2 * self.a3 * expit(-self.a3 * (v - self.a4))])


@dataclass(frozen=True)
class PulledPotential(Potential):
    """A potential on the output of ``task_map``, viewed on its input space."""

    potential: Potential
    task_map: TaskMap
    family = "pulled"

    def value(self, x):
        return self.potential.value(self.task_map.position(x))

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        tme = self.task_map.evaluate(x, np.zeros_like(x))
        return tme.jacobian.T @ self.potential.gradient(tme.x)


# Scalar metric profiles g(x) for isotropic metrics g(x) I.


@dataclass(frozen=True)
class ConstantProfile:
    level: float

    def __call__(self, x):
        return self.level

    def grad(self, x):
        return np.zeros(np.shape(np.atleast_1d(x)))


@dataclass(frozen=True)
class RBFProfile:
    """``(mbar - munder) exp(-(alpha_m |x|)^2) + munder``."""

    mbar: float
    munder: float
    alpha_m: float

    def __call__(self, x):
        r2 = float(np.sum(np.square(x)))
        return (self.mbar - self.munder) * np.exp(-(self.alpha_m**2) * r2) + self.munder

    def grad(self, x):
        x = as_vector(x)
        bump = (self.mbar - self.munder) * np.exp(-(self.alpha_m**2) * float(x @ x))
        return -2.0 * self.alpha_m**2 * bump * x


def tanh_switch(value: float, rate: float, offset: float, sign: float = 1.0) -> float:
    """``0.5 (tanh(sign * rate * (value - offset)) + 1)``."""
    return 0.5 * (np.tanh(sign * rate * (value - offset)) + 1.0)


def tanh_switch_slope(value: float, rate: float, offset: float, sign: float = 1.0) -> float:
    t = np.tanh(sign * rate * (value - offset))
    return 0.5 * sign * rate * (1.0 - t * t)


@dataclass(frozen=True)
class TanhSwitchProfile:
    """``(mbar - munder) s(|x|) + munder`` with a tanh switch in the norm.

    ``sign = -1`` raises the priority close to the origin; ``+1`` far away.
    """

    mbar: float
    munder: float
    alpha_m: float
    radius: float
    sign: float = -1.0

    def __call__(self, x):
        r = float(np.linalg.norm(x))
        return (self.mbar - self.munder) * tanh_switch(r, self.alpha_m, self.radius, self.sign) + self.munder

    def grad(self, x):
        x = as_vector(x)
        r = float(np.linalg.norm(x))
        if r == 0.0:
            return np.zeros_like(x)
        slope = tanh_switch_slope(r, self.alpha_m, self.radius, self.sign)
        return (self.mbar - self.munder) * slope * x / r
