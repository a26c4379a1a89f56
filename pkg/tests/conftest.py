from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "repo", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")

REPO = Path(__file__).resolve().parents[1]
SCENARIOS = REPO / "scenarios"


def fd_jacobian(fn, x, h=1e-6):
    """Central finite-difference Jacobian of ``fn`` at ``x``."""
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(fn(x))
    jac = np.zeros((f0.shape[0], x.shape[0]))
    for i in range(x.shape[0]):
        e = np.zeros_like(x)
        e[i] = h
        jac[:, i] = (np.atleast_1d(fn(x + e)) - np.atleast_1d(fn(x - e))) / (2 * h)
    return jac


def fd_gradient(fn, x, h=1e-6):
    return fd_jacobian(lambda y: np.array([fn(y)]), x, h)[0]


def fd_curvature(fn, q, qdot, h=1e-4):
    """``Jdot qdot`` as the second directional difference of ``fn`` along ``qdot``."""
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    return (np.atleast_1d(fn(q + h * qdot)) - 2 * np.atleast_1d(fn(q)) + np.atleast_1d(fn(q - h * qdot))) / h**2


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(module.RESULTS, key=lambda s: int(s.split()[0][1:])):
        terminalreporter.write_line(line)
