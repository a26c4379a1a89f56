from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from geofab.finsler import EuclideanEnergy
from geofab.geometry import EXECUTION, CircleDistanceMap, FabricTerm, attractor_term, default_config_term, obstacle_term
from geofab.runtime import (
    FabricSystem,
    IntegratorConfig,
    SettleStop,
    detect_convergence,
    read_csv,
    rollout,
    step,
)
from geofab.speed_control import BasicDamping, Gates, SpeedControlParams
from geofab.tree import TransformTree


def particle_tree(obstacle=True, target=(-4.0, 0.0)):
    tree = TransformTree(2)
    tree.attach("root", attractor_term(target, 10.0, 10.0, 2.0, 0.2, 0.75), goal=True)
    if obstacle:
        tree.attach("root", obstacle_term([0.0, 0.0], 1.0, 20.0, 1.0))
    tree.attach("root", default_config_term([0.0, 0.0], 0.1, 1.0, 10.0))
    tree.attach("root", FabricTerm("execution", None, EuclideanEnergy(2), EXECUTION))
    return tree


def test_euler_constant_velocity():
    q, qdot = step(lambda a, b: np.zeros(2), [0.0, 0.0], [1.0, 0.0], 0.001, "euler")
    np.testing.assert_allclose(q, [0.001, 0.0])
    np.testing.assert_array_equal(qdot, [1.0, 0.0])


def test_rk4_harmonic_oscillator():
    q, qdot = np.array([1.0]), np.array([0.0])
    err = 0.0
    for i in range(1, 1001):
        q, qdot = step(lambda a, b: -a, q, qdot, 0.01, "rk4")
        t = i * 0.01
        err = max(err, abs(q[0] - np.cos(t)), abs(qdot[0] + np.sin(t)))
    assert err <= 1e-6


def test_rk4_exact_for_constant_acceleration():
    acc = np.array([0.7, -1.3])
    q, qdot = np.array([0.1, 0.2]), np.array([1.0, 0.5])
    for _ in range(10):
        q, qdot = step(lambda a, b: acc, q, qdot, 0.1, "rk4")
    np.testing.assert_allclose(q, [0.1, 0.2] + np.array([1.0, 0.5]) * 1.0 + 0.5 * acc, rtol=1e-14, atol=1e-14)
    np.testing.assert_allclose(qdot, np.array([1.0, 0.5]) + acc, rtol=1e-14)


def test_step_rejects_unknown_method():
    with pytest.raises(ValueError):
        step(lambda a, b: a, [0.0], [0.0], 0.1, "midpoint")


def test_integrator_config_validation():
    assert IntegratorConfig("rk4", 0.01, 15.0).n_steps == 1500
    with pytest.raises(ValueError):
        IntegratorConfig("rk4", 0.0, 1.0)
    with pytest.raises(ValueError):
        IntegratorConfig("rk4", 0.1, 0.01)
    with pytest.raises(ValueError):
        IntegratorConfig("leapfrog", 0.1, 1.0)


def test_rollout_without_terms_is_stationary():
    tree = TransformTree(2)
    system = FabricSystem(tree, BasicDamping(1.0), record_potential=False)
    traj = rollout(system, [0.3, 0.4], [0.0, 0.0], IntegratorConfig("rk4", 0.01, 0.5))
    assert traj.termination == "duration_reached"
    assert np.all(traj.q == [0.3, 0.4])
    np.testing.assert_array_equal(traj.final_q, [0.3, 0.4])


def test_rollout_records_barrier_violation():
    tree = TransformTree(2)
    tree.add_node("root", CircleDistanceMap([0.0, 0.0], 1.0), "clearance")
    system = FabricSystem(tree, BasicDamping(0.0), record_potential=False)
    traj = rollout(system, [2.0, 0.0], [-1.0, 0.0], IntegratorConfig("euler", 0.1, 3.0))
    assert traj.termination == "barrier_violation"
    assert traj.failure["node"] == "clearance"
    # x reaches 1.0 (clearance 0) after ten steps
    assert traj.failure["step"] == traj.n_steps == 10


def test_rollout_records_divergence():
    class Blowup(FabricSystem):
        def acceleration(self, q, qdot, gates=None):
            return np.array([1e12])

        def inspect(self, q, qdot, gates=None):
            return replace(super().inspect(q, qdot, gates), qdd=np.array([1e12]))

    system = Blowup(TransformTree(1), BasicDamping(0.0), record_potential=False)
    traj = rollout(system, [0.0], [0.0], IntegratorConfig("euler", 0.1, 5.0))
    assert traj.termination == "divergence"
    assert traj.failure["step"] == 0


def test_recording_is_lossless():
    system = FabricSystem(particle_tree(), SpeedControlParams(boost_gain=2.0, exec_energy_target=2.0),
                          record_potential=False)
    traj = rollout(system, [4.0, 0.5], [0.0, 0.0], IntegratorConfig("rk4", 0.01, 2.0))
    for i in range(0, traj.n_steps, 17):
        again = system.inspect(traj.q[i], traj.qdot[i]).qdd
        np.testing.assert_allclose(again, traj.qdd[i], rtol=1e-12, atol=1e-12)


def test_rk4_fourth_order_on_smooth_scenario():
    system = FabricSystem(particle_tree(obstacle=False), BasicDamping(2.0), record_potential=False)
    finals = []
    for dt in (0.04, 0.02, 0.01):
        traj = rollout(system, [4.0, 1.0], [0.0, 0.5], IntegratorConfig("rk4", dt, 2.0))
        finals.append(np.concatenate([traj.final_q, traj.final_qdot]))
    ratio = np.linalg.norm(finals[0] - finals[1]) / np.linalg.norm(finals[1] - finals[2])
    # observed order log2(ratio) close to four
    assert 3.5 <= np.log2(ratio) <= 4.5


def test_path_potential_tracks_exact_potential():
    cfg = IntegratorConfig("rk4", 0.01, 3.0)
    exact = rollout(FabricSystem(particle_tree(), BasicDamping(2.0), record_potential="exact"),
                    [4.0, 0.5], [0.0, 0.0], cfg)
    path = rollout(FabricSystem(particle_tree(), BasicDamping(2.0), record_potential="path"),
                   [4.0, 0.5], [0.0, 0.0], cfg)
    np.testing.assert_array_equal(exact.q, path.q)
    assert path.potential[0] == exact.potential[0]
    np.testing.assert_allclose(path.potential, exact.potential, rtol=1e-3, atol=1e-3)


def test_potential_mode_validation():
    with pytest.raises(ValueError):
        FabricSystem(TransformTree(2), BasicDamping(1.0), record_potential="sometimes")


def test_csv_round_trip(tmp_path):
    system = FabricSystem(particle_tree(), SpeedControlParams(), record_potential="path")
    traj = rollout(system, [4.0, 0.5], [0.0, 0.0], IntegratorConfig("rk4", 0.01, 0.5))
    path = tmp_path / "out" / "traj.csv"
    traj.write_csv(path)
    data = read_csv(path)
    assert list(data) == traj.csv_columns()
    np.testing.assert_array_equal(data["q0"], traj.q[:, 0])
    np.testing.assert_array_equal(data["H_total"], traj.H_total)
    np.testing.assert_array_equal(data["alpha_reg"], traj.traces["alpha_reg"])
    for name in ("L_e", "L_ex", "s_beta", "eta", "beta_reg", "alpha_boost", "min_barrier_dist", "goal_dist"):
        assert name in data


def test_detect_convergence_at_goal():
    tree = TransformTree(2)
    tree.attach("root", attractor_term([1.0, 1.0], 1.0, 1.0, 2.0, 0.2, 0.75), goal=True)
    system = FabricSystem(tree, BasicDamping(1.0), record_potential=False)
    traj = rollout(system, [1.0, 1.0], [0.0, 0.0], IntegratorConfig("rk4", 0.01, 1.0))
    report = detect_convergence(traj, window=50)
    assert report.converged and report.first_step == 0


def test_detect_convergence_fly_by():
    tree = TransformTree(2)
    tree.attach("root", FabricTerm("execution", None, EuclideanEnergy(2), EXECUTION))
    tree.goal_node = "root"
    system = FabricSystem(tree, BasicDamping(0.0), record_potential=False)
    traj = rollout(system, [-1.0, 0.0], [1.0, 0.0], IntegratorConfig("rk4", 0.01, 2.0))
    report = detect_convergence(traj)
    assert not report.converged and report.first_step is None


def test_settle_stop_ends_rollout():
    tree = TransformTree(2)
    tree.attach("root", attractor_term([0.0, 0.0], 10.0, 10.0, 2.0, 0.2, 0.75), goal=True)
    system = FabricSystem(tree, BasicDamping(4.0), record_potential=False)
    stop = SettleStop(pos_tol=1e-2, vel_tol=1e-3, window=20)
    traj = rollout(system, [1.0, 0.0], [0.0, 0.0], IntegratorConfig("rk4", 0.01, 30.0), stop_when=stop)
    assert traj.termination == "converged"
    assert traj.n_steps < 3000
    assert detect_convergence(traj, window=20).converged


def test_speed_control_dissipation_within_each_step():
    # gates are held over a step, so compare each step's energy change with the
    # trapezoid rule of -beta_total xdot^T M xdot under that step's gates; no
    # obstacle, whose velocity-gated policy jumps within a step
    system = FabricSystem(particle_tree(obstacle=False), SpeedControlParams(B_gain=10.0, radius=1.5, boost_gain=5.0,
                                                              exec_energy_target=2.0), record_potential="exact")
    traj = rollout(system, [4.0, 0.75], [0.0, 0.0], IntegratorConfig("rk4", 0.005, 2.0))
    h = traj.L_e + traj.potential

    def rate(q, qdot, gates):
        info = system.inspect(q, qdot, gates)
        return -(info.trace.alpha_Le - info.trace.alpha_reg) * 2.0 * info.fabric_energy

    errs, rates = [], []
    # near rest the boost rate grows like 1/|xdot| and the trapezoid rule cannot follow it
    for i in np.flatnonzero(traj.speed[:-1] >= 0.4):
        gates = Gates(traj.traces["s_beta"][i], traj.traces["eta"][i])
        avg = 0.5 * (rate(traj.q[i], traj.qdot[i], gates) + rate(traj.q[i + 1], traj.qdot[i + 1], gates))
        errs.append(abs((h[i + 1] - h[i]) / traj.dt - avg))
        rates.append(abs(avg))
    errs, rates = np.array(errs), np.array(rates)
    assert np.max(errs / np.maximum(rates, 1e-2 * rates.max())) <= 1e-3
