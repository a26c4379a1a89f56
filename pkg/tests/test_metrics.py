from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from geofab.metrics import (
    MetricsReport,
    PairRecord,
    PathSample,
    RolloutRecord,
    arc_length_difference,
    compare_variants,
    path_difference,
)

path_pts = arrays(float, (12, 2), elements=st.floats(-10, 10))


def line(offset, n=200, length=5.0):
    x = np.linspace(0.0, length, n)
    return np.column_stack([x, np.full(n, offset)])


def test_self_difference_is_zero(rng):
    pts = rng.normal(size=(50, 3))
    assert arc_length_difference(pts, rng.uniform(0.1, 2.0, 50), pts) == 0.0


def test_parallel_lines_offset():
    for d in (0.1, 0.5, 2.0):
        p, q = line(0.0), line(d)
        assert abs(arc_length_difference(p, np.ones(len(p)), q) - d) <= 1e-6


def test_at_rest_uses_largest_distance():
    pts = np.array([[0.0, 0.0], [0.0, 3.0]])
    assert arc_length_difference(pts, np.zeros(2), np.array([[0.0, 0.0]])) == 3.0


def test_speed_weighting():
    pts = np.array([[0.0, 1.0], [0.0, 2.0]])
    ref = np.array([[0.0, 0.0]])
    assert arc_length_difference(pts, np.array([3.0, 1.0]), ref) == pytest.approx(1.25)


def test_input_checks():
    with pytest.raises(ValueError):
        arc_length_difference(np.zeros((0, 2)), np.zeros(0), np.zeros((1, 2)))
    with pytest.raises(ValueError):
        arc_length_difference(np.zeros((2, 2)), np.zeros(3), np.zeros((1, 2)))
    with pytest.raises(ValueError):
        arc_length_difference(np.zeros((2, 2)), np.zeros(2), np.zeros((1, 3)))


@given(path_pts, path_pts, arrays(float, 12, elements=st.floats(0, 5)))
def test_non_negative(p, q, speeds):
    assert arc_length_difference(p, speeds, q) >= 0.0


@given(path_pts, path_pts, arrays(float, 2, elements=st.floats(-5, 5)))
def test_translation_invariant(p, q, shift):
    speeds = np.linspace(0.5, 1.5, len(p))
    a = arc_length_difference(p, speeds, q)
    b = arc_length_difference(p + shift, speeds, q + shift)
    assert b == pytest.approx(a, rel=1e-9, abs=1e-9)


def test_path_difference_includes_final_point():
    p = PathSample(np.array([[0.0, 0.0]]), np.array([1.0]), np.array([0.0, 1.0]))
    q = PathSample(np.array([[5.0, 5.0]]), np.array([1.0]), np.array([0.0, 0.0]))
    assert path_difference(p, q) == 0.0


def _record(rid, style, converged, dist, vd=2.0, index=0):
    return RolloutRecord(
        id=rid, variant=rid.split("/")[0], style=style, controller="sc", v_d=vd, obstacle_metric=None,
        state_index=index, q0=[0.0, 0.0], qdot0=[0.0, 0.0], termination="duration_reached", failure=None,
        converged=converged, first_converged_step=0 if converged else None, final_goal_distance=dist,
        final_speed=0.0, min_barrier=float("inf"), min_obstacle=None, n_steps=10, wall_time=0.1,
        self_path_difference=0.0,
    )


def _report():
    report = MetricsReport("synthetic")
    report.rollouts = [
        _record("geometric-vd2/state00", "geometric", True, 1e-4),
        _record("lagrangian-vd2/state00", "lagrangian", False, 0.5),
    ]
    report.pairs = [
        PairRecord("geometric", "geometric-sc", 0, "a", "b", "config", 0.1, 0.3),
        PairRecord("lagrangian", "lagrangian-sc", 0, "c", "d", "config", 1.0, 2.0),
    ]
    report.summary = compare_variants(report)
    return report


def test_compare_variants_flags():
    summary = _report().summary
    assert summary["geometric_converges_lagrangian_does_not"] is True
    assert summary["geometric_more_path_consistent"] is True
    assert summary["styles"]["geometric"]["mean_cross_speed_L"] == pytest.approx(0.2)
    assert summary["paired"][0]["distance_ratio"] == pytest.approx(5000.0)


def test_report_json_round_trip():
    report = _report()
    text = report.to_json()
    data = json.loads(text)
    # non-finite floats become null so the file is strict JSON
    assert data["rollouts"][0]["min_barrier"] is None
    again = MetricsReport.from_dict(data)
    assert again.scenario == "synthetic"
    assert [r.id for r in again.rollouts] == [r.id for r in report.rollouts]
    assert again.pairs == report.pairs


def test_failures_lists_violations():
    report = _report()
    report.rollouts[1].termination = "barrier_violation"
    assert [r.id for r in report.failures] == ["lagrangian-vd2/state00"]
