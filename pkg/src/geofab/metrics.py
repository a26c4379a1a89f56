"""Path-difference metric and run reports."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree


def arc_length_difference(points, speeds, reference) -> float:
    """Speed-weighted mean distance from ``points`` to the samples of ``reference``.

    ``L = sum_t c(p_t) |v_t| / sum_t |v_t|`` with ``c`` the distance to the
    nearest reference sample. A uniform time step cancels from the ratio.
    With zero total speed (a path at rest) ``L`` is the largest ``c``.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    reference = np.atleast_2d(np.asarray(reference, dtype=float))
    speeds = np.asarray(speeds, dtype=float)
    if points.shape[0] == 0 or reference.shape[0] == 0:
        raise ValueError("path difference needs non-empty paths")
    if speeds.shape != (points.shape[0],):
        raise ValueError("one speed per path sample is required")
    if points.shape[1] != reference.shape[1]:
        raise ValueError("paths live in different spaces")
    c, _ = cKDTree(reference).query(points)
    total = float(speeds.sum())
    if total <= 0.0:
        return float(c.max())
    return float((c * speeds).sum() / total)


@dataclass(frozen=True)
class PathSample:
    """A recorded path in one space: samples, their speeds and the final point."""

    points: np.ndarray
    speeds: np.ndarray
    final: np.ndarray

    @property
    def reference(self) -> np.ndarray:
        return np.vstack([self.points, self.final[None, :]])


def path_sample(traj, space: str = "config", arm=None) -> PathSample:
    """Path of a trajectory in configuration or end-effector space."""
    if space == "config":
        return PathSample(traj.q, np.linalg.norm(traj.qdot, axis=1), np.asarray(traj.final_q))
    if space != "end_effector":
        raise ValueError(f"unknown path space {space!r}")
    if arm is None:
        raise ValueError("end-effector paths need the arm")
    return ee_path(arm, traj.q, traj.qdot, traj.final_q)


def ee_path(arm, q, qdot, final_q) -> PathSample:
    pts, spd = [], []
    for qi, vi in zip(q, qdot):
        tme = arm.jacobian(qi, vi)
        pts.append(tme.x)
        spd.append(float(np.linalg.norm(tme.jacobian @ vi)))
    pts = np.array(pts).reshape(-1, 2)
    return PathSample(pts, np.array(spd), arm.fk(final_q))


def path_difference(P, Q, space: str = "config", arm=None) -> float:
    """``L(P, Q)``: how far path ``P`` strays from path ``Q``, weighted by arc length.

    ``P`` and ``Q`` are trajectories or :class:`PathSample` values. The metric
    is asymmetric; compare both orders when a symmetric view is needed.
    """
    p = P if isinstance(P, PathSample) else path_sample(P, space, arm)
    q = Q if isinstance(Q, PathSample) else path_sample(Q, space, arm)
    return arc_length_difference(p.points, p.speeds, q.reference)


@dataclass
class RolloutRecord:
    id: str
    variant: str
    style: str
    controller: str
    v_d: float | None
    obstacle_metric: str | None
    state_index: int
    q0: list
    qdot0: list
    termination: str
    failure: dict | None
    converged: bool
    first_converged_step: int | None
    final_goal_distance: float
    final_speed: float
    min_barrier: float
    min_obstacle: float | None
    n_steps: int
    wall_time: float
    self_path_difference: float
    csv: str | None = None


@dataclass
class PairRecord:
    style: str
    group: str
    state_index: int
    a: str
    b: str
    space: str
    L_ab: float
    L_ba: float


@dataclass
class MetricsReport:
    scenario: str
    rollouts: list = field(default_factory=list)
    pairs: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def failures(self) -> list:
        return [r for r in self.rollouts if r.termination in ("barrier_violation", "divergence")]

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "rollouts": [asdict(r) for r in self.rollouts],
            "pairs": [asdict(p) for p in self.pairs],
            "summary": self.summary,
        }

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True, allow_nan=False)

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsReport":
        return cls(
            scenario=data["scenario"],
            rollouts=[RolloutRecord(**r) for r in data["rollouts"]],
            pairs=[PairRecord(**p) for p in data["pairs"]],
            summary=data.get("summary", {}),
        )


def _jsonable(value):
    """Replace non-finite floats by None so the document is strict JSON."""
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (float, np.floating)):
        return float(value) if np.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def _mean(values):
    values = [v for v in values if v is not None and np.isfinite(v)]
    return float(np.mean(values)) if values else None


def compare_variants(report: MetricsReport) -> dict:
    """Per-style and per-variant tables plus the geometric vs Lagrangian verdict."""
    styles: dict = {}
    for r in report.rollouts:
        styles.setdefault(r.style, []).append(r)
    per_style = {}
    for style, rows in styles.items():
        pair_ls = [0.5 * (p.L_ab + p.L_ba) for p in report.pairs if p.style == style]
        per_style[style] = {
            "rollouts": len(rows),
            "converged": sum(r.converged for r in rows),
            "all_converged": all(r.converged for r in rows),
            "none_converged": not any(r.converged for r in rows),
            "barrier_violations": sum(r.termination == "barrier_violation" for r in rows),
            "divergences": sum(r.termination == "divergence" for r in rows),
            "mean_final_goal_distance": _mean([r.final_goal_distance for r in rows]),
            "max_final_goal_distance": max(r.final_goal_distance for r in rows),
            "cross_speed_pairs": len(pair_ls),
            "mean_cross_speed_L": _mean(pair_ls),
        }
    variants: dict = {}
    for r in report.rollouts:
        v = variants.setdefault(
            r.variant, {"style": r.style, "rollouts": 0, "converged": 0, "final_goal_distances": []}
        )
        v["rollouts"] += 1
        v["converged"] += int(r.converged)
        v["final_goal_distances"].append(r.final_goal_distance)
    paired = []
    geo = {(r.controller, r.v_d, r.obstacle_metric, r.state_index): r for r in styles.get("geometric", [])}
    for r in styles.get("lagrangian", []):
        g = geo.get((r.controller, r.v_d, r.obstacle_metric, r.state_index))
        if g is None:
            continue
        ratio = r.final_goal_distance / g.final_goal_distance if g.final_goal_distance > 0 else None
        paired.append(
            {
                "geometric": g.id,
                "lagrangian": r.id,
                "geometric_converged": g.converged,
                "lagrangian_converged": r.converged,
                "geometric_final_distance": g.final_goal_distance,
                "lagrangian_final_distance": r.final_goal_distance,
                "distance_ratio": ratio,
            }
        )
    summary = {"styles": per_style, "variants": variants, "paired": paired}
    if "geometric" in per_style and "lagrangian" in per_style:
        summary["geometric_converges_lagrangian_does_not"] = bool(
            per_style["geometric"]["all_converged"] and per_style["lagrangian"]["none_converged"]
        )
        gl, ll = per_style["geometric"]["mean_cross_speed_L"], per_style["lagrangian"]["mean_cross_speed_L"]
        if gl is not None and ll is not None:
            summary["geometric_more_path_consistent"] = bool(gl < ll)
    return summary
