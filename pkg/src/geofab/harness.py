"""Scenario runner: variants, rollouts, artifacts and metrics."""

from __future__ import annotations

import itertools
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .finsler import EuclideanEnergy
from .geometry.cubby import CubbyScene, cubby_terms
from .geometry.maps import IdentityMap
from .geometry.terms import (
    EXECUTION,
    FORCING,
    STYLE_TO_KIND,
    FabricTerm,
    attractor_term,
    default_config_term,
    joint_limit_terms,
    obstacle_term,
)
from .kinematics import BodyPoint, BodyPointMap, PlanarArm
from .metrics import (
    MetricsReport,
    PairRecord,
    PathSample,
    RolloutRecord,
    arc_length_difference,
    compare_variants,
    ee_path,
)
from .runtime import FabricSystem, IntegratorConfig, SettleStop, detect_convergence, read_csv, rollout
from .scenario import ScenarioError, dump_scenario, initial_states, load_scenario
from .speed_control import BasicDamping, SpeedControlParams
from .spec_algebra import DimensionError
from .tree import TransformTree

CONFIG_ECHO = "config.resolved.yaml"
METRICS_FILE = "metrics.json"


@dataclass(frozen=True)
class Variant:
    name: str
    style: str
    controller: dict
    v_d: float | None
    obstacle_metric: str | None


def variants(cfg: dict) -> list[Variant]:
    """Cartesian product of fabric styles, controllers and sweep axes."""
    vds = cfg["sweep"]["v_d"] or [None]
    metrics = cfg["sweep"]["obstacle_metric"] or [None]
    many_controllers = len(cfg["controllers"]) > 1
    out = []
    for style, ctrl, vd, om in itertools.product(cfg["fabric_styles"], cfg["controllers"], vds, metrics):
        if vd is not None and ctrl["type"] != "speed_control":
            # speed sweeps do not apply to a fixed damper; keep one copy
            if vd != vds[0]:
                continue
            vd_used = None
        else:
            vd_used = vd
        parts = [style]
        if many_controllers:
            parts.append(ctrl["name"])
        if vd_used is not None:
            parts.append(f"vd{vd_used:g}")
        if om is not None:
            parts.append(om)
        out.append(Variant("-".join(parts), style, ctrl, vd_used, om))
    return out


def make_arm(robot: dict) -> PlanarArm | None:
    if robot["type"] != "planar_arm":
        return None
    return PlanarArm(tuple(robot["link_lengths"]), tuple(robot["base_pose"]))


def make_controller(ctrl: dict, v_d: float | None = None):
    if ctrl["type"] == "basic_damping":
        return BasicDamping(ctrl["beta"], ctrl["energized"])
    vd = ctrl["v_d"] if v_d is None else v_d
    return SpeedControlParams(
        B_base=ctrl["B_base"],
        B_gain=ctrl["B_gain"],
        alpha_beta=ctrl["alpha_beta"],
        radius=ctrl["radius"],
        alpha_eta=ctrl["alpha_eta"],
        alpha_shift=ctrl["alpha_shift"],
        exec_energy_target=0.5 * vd * vd,
        boost_gain=ctrl["boost_gain"],
        epsilon=ctrl["epsilon"],
        eta_mode=ctrl["eta_mode"],
        eta_value=ctrl["eta_value"],
    )


def build_tree(cfg: dict, style: str, obstacle_metric: str | None = None) -> TransformTree:
    """Transform tree for one fabric style.

    The objective is always a forcing term. Obstacle, limit and default
    configuration terms are geometries in the geometric style and forcing
    terms in the Lagrangian style.
    """
    robot = cfg["robot"]
    arm = make_arm(robot)
    dim = robot["dim"] if arm is None else arm.n_joints
    kind = STYLE_TO_KIND[style]
    tree = TransformTree(dim)
    for node in cfg["tree"]["nodes"]:
        edge = node["edge"]
        if edge["kind"] == "body_point":
            tmap = BodyPointMap(arm, BodyPoint(edge["link"], edge["offset"]))
        else:
            tmap = IdentityMap(tree.nodes[node["parent"]].dim)
        tree.add_node(node["parent"], tmap, node["id"])
    obj = cfg["objective"]
    tree.attach(
        obj["node"],
        attractor_term(
            obj["target"], obj["k"], obj["alpha_psi"], obj["mbar"], obj["munder"], obj["alpha_m"],
            variant=obj["metric_variant"], radius=obj["radius"], policy_kind=FORCING, name="attractor",
        ),
        goal=True,
    )
    for term in cfg["terms"]:
        if term["kind"] == "obstacle":
            variant = obstacle_metric or term["metric_variant"]
            for node in term["nodes"]:
                tree.attach(
                    node,
                    obstacle_term(
                        term["center"], term["radius"], term["k_b"], term["alpha_b"], variant, kind,
                        c=term["c"], p=term["p"], name=term["name"],
                    ),
                )
        elif term["kind"] == "joint_limits":
            limits = robot["joint_limits"]
            for t in joint_limit_terms(
                limits["lower"], limits["upper"], term["lam"], term["a1"], term["a2"], term["a3"],
                term["a4"], policy_kind=kind, name=term["name"],
            ):
                tree.attach("root", t)
        elif term["kind"] == "default_config":
            tree.attach(
                "root",
                default_config_term(
                    term["q0"], term["lambda_dc"], term["k"], term["alpha_psi"], kind, name=term["name"]
                ),
            )
        elif term["kind"] == "cubby":
            scene = CubbyScene(
                np.array(term["front_point"]), np.array(term["normal"]), term["width"], term["depth"],
                term["count"], term["target_index"],
            )
            extraction, target, waypoint, collision = cubby_terms(
                scene, term["mbar"], term["munder"], term["alpha_m"], term["r_switch"], term["d_front"],
                term["waypoint_offset"], term["k"], term["alpha_psi"], term["rbf_alpha"],
                tuple(term["limit_params"]), term["k_b"], term["alpha_b"], name=term["name"],
            )
            for t in (extraction, target, waypoint):
                tree.attach(term["node"], t)
            for node in term["collision_nodes"]:
                tree.attach(node, collision)
    tree.attach("root", FabricTerm("execution", None, EuclideanEnergy(dim), EXECUTION))
    return tree


def build_system(cfg: dict, variant: Variant) -> FabricSystem:
    arm = make_arm(cfg["robot"])
    tree = build_tree(cfg, variant.style, variant.obstacle_metric)
    ee_map = BodyPointMap(arm, arm.end_effector) if arm is not None else None
    controller = make_controller(variant.controller, variant.v_d)
    return FabricSystem(tree, controller, ee_map, record_potential=cfg["outputs"]["potential"])


def path_space(cfg: dict) -> str:
    space = cfg["outputs"]["path_space"]
    if space == "auto":
        return "end_effector" if cfg["robot"]["type"] == "planar_arm" else "config"
    return space


def integrator(cfg: dict) -> IntegratorConfig:
    it = cfg["integrator"]
    return IntegratorConfig(it["method"], it["dt"], it["duration"])


def rollout_id(variant: str, index: int) -> str:
    return f"{variant}/state{index:02d}"


def _path_of(cfg, arm, q, qdot, final_q) -> PathSample:
    if path_space(cfg) == "config":
        return PathSample(np.asarray(q), np.linalg.norm(qdot, axis=1), np.asarray(final_q))
    return ee_path(arm, q, qdot, final_q)


def run_scenario(
    cfg: dict,
    out_dir=None,
    only_variant: str | None = None,
    log=None,
) -> MetricsReport:
    """Run every variant on every initial state and write the artifacts.

    Rollout failures are recorded and the run continues. With ``out_dir``
    None nothing is written.
    """
    vs = variants(cfg)
    if only_variant is not None:
        names = [v.name for v in vs]
        if only_variant not in names:
            raise ScenarioError(f"unknown variant {only_variant!r} (known: {names})")
        vs = [v for v in vs if v.name == only_variant]
    states = initial_states(cfg)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / CONFIG_ECHO).write_text(dump_scenario(cfg))
    conv = cfg["convergence"]
    icfg = integrator(cfg)
    arm = make_arm(cfg["robot"])
    report = MetricsReport(cfg["name"])
    trajectories = {}
    for variant in vs:
        try:
            system = build_system(cfg, variant)
        except (ValueError, DimensionError) as err:
            raise ScenarioError(f"variant {variant.name!r}: {err}") from None
        for i, (q0, qd0) in enumerate(states):
            rid = rollout_id(variant.name, i)
            stop = None
            if conv["stop_after"] > 0:
                stop = SettleStop(conv["pos_tol"], conv["vel_tol"], conv["stop_after"])
            t0 = time.perf_counter()
            traj = rollout(system, q0, qd0, icfg, stop_when=stop)
            wall = time.perf_counter() - t0
            record = _record(cfg, arm, variant, i, q0, qd0, traj, wall)
            if out is not None:
                record.csv = _write_rollout(out, rid, traj, record, cfg, arm)
            report.rollouts.append(record)
            trajectories[rid] = _path_of(cfg, arm, traj.q, traj.qdot, traj.final_q)
            if log is not None:
                log(
                    f"{rid}: {traj.termination}, converged={record.converged}, "
                    f"goal distance {record.final_goal_distance:.3g}, {wall:.1f}s"
                )
    report.pairs = cross_speed_pairs(cfg, vs, len(states), trajectories)
    report.summary = compare_variants(report)
    report.summary["initial_states"] = [[q.tolist(), qd.tolist()] for q, qd in states]
    if out is not None:
        (out / METRICS_FILE).write_text(report.to_json() + "\n")
        if cfg["outputs"]["plots"]:
            plot_run(cfg, out, report)
    return report


def _record(cfg, arm, variant, index, q0, qd0, traj, wall) -> RolloutRecord:
    conv = cfg["convergence"]
    rep = detect_convergence(traj, conv["pos_tol"], conv["vel_tol"], conv["window"])
    path = _path_of(cfg, arm, traj.q, traj.qdot, traj.final_q)
    min_obs = float(np.nanmin(traj.min_obstacle)) if np.any(np.isfinite(traj.min_obstacle)) else None
    return RolloutRecord(
        id=rollout_id(variant.name, index),
        variant=variant.name,
        style=variant.style,
        controller=variant.controller["name"],
        v_d=variant.v_d,
        obstacle_metric=variant.obstacle_metric,
        state_index=index,
        q0=[float(v) for v in q0],
        qdot0=[float(v) for v in qd0],
        termination=traj.termination,
        failure=traj.failure,
        converged=rep.converged,
        first_converged_step=rep.first_step,
        final_goal_distance=rep.final_goal_distance,
        final_speed=rep.final_speed,
        min_barrier=float(np.min(traj.min_barrier)),
        min_obstacle=min_obs,
        n_steps=traj.n_steps,
        wall_time=wall,
        self_path_difference=arc_length_difference(path.points, path.speeds, path.reference),
    )


def cross_speed_pairs(cfg, vs, n_states, paths) -> list[PairRecord]:
    """Path differences between variants that differ only in ``v_d``."""
    groups: dict = {}
    for v in vs:
        if v.v_d is None:
            continue
        key = (v.style, v.controller["name"], v.obstacle_metric)
        groups.setdefault(key, []).append(v)
    pairs = []
    space = path_space(cfg)
    for (style, ctrl, om), members in groups.items():
        group = "-".join(str(p) for p in (style, ctrl, om) if p is not None)
        for a, b in itertools.combinations(members, 2):
            for i in range(n_states):
                pa, pb = paths.get(rollout_id(a.name, i)), paths.get(rollout_id(b.name, i))
                if pa is None or pb is None:
                    continue
                pairs.append(
                    PairRecord(
                        style=style,
                        group=group,
                        state_index=i,
                        a=a.name,
                        b=b.name,
                        space=space,
                        L_ab=arc_length_difference(pa.points, pa.speeds, pb.reference),
                        L_ba=arc_length_difference(pb.points, pb.speeds, pa.reference),
                    )
                )
    return pairs


def _write_rollout(out: Path, rid: str, traj, record: RolloutRecord, cfg, arm) -> str | None:
    base = out / "rollouts" / rid
    base.parent.mkdir(parents=True, exist_ok=True)
    csv_rel = None
    if cfg["outputs"]["csv"]:
        traj.write_csv(base.with_suffix(".csv"))
        csv_rel = str(base.with_suffix(".csv").relative_to(out))
    status = {
        "termination": traj.termination,
        "failure": traj.failure,
        "final_q": traj.final_q.tolist(),
        "final_qdot": traj.final_qdot.tolist(),
        "wall_time": record.wall_time,
    }
    base.with_suffix(".status.json").write_text(json.dumps(status, indent=2, sort_keys=True) + "\n")
    if cfg["outputs"]["xy"]:
        xy = out / "xy" / rid
        xy.parent.mkdir(parents=True, exist_ok=True)
        pts = traj.ee if traj.ee is not None else traj.q[:, :2]
        np.savetxt(xy.with_suffix(".path.dat"), pts, fmt="%.17g", header="x y")
        np.savetxt(
            xy.with_suffix(".speed.dat"),
            np.column_stack([traj.times, traj.speed]),
            fmt="%.17g",
            header="t speed",
        )
    return csv_rel


@dataclass(frozen=True)
class _Recorded:
    """Trajectory fields needed for metrics, read back from a run directory."""

    q: np.ndarray
    qdot: np.ndarray
    final_q: np.ndarray
    goal_distance: np.ndarray
    min_barrier: np.ndarray
    min_obstacle: np.ndarray
    termination: str
    failure: dict | None

    @property
    def n_steps(self) -> int:
        return self.q.shape[0]

    @property
    def speed(self) -> np.ndarray:
        return np.linalg.norm(self.qdot, axis=1)


def _read_rollout(out: Path, rid: str, dim: int) -> tuple[_Recorded, float]:
    base = out / "rollouts" / rid
    data = read_csv(base.with_suffix(".csv"))
    status = json.loads(base.with_suffix(".status.json").read_text())
    q = np.column_stack([data[f"q{j}"] for j in range(dim)])
    qdot = np.column_stack([data[f"qd{j}"] for j in range(dim)])
    rec = _Recorded(
        q=q,
        qdot=qdot,
        final_q=np.array(status["final_q"], dtype=float),
        goal_distance=data["goal_dist"],
        min_barrier=data["min_barrier_dist"],
        min_obstacle=data["min_obstacle_dist"],
        termination=status["termination"],
        failure=status["failure"],
    )
    return rec, float(status["wall_time"])


def recompute_metrics(run_dir) -> MetricsReport:
    """Rebuild the metrics report of a finished run from its CSV files."""
    out = Path(run_dir)
    echo = out / CONFIG_ECHO
    if not echo.exists():
        raise ScenarioError(f"no {CONFIG_ECHO} in {out}")
    cfg = load_scenario(echo)
    if not cfg["outputs"]["csv"]:
        raise ScenarioError("run was made without CSV output; metrics cannot be recomputed")
    arm = make_arm(cfg["robot"])
    dim = cfg["robot"]["dim"] if arm is None else arm.n_joints
    states = initial_states(cfg)
    report = MetricsReport(cfg["name"])
    paths = {}
    present = []
    for variant in variants(cfg):
        for i, (q0, qd0) in enumerate(states):
            rid = rollout_id(variant.name, i)
            if not (out / "rollouts" / rid).with_suffix(".csv").exists():
                continue
            rec, wall = _read_rollout(out, rid, dim)
            record = _record(cfg, arm, variant, i, q0, qd0, rec, wall)
            record.csv = str((out / "rollouts" / rid).with_suffix(".csv").relative_to(out))
            report.rollouts.append(record)
            paths[rid] = _path_of(cfg, arm, rec.q, rec.qdot, rec.final_q)
        if any(r.variant == variant.name for r in report.rollouts):
            present.append(variant)
    report.pairs = cross_speed_pairs(cfg, present, len(states), paths)
    report.summary = compare_variants(report)
    report.summary["initial_states"] = [[q.tolist(), qd.tolist()] for q, qd in states]
    return report


def plot_run(cfg: dict, out: Path, report: MetricsReport) -> list[Path]:
    """One PNG per variant: paths with obstacles and target, and speed traces."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    by_variant: dict = {}
    for r in report.rollouts:
        by_variant.setdefault(r.variant, []).append(r)
    (out / "plots").mkdir(exist_ok=True)
    arm = make_arm(cfg["robot"])
    for name, rows in by_variant.items():
        fig, (ax_path, ax_speed) = plt.subplots(1, 2, figsize=(10, 4.5))
        for r in rows:
            xy = out / "xy" / f"{r.id}.path.dat"
            sp = out / "xy" / f"{r.id}.speed.dat"
            if xy.exists():
                pts = np.atleast_2d(np.loadtxt(xy))
                ax_path.plot(pts[:, 0], pts[:, 1], lw=1.0)
            if sp.exists():
                ts = np.atleast_2d(np.loadtxt(sp))
                ax_speed.plot(ts[:, 0], ts[:, 1], lw=1.0)
            status = out / "rollouts" / f"{r.id}.status.json"
            if arm is not None and status.exists():
                final_q = json.loads(status.read_text())["final_q"]
                _draw_arm(ax_path, arm, r.q0, "0.75")
                _draw_arm(ax_path, arm, final_q, "0.2")
        _draw_scene(ax_path, cfg)
        ax_path.set_aspect("equal", adjustable="datalim")
        ax_path.set_title(f"{name}: paths")
        ax_speed.set_xlabel("t [s]")
        ax_speed.set_ylabel("speed")
        ax_speed.set_title("speed")
        fig.tight_layout()
        path = out / "plots" / f"{name}.png"
        fig.savefig(path, dpi=80)
        plt.close(fig)
        written.append(path)
    return written


def _draw_arm(ax, arm, q, color):
    pts = [arm.base_pose[:2]] + [arm.fk(q, BodyPoint(i, 1.0)) for i in range(arm.n_joints)]
    pts = np.array(pts)
    ax.plot(pts[:, 0], pts[:, 1], "-o", color=color, lw=2, ms=3)


def _draw_scene(ax, cfg):
    import matplotlib.patches as mpatches

    target = cfg["objective"]["target"]
    if len(target) >= 2:
        ax.plot(target[0], target[1], "g*", ms=12)
    for term in cfg["terms"]:
        if term["kind"] == "obstacle":
            ax.add_patch(mpatches.Circle(term["center"], term["radius"], color="0.6", alpha=0.6))
        elif term["kind"] == "cubby":
            scene = CubbyScene(
                np.array(term["front_point"]), np.array(term["normal"]), term["width"], term["depth"],
                term["count"], term["target_index"],
            )
            for a, b in scene.walls():
                ax.plot([a[0], b[0]], [a[1], b[1]], "k-", lw=2)
