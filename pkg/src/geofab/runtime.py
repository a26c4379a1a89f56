"""Fixed-step integration of the root system and trajectory recording."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from .finsler import BarrierDomainError
from .geometry.maps import TaskMap
from .spec_algebra import DEFAULT_RIDGE
from .speed_control import (
    BasicDamping,
    Gates,
    RegulatorTrace,
    SpeedControlParams,
    basic_damping,
    compute_gates,
    regulate,
    zero_work_force,
)
from .tree import TransformTree, resolve_root

DIVERGENCE_LIMIT = 1e6
METHODS = ("euler", "rk4")
POTENTIAL_MODES = ("exact", "path", "off")
TRACE_FIELDS = tuple(f.name for f in fields(RegulatorTrace))


class DivergenceError(FloatingPointError):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk4"
    dt: float = 0.01
    duration: float = 15.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown integrator {self.method!r}; use one of {METHODS}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.duration < self.dt:
            raise ValueError("duration must be at least dt")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))


Accel = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _checked(qdd) -> np.ndarray:
    qdd = np.asarray(qdd, dtype=float)
    if not np.all(np.isfinite(qdd)):
        raise DivergenceError("non-finite acceleration")
    return qdd


def step(system: Accel, q, qdot, dt: float, method: str = "rk4", qdd0=None):
    """One explicit Euler or classical RK4 step of ``(q, qdot) -> (qdot, qdd)``.

    ``qdd0`` may carry an already computed acceleration at the start state.
    """
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    k1 = _checked(system(q, qdot) if qdd0 is None else qdd0)
    if method == "euler":
        return q + dt * qdot, qdot + dt * k1
    if method != "rk4":
        raise ValueError(f"unknown integrator {method!r}")
    v2 = qdot + 0.5 * dt * k1
    k2 = _checked(system(q + 0.5 * dt * qdot, v2))
    v3 = qdot + 0.5 * dt * k2
    k3 = _checked(system(q + 0.5 * dt * v2, v3))
    v4 = qdot + dt * k3
    k4 = _checked(system(q + dt * v3, v4))
    q_next = q + dt / 6.0 * (qdot + 2.0 * v2 + 2.0 * v3 + v4)
    qdot_next = qdot + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return q_next, qdot_next


@dataclass(frozen=True)
class StepInfo:
    qdd: np.ndarray
    trace: RegulatorTrace
    fabric_energy: float
    exec_energy: float
    potential: float
    min_obstacle: float
    min_barrier: float
    goal_offset: np.ndarray | None
    zero_work: float
    gates: Gates | None
    potential_rate: float = float("nan")


class FabricSystem:
    """Root acceleration of a transform tree under a damping controller.

    ``controller`` is a :class:`SpeedControlParams` or :class:`BasicDamping`.
    Regulator gates are computed once per step by :meth:`inspect` and held
    across the integrator stages; energization coefficients are recomputed
    at every stage.

    ``record_potential`` picks how the forcing potential is recorded:
    ``"exact"`` integrates it by quadrature at every recorded state,
    ``"path"`` does so once at the start and then accumulates the power
    ``dpsi/dt = grad(psi) . qdot`` with the trapezoid rule (much cheaper),
    ``"off"`` records NaN. ``True``/``False`` mean ``"exact"``/``"off"``.
    """

    def __init__(
        self,
        tree: TransformTree,
        controller: SpeedControlParams | BasicDamping,
        ee_map: TaskMap | None = None,
        ridge: float = DEFAULT_RIDGE,
        record_potential: bool | str = True,
    ):
        self.tree = tree
        self.controller = controller
        self.ee_map = ee_map
        self.ridge = ridge
        if record_potential is True:
            record_potential = "exact"
        elif record_potential is False:
            record_potential = "off"
        if record_potential not in POTENTIAL_MODES:
            raise ValueError(f"record_potential must be one of {POTENTIAL_MODES}")
        self.record_potential = record_potential

    def _resolve(self, q, qdot, gates, with_potential=False):
        res = self.tree.evaluate(q, qdot, with_potential=with_potential)
        metric, pi0, a_psi = resolve_root(res, self.ridge)
        if isinstance(self.controller, SpeedControlParams):
            qdd, trace = regulate(
                metric, pi0, a_psi, res.energy, res.execution, res.goal_offset, qdot,
                self.controller, gates,
            )
        else:
            fabric = res.energy if self.controller.energized else None
            qdd, trace = basic_damping(metric, pi0, a_psi, self.controller.beta, qdot, fabric)
        return res, pi0, qdd, trace

    def acceleration(self, q, qdot, gates: Gates | None = None) -> np.ndarray:
        """Root acceleration; gates default to their values at this state."""
        return self._resolve(q, qdot, gates)[2]

    def inspect(self, q, qdot, gates: Gates | None = None) -> StepInfo:
        qdot = np.asarray(qdot, dtype=float)
        exact = self.record_potential == "exact"
        res, pi0, qdd, trace = self._resolve(q, qdot, gates, with_potential=exact)
        f_f = zero_work_force(res.energy.metric, res.energy.force, pi0, qdot)
        scale = float(np.linalg.norm(f_f) * np.linalg.norm(qdot))
        zero_work = abs(float(qdot @ f_f)) / scale if scale > 0 else 0.0
        return StepInfo(
            qdd=qdd,
            trace=trace,
            fabric_energy=0.5 * float(qdot @ res.energy.metric @ qdot),
            exec_energy=0.5 * float(qdot @ res.execution.metric @ qdot),
            potential=res.potential if res.potential is not None else float("nan"),
            min_obstacle=res.min_obstacle,
            min_barrier=res.min_barrier,
            goal_offset=res.goal_offset,
            zero_work=zero_work,
            gates=Gates(trace.s_beta, trace.eta) if isinstance(self.controller, SpeedControlParams) else None,
            potential_rate=float(res.forcing.force @ qdot),
        )

    def potential(self, q) -> float:
        """Forcing potential at ``q`` by quadrature."""
        q = np.asarray(q, dtype=float)
        return float(self.tree.evaluate(q, np.zeros_like(q), with_potential=True).potential)

    def end_effector(self, q) -> np.ndarray | None:
        return None if self.ee_map is None else self.ee_map.position(q)


@dataclass
class Trajectory:
    """Per-step record of a rollout.

    Row ``i`` holds the state at ``t_i`` and the acceleration applied over
    the step starting there. ``final_q``/``final_qdot`` hold the state after
    the last recorded step. ``H_total`` is the fabric Hamiltonian (equal to
    the fabric energy) plus the forcing potential.
    """

    dt: float
    method: str
    times: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    qdd: np.ndarray
    L_e: np.ndarray
    L_ex: np.ndarray
    potential: np.ndarray
    min_obstacle: np.ndarray
    min_barrier: np.ndarray
    goal_distance: np.ndarray
    zero_work: np.ndarray
    traces: dict
    ee: np.ndarray | None
    final_q: np.ndarray
    final_qdot: np.ndarray
    termination: str
    failure: dict | None = None
    info: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return self.times.shape[0]

    @property
    def H_total(self) -> np.ndarray:
        return self.L_e + self.potential

    @property
    def speed(self) -> np.ndarray:
        return np.linalg.norm(self.qdot, axis=1)

    def positions_with_final(self) -> np.ndarray:
        return np.vstack([self.q, self.final_q[None, :]])

    def csv_columns(self) -> list[str]:
        n = self.q.shape[1]
        cols = ["t"] + [f"q{i}" for i in range(n)] + [f"qd{i}" for i in range(n)]
        cols += [f"qdd{i}" for i in range(n)]
        if self.ee is not None:
            cols += ["ee_x", "ee_y"]
        cols += ["L_e", "L_ex", "H_total", "s_beta", "eta", "beta_reg", "alpha_reg", "alpha_boost"]
        cols += ["min_obstacle_dist", "min_barrier_dist", "goal_dist"]
        return cols

    def csv_rows(self):
        h_total = self.H_total
        for i in range(self.n_steps):
            row = [self.times[i], *self.q[i], *self.qdot[i], *self.qdd[i]]
            if self.ee is not None:
                row += list(self.ee[i])
            row += [self.L_e[i], self.L_ex[i], h_total[i]]
            row += [self.traces[k][i] for k in ("s_beta", "eta", "beta_reg", "alpha_reg", "alpha_boost")]
            row += [self.min_obstacle[i], self.min_barrier[i], self.goal_distance[i]]
            yield row

    def write_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.csv_columns())
            for row in self.csv_rows():
                writer.writerow([f"{float(v):.17g}" for v in row])


def read_csv(path) -> dict[str, np.ndarray]:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(v) for v in row] for row in reader], dtype=float)
    if data.size == 0:
        data = np.zeros((0, len(header)))
    return {name: data[:, i] for i, name in enumerate(header)}


def rollout(
    system: FabricSystem,
    q0,
    qdot0,
    config: IntegratorConfig,
    stop_when: Callable[[np.ndarray, np.ndarray, StepInfo], bool] | None = None,
) -> Trajectory:
    """Integrate ``system`` from ``(q0, qdot0)`` and record every step.

    Barrier violations and divergence end the rollout early with a labeled
    ``failure`` record; ``stop_when`` may end it early as ``converged``.
    """
    q = np.array(q0, dtype=float)
    qdot = np.array(qdot0, dtype=float)
    rows: list[tuple] = []
    path_mode = system.record_potential == "path"
    psi = system.potential(q) if path_mode else float("nan")
    prev_rate = None
    termination = "duration_reached"
    failure = None
    n = config.n_steps
    for i in range(n):
        try:
            info = system.inspect(q, qdot)
            gates = info.gates
            if path_mode:
                if prev_rate is not None:
                    psi += 0.5 * config.dt * (prev_rate + info.potential_rate)
                prev_rate = info.potential_rate
            potential = psi if path_mode else info.potential
            rows.append((i * config.dt, q, qdot, info, system.end_effector(q), potential))
            if stop_when is not None and stop_when(q, qdot, info):
                termination = "converged"
                break
            q, qdot = step(
                lambda a, b: system.acceleration(a, b, gates),
                q, qdot, config.dt, config.method, qdd0=info.qdd,
            )
        except BarrierDomainError as err:
            termination = "barrier_violation"
            failure = {"step": i, "node": err.where, "value": err.value, "message": str(err)}
            break
        except (DivergenceError, FloatingPointError, np.linalg.LinAlgError) as err:
            termination = "divergence"
            failure = {"step": i, "message": str(err)}
            break
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qdot))) or max(
            np.abs(q).max(), np.abs(qdot).max()
        ) > DIVERGENCE_LIMIT:
            termination = "divergence"
            failure = {"step": i, "message": f"state norm exceeded {DIVERGENCE_LIMIT:g}"}
            break
    return _assemble(rows, q, qdot, config, termination, failure, np.asarray(q0).shape[0])


def _assemble(rows, q, qdot, config, termination, failure, dim) -> Trajectory:
    m = len(rows)

    def stack(getter, width=None):
        if m == 0:
            return np.zeros((0, width)) if width else np.zeros(0)
        return np.array([getter(r) for r in rows], dtype=float)

    has_ee = m > 0 and rows[0][4] is not None
    traces = {
        name: stack(lambda r, name=name: getattr(r[3].trace, name)) for name in TRACE_FIELDS
    }

    def goal_dist(r):
        g = r[3].goal_offset
        return float(np.linalg.norm(g)) if g is not None else float("nan")

    return Trajectory(
        dt=config.dt,
        method=config.method,
        times=stack(lambda r: r[0]),
        q=stack(lambda r: r[1], dim),
        qdot=stack(lambda r: r[2], dim),
        qdd=stack(lambda r: r[3].qdd, dim),
        L_e=stack(lambda r: r[3].fabric_energy),
        L_ex=stack(lambda r: r[3].exec_energy),
        potential=stack(lambda r: r[5]),
        min_obstacle=stack(lambda r: r[3].min_obstacle),
        min_barrier=stack(lambda r: r[3].min_barrier),
        goal_distance=stack(goal_dist),
        zero_work=stack(lambda r: r[3].zero_work),
        traces=traces,
        ee=stack(lambda r: r[4], 2) if has_ee else None,
        final_q=np.asarray(q, dtype=float),
        final_qdot=np.asarray(qdot, dtype=float),
        termination=termination,
        failure=failure,
    )


@dataclass(frozen=True)
class ConvergenceReport:
    converged: bool
    first_step: int | None
    final_goal_distance: float
    final_speed: float


def detect_convergence(
    traj: Trajectory, pos_tol: float = 1e-2, vel_tol: float = 1e-3, window: int = 50
) -> ConvergenceReport:
    """Converged iff goal distance and speed stay within tolerance over the trailing window.

    ``first_step`` is the earliest step from which the tolerances hold for
    the rest of the trajectory (None if they never do).
    """
    if traj.n_steps == 0:
        raise ValueError("empty trajectory")
    ok = (traj.goal_distance <= pos_tol) & (traj.speed <= vel_tol)
    bad = np.flatnonzero(~ok)
    first = 0 if bad.size == 0 else int(bad[-1]) + 1
    first_step = first if first < traj.n_steps else None
    window = max(1, min(window, traj.n_steps))
    converged = bool(first_step is not None and first_step <= traj.n_steps - window)
    return ConvergenceReport(
        converged=converged,
        first_step=first_step,
        final_goal_distance=float(traj.goal_distance[-1]),
        final_speed=float(traj.speed[-1]),
    )


@dataclass
class SettleStop:
    """Stop callback for ``rollout``: fires once goal distance and speed have
    stayed within tolerance for ``window`` consecutive recorded steps."""

    pos_tol: float = 1e-2
    vel_tol: float = 1e-3
    window: int = 100
    count: int = 0

    def __call__(self, q, qdot, info: StepInfo) -> bool:
        g = info.goal_offset
        ok = g is not None and float(np.linalg.norm(g)) <= self.pos_tol
        ok = ok and float(np.linalg.norm(qdot)) <= self.vel_tol
        self.count = self.count + 1 if ok else 0
        return self.count >= self.window
