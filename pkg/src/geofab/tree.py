"""Transform tree: forward state propagation and four-channel backward pullback."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .finsler import BarrierDomainError
from .geometry.maps import TaskMap
from .geometry.terms import EXECUTION, FORCING, GEOMETRIC, FabricTerm
from .spec_algebra import (
    DEFAULT_RIDGE,
    DimensionError,
    SpecValue,
    TaskMapEval,
    resolve_policy,
    solve_ridge,
)

OBSTACLE_KINDS = ("circle_distance", "segment_distance")
CHANNELS = ("energy", "policy", "forcing", "execution")


@dataclass
class TreeNode:
    id: str
    parent: str | None
    edge: TaskMap | None
    dim: int
    terms: list = field(default_factory=list)


@dataclass(frozen=True)
class NodeState:
    x: np.ndarray
    xdot: np.ndarray
    edge_eval: TaskMapEval | None


@dataclass(frozen=True)
class RootResolution:
    """Channel specs pulled back to the root plus a few scalar diagnostics.

    ``potential`` is the summed forcing potential (None unless requested),
    ``min_barrier`` the smallest barrier-map value anywhere in the tree and
    ``min_obstacle`` the smallest obstacle clearance (NaN without obstacles).
    """

    energy: SpecValue
    policy: SpecValue
    forcing: SpecValue
    execution: SpecValue
    potential: float | None
    min_barrier: float
    min_obstacle: float
    goal_offset: np.ndarray | None

    def channel(self, name: str) -> SpecValue:
        return getattr(self, name)


class TransformTree:
    """Tree of task spaces rooted at the configuration space.

    Nodes are stored in insertion order, which is also a valid topological
    order because a parent must exist before its children.
    """

    def __init__(self, root_dim: int, root_id: str = "root"):
        if root_dim < 1:
            raise ValueError("root_dim must be positive")
        self.root_id = root_id
        self.nodes: dict[str, TreeNode] = {root_id: TreeNode(root_id, None, None, root_dim)}
        self.goal_node: str | None = None

    @property
    def root_dim(self) -> int:
        return self.nodes[self.root_id].dim

    def add_node(self, parent: str, edge: TaskMap, node_id: str | None = None) -> str:
        if parent not in self.nodes:
            raise KeyError(f"unknown parent node {parent!r}")
        if edge.in_dim != self.nodes[parent].dim:
            raise DimensionError(
                f"edge {edge.kind} expects parent dim {edge.in_dim}, "
                f"node {parent!r} has dim {self.nodes[parent].dim}"
            )
        if node_id is None:
            node_id = f"{parent}/{edge.kind}{len(self.nodes)}"
        if node_id in self.nodes:
            raise ValueError(f"node id {node_id!r} already used")
        self.nodes[node_id] = TreeNode(node_id, parent, edge, edge.out_dim)
        return node_id

    def attach(self, node: str, term: FabricTerm, goal: bool = False) -> str:
        """Attach ``term`` below ``node``; its own task map becomes a new child edge.

        Returns the id of the node holding the term. With ``goal`` set, that
        node's position is reported as the goal offset.
        """
        if node not in self.nodes:
            raise KeyError(f"unknown node {node!r}")
        host = node
        if term.task_map is not None:
            node_id, copy = f"{node}/{term.name}", 1
            while node_id in self.nodes:
                copy += 1
                node_id = f"{node}/{term.name}#{copy}"
            host = self.add_node(node, term.task_map, node_id=node_id)
        if self.nodes[host].dim != term.dim:
            raise DimensionError(
                f"term {term.name!r} has dim {term.dim}, node {host!r} has dim {self.nodes[host].dim}"
            )
        self.nodes[host].terms.append(term)
        if goal:
            self.goal_node = host
        return host

    def terms(self) -> list[tuple[str, FabricTerm]]:
        return [(nid, t) for nid, n in self.nodes.items() for t in n.terms]

    def forward(self, q, qdot) -> dict[str, NodeState]:
        q = np.atleast_1d(np.asarray(q, dtype=float))
        qdot = np.atleast_1d(np.asarray(qdot, dtype=float))
        if q.shape != (self.root_dim,) or qdot.shape != (self.root_dim,):
            raise DimensionError(
                f"root has dim {self.root_dim}, got q {q.shape}, qdot {qdot.shape}"
            )
        states = {self.root_id: NodeState(q, qdot, None)}
        for nid, node in self.nodes.items():
            if node.parent is None:
                continue
            parent = states[node.parent]
            tme = node.edge.evaluate(parent.x, parent.xdot)
            if node.edge.barrier and tme.x.min() <= 0.0:
                raise BarrierDomainError(
                    f"node {nid!r}: {node.edge.kind} map left its barrier domain "
                    f"(x = {float(tme.x.min()):.6g})",
                    value=float(tme.x.min()),
                    where=nid,
                )
            states[nid] = NodeState(tme.x, tme.jacobian @ parent.xdot, tme)
        return states

    def backward(self, states: dict[str, NodeState], with_potential: bool = False) -> RootResolution:
        # raw (metric, force) pairs per node and channel, created on first use;
        # validated once at the root
        acc: dict[str, dict] = {nid: {} for nid in self.nodes}
        potential = 0.0
        for nid, node in self.nodes.items():
            st = states[nid]
            for term in node.terms:
                try:
                    ev = term.evaluate(st.x, st.xdot)
                    if with_potential and term.policy_kind == FORCING:
                        potential += term.potential_value(st.x)
                except BarrierDomainError as err:
                    raise BarrierDomainError(
                        f"node {nid!r}, term {term.name!r}: {err}", value=err.value, where=nid
                    ) from None
                box = acc[nid]
                tensor = ev.energy.tensor
                if term.policy_kind == EXECUTION:
                    _add(box, "execution", tensor, ev.energy.curvature_force)
                    continue
                _add(box, "energy", tensor, ev.energy.curvature_force)
                if term.policy_kind == GEOMETRIC:
                    _add(box, "policy", tensor, -tensor @ ev.acceleration)
                else:
                    _add(box, "forcing", tensor, ev.forcing_gradient)
        for nid in reversed(list(self.nodes)):
            node = self.nodes[nid]
            if node.parent is None:
                continue
            tme = states[nid].edge_eval
            jac, curv = tme.jacobian, tme.curvature
            for ch, (metric, force) in acc[nid].items():
                # potential gradients transform as covectors: no curvature term,
                # which the energy channel already accounts for
                if ch != "forcing":
                    force = force + metric @ curv
                _add(acc[node.parent], ch, jac.T @ metric @ jac, jac.T @ force)
        min_barrier, min_obstacle = np.inf, np.nan
        for nid, node in self.nodes.items():
            if node.edge is not None and node.edge.barrier:
                value = float(np.min(states[nid].x))
                min_barrier = min(min_barrier, value)
                if node.edge.kind in OBSTACLE_KINDS:
                    min_obstacle = value if np.isnan(min_obstacle) else min(min_obstacle, value)
        n = self.root_dim
        root = {
            ch: SpecValue(*acc[self.root_id].get(ch, (np.zeros((n, n)), np.zeros(n))))
            for ch in CHANNELS
        }
        goal = states[self.goal_node].x.copy() if self.goal_node is not None else None
        return RootResolution(
            energy=root["energy"],
            policy=root["policy"],
            forcing=root["forcing"],
            execution=root["execution"],
            potential=potential if with_potential else None,
            min_barrier=float(min_barrier),
            min_obstacle=float(min_obstacle),
            goal_offset=goal,
        )

    def evaluate(self, q, qdot, with_potential: bool = False) -> RootResolution:
        return self.backward(self.forward(q, qdot), with_potential=with_potential)


def _add(box: dict, channel: str, metric, force) -> None:
    if channel in box:
        old_metric, old_force = box[channel]
        box[channel] = (old_metric + metric, old_force + force)
    else:
        box[channel] = (metric, force)


def resolve_root(res: RootResolution, ridge: float = DEFAULT_RIDGE):
    """Return ``(M, pi0, a_psi)`` from the root channels."""
    metric = res.energy.metric
    pi0 = resolve_policy(res.policy, ridge, warn=False).acceleration
    a_psi = -solve_ridge(metric, res.forcing.force, ridge)
    return metric, pi0, a_psi
