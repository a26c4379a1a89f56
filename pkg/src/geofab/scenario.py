"""Scenario files: YAML loading, schema validation and default materialization.

A scenario is a YAML mapping with the sections listed in ``SECTIONS``. After
validation every optional field carries its default, so the resolved mapping
is a complete record of the run parameters. Errors report the file and the
line of the offending key.
"""

from __future__ import annotations

import copy
from pathlib import Path
from typing import Any

import numpy as np
import yaml

REQUIRED = object()

FABRIC_STYLES = ("geometric", "lagrangian")
TERM_KINDS = ("obstacle", "joint_limits", "default_config", "cubby")
EDGE_KINDS = ("body_point", "identity")
CONTROLLER_TYPES = ("speed_control", "basic_damping")
SECTIONS = (
    "name",
    "description",
    "seed",
    "robot",
    "tree",
    "objective",
    "terms",
    "fabric_styles",
    "sweep",
    "controllers",
    "integrator",
    "convergence",
    "initial_states",
    "outputs",
)


class ScenarioError(ValueError):
    """Configuration error with file and line context."""

    def __init__(self, message: str, source: str | None = None, line: int | None = None):
        self.message = message
        self.source = source
        self.line = line
        where = source or "<scenario>"
        if line is not None:
            where = f"{where}:{line}"
        super().__init__(f"{where}: {message}")


class _Context:
    def __init__(self, source: str | None, lines: dict):
        self.source = source
        self.lines = lines

    def fail(self, path: tuple, message: str):
        key = tuple(path)
        while key and key not in self.lines:
            key = key[:-1]
        dotted = _dotted(path)
        text = f"{dotted}: {message}" if dotted else message
        raise ScenarioError(text, self.source, self.lines.get(key))


def _dotted(path: tuple) -> str:
    out = ""
    for part in path:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out


def _line_table(node, path: tuple, lines: dict) -> None:
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            key = path + (key_node.value,)
            lines[key] = key_node.start_mark.line + 1
            _line_table(value_node, key, lines)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            lines[path + (i,)] = item.start_mark.line + 1
            _line_table(item, path + (i,), lines)


def parse_text(text: str, source: str | None = None) -> tuple[Any, dict]:
    """Parse YAML text into plain data plus a ``path -> line`` table."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        mark = getattr(err, "problem_mark", None)
        problem = getattr(err, "problem", None) or str(err)
        raise ScenarioError(f"parse error: {problem}", source, mark.line + 1 if mark else None) from None
    lines: dict = {}
    if node is not None:
        _line_table(node, (), lines)
    return data, lines


# field helpers: each returns the validated value or calls ctx.fail


def _number(ctx, path, value, positive=False, nonneg=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        ctx.fail(path, f"expected a number, got {value!r}")
    value = float(value)
    if not np.isfinite(value):
        ctx.fail(path, "must be finite")
    if positive and value <= 0:
        ctx.fail(path, "must be positive")
    if nonneg and value < 0:
        ctx.fail(path, "must be non-negative")
    return value


def _integer(ctx, path, value, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        ctx.fail(path, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        ctx.fail(path, f"must be at least {minimum}")
    return int(value)


def _string(ctx, path, value, choices=None):
    if not isinstance(value, str):
        ctx.fail(path, f"expected a string, got {value!r}")
    if choices is not None and value not in choices:
        ctx.fail(path, f"must be one of {list(choices)}, got {value!r}")
    return value


def _boolean(ctx, path, value):
    if not isinstance(value, bool):
        ctx.fail(path, f"expected true or false, got {value!r}")
    return value


def _vector(ctx, path, value, dim=None):
    if not isinstance(value, list) or not value:
        ctx.fail(path, f"expected a non-empty list of numbers, got {value!r}")
    out = [_number(ctx, path + (i,), v) for i, v in enumerate(value)]
    if dim is not None and len(out) != dim:
        ctx.fail(path, f"expected {dim} entries, got {len(out)}")
    return out


def _mapping(ctx, path, value):
    if not isinstance(value, dict):
        ctx.fail(path, f"expected a mapping, got {type(value).__name__}")
    return value


def _fields(ctx, path, raw, spec: dict) -> dict:
    """Check keys of ``raw`` against ``spec`` (name -> (checker, default))."""
    raw = _mapping(ctx, path, raw)
    for key in raw:
        if key not in spec:
            ctx.fail(path + (key,), f"unknown key (allowed: {sorted(spec)})")
    out = {}
    for key, (check, default) in spec.items():
        if key in raw and raw[key] is not None:
            out[key] = check(ctx, path + (key,), raw[key])
        elif default is REQUIRED:
            ctx.fail(path, f"missing required field {key!r}")
        else:
            out[key] = copy.deepcopy(default)
    return out


def _num(positive=False, nonneg=False):
    return lambda ctx, path, v: _number(ctx, path, v, positive=positive, nonneg=nonneg)


def _int(minimum=None):
    return lambda ctx, path, v: _integer(ctx, path, v, minimum)


def _str(choices=None):
    return lambda ctx, path, v: _string(ctx, path, v, choices)


def _vec(dim=None):
    return lambda ctx, path, v: _vector(ctx, path, v, dim)


def _bool():
    return _boolean


def _str_list(ctx, path, value):
    if not isinstance(value, list) or not value:
        ctx.fail(path, "expected a non-empty list of names")
    return [_string(ctx, path + (i,), v) for i, v in enumerate(value)]


# section schemas

SPEED_CONTROL_FIELDS = {
    "name": (_str(), "speed_control"),
    "type": (_str(CONTROLLER_TYPES), REQUIRED),
    "v_d": (_num(positive=True), 1.0),
    "B_base": (_num(positive=True), 0.01),
    "B_gain": (_num(positive=True), 6.0),
    "alpha_beta": (_num(positive=True), 10.0),
    "radius": (_num(nonneg=True), 0.5),
    "alpha_eta": (_num(positive=True), 20.0),
    "alpha_shift": (_num(), 0.0),
    "boost_gain": (_num(nonneg=True), 0.0),
    "epsilon": (_num(positive=True), 1e-6),
    "eta_mode": (_str(("gated", "fixed")), "gated"),
    "eta_value": (_num(nonneg=True), 0.5),
}
BASIC_DAMPING_FIELDS = {
    "name": (_str(), "basic_damping"),
    "type": (_str(CONTROLLER_TYPES), REQUIRED),
    "beta": (_num(nonneg=True), REQUIRED),
    "energized": (_bool(), True),
}
OBSTACLE_FIELDS = {
    "kind": (_str(TERM_KINDS), REQUIRED),
    "name": (_str(), None),
    "nodes": (_str_list, ["root"]),
    "center": (_vec(2), REQUIRED),
    "radius": (_num(positive=True), REQUIRED),
    "k_b": (_num(positive=True), 20.0),
    "alpha_b": (_num(positive=True), 1.0),
    "metric_variant": (_str(("position_only", "velocity_gated")), "velocity_gated"),
    "c": (_num(positive=True), 2.0),
    "p": (_num(positive=True), 8.0),
}
JOINT_LIMIT_FIELDS = {
    "kind": (_str(TERM_KINDS), REQUIRED),
    "name": (_str(), "limit"),
    "lam": (_num(positive=True), REQUIRED),
    "a1": (_num(nonneg=True), 0.4),
    "a2": (_num(nonneg=True), 0.2),
    "a3": (_num(positive=True), 20.0),
    "a4": (_num(), 5.0),
}
DEFAULT_CONFIG_FIELDS = {
    "kind": (_str(TERM_KINDS), REQUIRED),
    "name": (_str(), "default_config"),
    "q0": (_vec(), REQUIRED),
    "lambda_dc": (_num(positive=True), REQUIRED),
    "k": (_num(positive=True), REQUIRED),
    "alpha_psi": (_num(positive=True), 10.0),
}
CUBBY_FIELDS = {
    "kind": (_str(TERM_KINDS), REQUIRED),
    "name": (_str(), "cubby"),
    "node": (_str(), REQUIRED),
    "collision_nodes": (_str_list, []),
    "front_point": (_vec(2), REQUIRED),
    "normal": (_vec(2), REQUIRED),
    "width": (_num(positive=True), 0.6),
    "depth": (_num(positive=True), 0.6),
    "count": (_int(1), 3),
    "target_index": (_int(0), 1),
    "mbar": (_num(positive=True), 2.0),
    "munder": (_num(positive=True), 0.2),
    "alpha_m": (_num(positive=True), 50.0),
    "r_switch": (_num(positive=True), 0.15),
    "d_front": (_num(), 0.1),
    "waypoint_offset": (_num(), 0.15),
    "k": (_num(positive=True), 5.0),
    "alpha_psi": (_num(positive=True), 10.0),
    "rbf_alpha": (_num(positive=True), 0.75),
    "limit_params": (_vec(4), [0.4, 0.2, 20.0, 5.0]),
    "k_b": (_num(positive=True), 1.0),
    "alpha_b": (_num(positive=True), 1e-4),
}
TERM_FIELDS = {
    "obstacle": OBSTACLE_FIELDS,
    "joint_limits": JOINT_LIMIT_FIELDS,
    "default_config": DEFAULT_CONFIG_FIELDS,
    "cubby": CUBBY_FIELDS,
}
OBJECTIVE_FIELDS = {
    "node": (_str(), "root"),
    "target": (_vec(), REQUIRED),
    "k": (_num(positive=True), 10.0),
    "alpha_psi": (_num(positive=True), 10.0),
    "mbar": (_num(positive=True), 2.0),
    "munder": (_num(positive=True), 0.2),
    "alpha_m": (_num(positive=True), 0.75),
    "metric_variant": (_str(("rbf_metric", "tanh_switch_metric")), "rbf_metric"),
    "radius": (_num(positive=True), 0.5),
}
INTEGRATOR_FIELDS = {
    "method": (_str(("euler", "rk4")), "rk4"),
    "dt": (_num(positive=True), 0.01),
    "duration": (_num(positive=True), 15.0),
}
CONVERGENCE_FIELDS = {
    "pos_tol": (_num(positive=True), 1e-2),
    "vel_tol": (_num(positive=True), 1e-3),
    "window": (_int(1), 50),
    "stop_after": (_int(0), 0),
}
OUTPUT_FIELDS = {
    "csv": (_bool(), True),
    "xy": (_bool(), True),
    "plots": (_bool(), True),
    "potential": (_str(("exact", "path", "off")), "path"),
    "path_space": (_str(("auto", "config", "end_effector")), "auto"),
}
SWEEP_FIELDS = {
    "v_d": (lambda ctx, path, v: [_number(ctx, path + (i,), x, positive=True) for i, x in enumerate(_list(ctx, path, v))], None),
    "obstacle_metric": (
        lambda ctx, path, v: [
            _string(ctx, path + (i,), x, ("position_only", "velocity_gated"))
            for i, x in enumerate(_list(ctx, path, v))
        ],
        None,
    ),
}
SAMPLER_FIELDS = {
    "sampler": (_str(("uniform",)), REQUIRED),
    "count": (_int(1), REQUIRED),
    "q_low": (_vec(), REQUIRED),
    "q_high": (_vec(), REQUIRED),
    "qdot_low": (_vec(), None),
    "qdot_high": (_vec(), None),
}


def _list(ctx, path, value):
    if not isinstance(value, list) or not value:
        ctx.fail(path, "expected a non-empty list")
    return value


def _any_list(ctx, path, value):
    if not isinstance(value, list):
        ctx.fail(path, "expected a list")
    return value


def _robot(ctx, raw) -> dict:
    path = ("robot",)
    raw = _mapping(ctx, path, raw)
    kind = _string(ctx, path + ("type",), raw.get("type"), ("particle", "planar_arm"))
    if kind == "particle":
        return _fields(ctx, path, raw, {"type": (_str(), REQUIRED), "dim": (_int(1), 2)})
    robot = _fields(
        ctx,
        path,
        raw,
        {
            "type": (_str(), REQUIRED),
            "link_lengths": (_vec(), REQUIRED),
            "base_pose": (_vec(3), [0.0, 0.0, 0.0]),
            "joint_limits": (lambda c, p, v: v, REQUIRED),
        },
    )
    n = len(robot["link_lengths"])
    if min(robot["link_lengths"]) <= 0:
        ctx.fail(path + ("link_lengths",), "link lengths must be positive")
    limits = _fields(
        ctx,
        path + ("joint_limits",),
        robot["joint_limits"],
        {"lower": (_vec(n), REQUIRED), "upper": (_vec(n), REQUIRED)},
    )
    if any(lo >= hi for lo, hi in zip(limits["lower"], limits["upper"])):
        ctx.fail(path + ("joint_limits",), "every lower limit must be below its upper limit")
    robot["joint_limits"] = limits
    return robot


def _root_dim(robot: dict) -> int:
    return robot["dim"] if robot["type"] == "particle" else len(robot["link_lengths"])


def _tree(ctx, raw, robot) -> tuple[dict, dict]:
    """Validate tree nodes; returns the section and a ``node id -> dim`` table."""
    dims = {"root": _root_dim(robot)}
    tree = _fields(ctx, ("tree",), raw if raw is not None else {}, {"nodes": (_any_list, [])})
    nodes = []
    for i, node_raw in enumerate(tree["nodes"]):
        path = ("tree", "nodes", i)
        node = _fields(
            ctx,
            path,
            node_raw,
            {"id": (_str(), REQUIRED), "parent": (_str(), "root"), "edge": (_mapping, REQUIRED)},
        )
        if node["id"] in dims:
            ctx.fail(path + ("id",), f"duplicate node id {node['id']!r}")
        if node["parent"] not in dims:
            ctx.fail(path + ("parent",), f"unknown parent node {node['parent']!r}")
        epath = path + ("edge",)
        kind = _string(ctx, epath + ("kind",), node["edge"].get("kind"), EDGE_KINDS)
        if kind == "body_point":
            if robot["type"] != "planar_arm":
                ctx.fail(epath, "body_point edges need a planar_arm robot")
            if node["parent"] != "root":
                ctx.fail(path + ("parent",), "body_point edges hang off the root")
            edge = _fields(
                ctx,
                epath,
                node["edge"],
                {"kind": (_str(), REQUIRED), "link": (_int(0), REQUIRED), "offset": (_num(), 1.0)},
            )
            if edge["link"] >= dims["root"]:
                ctx.fail(epath + ("link",), f"link index out of range for {dims['root']} links")
            if not 0.0 <= edge["offset"] <= 1.0:
                ctx.fail(epath + ("offset",), "offset must lie in [0, 1]")
            dims[node["id"]] = 2
        else:
            edge = _fields(ctx, epath, node["edge"], {"kind": (_str(), REQUIRED)})
            dims[node["id"]] = dims[node["parent"]]
        node["edge"] = edge
        nodes.append(node)
    tree["nodes"] = nodes
    return tree, dims


def _check_node(ctx, path, node, dims, dim=None):
    if node not in dims:
        ctx.fail(path, f"unknown node {node!r}")
    if dim is not None and dims[node] != dim:
        ctx.fail(path, f"node {node!r} has dim {dims[node]}, expected {dim}")


def _terms(ctx, raw, dims, robot) -> list[dict]:
    raw = raw if raw is not None else []
    if not isinstance(raw, list):
        ctx.fail(("terms",), "expected a list of terms")
    out = []
    names = set()
    for i, term_raw in enumerate(raw):
        path = ("terms", i)
        term_raw = _mapping(ctx, path, term_raw)
        kind = term_raw.get("kind")
        if kind not in TERM_KINDS:
            ctx.fail(path + ("kind",), f"unknown term kind {kind!r} (known: {list(TERM_KINDS)})")
        term = _fields(ctx, path, term_raw, TERM_FIELDS[kind])
        if kind == "obstacle":
            if term["name"] is None:
                term["name"] = f"obstacle{i}"
            for j, node in enumerate(term["nodes"]):
                _check_node(ctx, path + ("nodes", j), node, dims, 2)
        elif kind == "joint_limits":
            if robot["type"] != "planar_arm":
                ctx.fail(path, "joint_limits terms need a planar_arm robot with joint_limits")
        elif kind == "default_config":
            if len(term["q0"]) != dims["root"]:
                ctx.fail(path + ("q0",), f"expected {dims['root']} entries")
        elif kind == "cubby":
            _check_node(ctx, path + ("node",), term["node"], dims, 2)
            for j, node in enumerate(term["collision_nodes"]):
                _check_node(ctx, path + ("collision_nodes", j), node, dims, 2)
            if term["target_index"] >= term["count"]:
                ctx.fail(path + ("target_index",), "target_index must be below count")
        if term["name"] in names:
            ctx.fail(path + ("name",), f"duplicate term name {term['name']!r}")
        names.add(term["name"])
        out.append(term)
    return out


def _controllers(ctx, raw) -> list[dict]:
    raw = _list(ctx, ("controllers",), raw)
    out = []
    for i, c_raw in enumerate(raw):
        path = ("controllers", i)
        c_raw = _mapping(ctx, path, c_raw)
        kind = _string(ctx, path + ("type",), c_raw.get("type"), CONTROLLER_TYPES)
        fields = SPEED_CONTROL_FIELDS if kind == "speed_control" else BASIC_DAMPING_FIELDS
        c = _fields(ctx, path, c_raw, fields)
        if kind == "speed_control" and not c["B_gain"] > c["B_base"]:
            ctx.fail(path + ("B_gain",), "B_gain must exceed B_base")
        if kind == "speed_control" and c["eta_value"] > 1.0:
            ctx.fail(path + ("eta_value",), "eta_value must lie in [0, 1]")
        out.append(c)
    names = [c["name"] for c in out]
    if len(set(names)) != len(names):
        ctx.fail(("controllers",), f"controller names must be unique, got {names}")
    return out


def _initial_states(ctx, raw, dim) -> list | dict:
    path = ("initial_states",)
    if isinstance(raw, dict):
        spec = _fields(ctx, path, raw, SAMPLER_FIELDS)
        for key in ("q_low", "q_high", "qdot_low", "qdot_high"):
            if spec[key] is None:
                spec[key] = [0.0] * dim
            if len(spec[key]) != dim:
                ctx.fail(path + (key,), f"expected {dim} entries")
        if any(lo > hi for lo, hi in zip(spec["q_low"], spec["q_high"])):
            ctx.fail(path, "q_low must not exceed q_high")
        if any(lo > hi for lo, hi in zip(spec["qdot_low"], spec["qdot_high"])):
            ctx.fail(path, "qdot_low must not exceed qdot_high")
        return spec
    raw = _list(ctx, path, raw)
    out = []
    for i, s in enumerate(raw):
        state = _fields(ctx, path + (i,), s, {"q": (_vec(dim), REQUIRED), "qdot": (_vec(dim), None)})
        if state["qdot"] is None:
            state["qdot"] = [0.0] * dim
        out.append(state)
    return out


def validate(data: Any, source: str | None = None, lines: dict | None = None) -> dict:
    """Validate raw scenario data and return it with every default filled in."""
    ctx = _Context(source, lines or {})
    data = _mapping(ctx, (), data)
    for key in data:
        if key not in SECTIONS:
            ctx.fail((key,), f"unknown section (allowed: {list(SECTIONS)})")
    for key in ("name", "robot", "objective", "controllers", "initial_states"):
        if data.get(key) is None:
            ctx.fail((), f"missing required section {key!r}")
    cfg: dict = {}
    cfg["name"] = _string(ctx, ("name",), data["name"])
    cfg["description"] = _string(ctx, ("description",), data.get("description") or "")
    cfg["seed"] = _integer(ctx, ("seed",), data.get("seed", 0), 0)
    cfg["robot"] = _robot(ctx, data["robot"])
    cfg["tree"], dims = _tree(ctx, data.get("tree"), cfg["robot"])
    objective = _fields(ctx, ("objective",), data["objective"], OBJECTIVE_FIELDS)
    _check_node(ctx, ("objective", "node"), objective["node"], dims)
    if len(objective["target"]) != dims[objective["node"]]:
        ctx.fail(("objective", "target"), f"expected {dims[objective['node']]} entries")
    if not objective["mbar"] > objective["munder"]:
        ctx.fail(("objective", "mbar"), "mbar must exceed munder")
    cfg["objective"] = objective
    cfg["terms"] = _terms(ctx, data.get("terms"), dims, cfg["robot"])
    styles = data.get("fabric_styles", list(FABRIC_STYLES))
    styles = _list(ctx, ("fabric_styles",), styles)
    cfg["fabric_styles"] = [_string(ctx, ("fabric_styles", i), s, FABRIC_STYLES) for i, s in enumerate(styles)]
    if len(set(cfg["fabric_styles"])) != len(cfg["fabric_styles"]):
        ctx.fail(("fabric_styles",), "fabric styles must be unique")
    if "lagrangian" in cfg["fabric_styles"] and any(t["kind"] == "cubby" for t in cfg["terms"]):
        ctx.fail(("fabric_styles",), "cubby terms are geometric only; drop the lagrangian style")
    cfg["sweep"] = _fields(ctx, ("sweep",), data.get("sweep") or {}, SWEEP_FIELDS)
    cfg["controllers"] = _controllers(ctx, data["controllers"])
    if cfg["sweep"]["v_d"] and not any(c["type"] == "speed_control" for c in cfg["controllers"]):
        ctx.fail(("sweep", "v_d"), "a v_d sweep needs a speed_control controller")
    if cfg["sweep"]["obstacle_metric"] and not any(t["kind"] == "obstacle" for t in cfg["terms"]):
        ctx.fail(("sweep", "obstacle_metric"), "an obstacle_metric sweep needs obstacle terms")
    cfg["integrator"] = _fields(ctx, ("integrator",), data.get("integrator") or {}, INTEGRATOR_FIELDS)
    if cfg["integrator"]["duration"] < cfg["integrator"]["dt"]:
        ctx.fail(("integrator", "duration"), "duration must be at least dt")
    cfg["convergence"] = _fields(ctx, ("convergence",), data.get("convergence") or {}, CONVERGENCE_FIELDS)
    cfg["initial_states"] = _initial_states(ctx, data["initial_states"], dims["root"])
    cfg["outputs"] = _fields(ctx, ("outputs",), data.get("outputs") or {}, OUTPUT_FIELDS)
    if cfg["outputs"]["path_space"] == "end_effector" and cfg["robot"]["type"] != "planar_arm":
        ctx.fail(("outputs", "path_space"), "end_effector paths need a planar_arm robot")
    return cfg


def load_scenario(path, overrides: dict | None = None) -> dict:
    """Read, validate and materialize a scenario file.

    ``overrides`` maps dotted keys (``"integrator.dt"``, ``"seed"``) to values
    applied before validation.
    """
    path = Path(path)
    source = str(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ScenarioError(f"cannot read scenario: {err.strerror}", source) from None
    data, lines = parse_text(text, source)
    if overrides:
        data = apply_overrides(data, overrides, source)
    return validate(data, source, lines)


def apply_overrides(data: Any, overrides: dict, source: str | None = None) -> Any:
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a mapping", source)
    data = copy.deepcopy(data)
    for dotted, value in overrides.items():
        if value is None:
            continue
        keys = dotted.split(".")
        box = data
        for key in keys[:-1]:
            if box.get(key) is None:
                box[key] = {}
            box = box[key]
        box[keys[-1]] = value
    return data


def dump_scenario(cfg: dict) -> str:
    """YAML text of a resolved scenario; loading it back gives the same mapping."""
    return yaml.safe_dump(cfg, sort_keys=False, default_flow_style=None, width=100)


def initial_states(cfg: dict) -> list[tuple[np.ndarray, np.ndarray]]:
    """Concrete ``(q0, qdot0)`` pairs; samplers draw from ``cfg['seed']``."""
    spec = cfg["initial_states"]
    if isinstance(spec, list):
        return [(np.array(s["q"], dtype=float), np.array(s["qdot"], dtype=float)) for s in spec]
    rng = np.random.default_rng(cfg["seed"])
    out = []
    for _ in range(spec["count"]):
        q = rng.uniform(spec["q_low"], spec["q_high"])
        qdot = rng.uniform(spec["qdot_low"], spec["qdot_high"])
        out.append((q, qdot))
    return out
