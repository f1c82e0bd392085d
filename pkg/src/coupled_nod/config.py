"""JSON run configuration: defaults, validation, dotted overrides, scenario building.

A config has four sections::

    {"scenario": {...}, "integrator": {...}, "safety": {...}, "bifurcation": {...}}

Missing keys take the defaults of :func:`default_config`.  ``normalize``
returns a canonical dict (all keys present, numbers as floats/ints), so a
config written by ``dump-defaults`` re-reads to the same value.
"""
from __future__ import annotations

import copy
import json
from dataclasses import fields
from importlib import resources

import numpy as np

from .engine import WAYPOINT_MODES, EfficiencyConfig, Scenario
from .environment import TrashField
from .integrator import EVENT_KINDS, Event, IntegratorConfig
from .model import AgentParams, AgentState, mirrored_patches
from .safety import SafetyConfig

TRASH_STREAM = 0x7A5  # keeps initial trash placement independent of the run's streams
SHIPPED = ("fig4", "fig5", "declustering", "single_agent", "bifurcation_u", "bifurcation_b")


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


def _dc_defaults(cls) -> dict:
    inst = cls()
    return {f.name: getattr(inst, f.name) for f in fields(cls)}


def default_config() -> dict:
    params = AgentParams().to_dict()
    return {
        "scenario": {
            "name": "default",
            "seed": 0,
            "waypoints": "independent",
            "patches": {"inner": 0.1, "y_bounds": [-0.5, 0.5]},
            "efficiency": _dc_defaults(EfficiencyConfig),
            "agent_defaults": params,
            "agents": [{"label": "agent0", "params": {}, "z0": 0.5, "x0": 0.6, "y0": 0.0}],
            "trash": {"patch1": 0, "patch2": 0},
            "events": [],
        },
        "integrator": _dc_defaults(IntegratorConfig),
        "safety": _dc_defaults(SafetyConfig),
        "bifurcation": {
            "params": dict(params, K_x=3.0, u=1.3, b=0.0),
            "rho": 0.5,
            "free_param": "b",
            "range": [-1.0, 1.0],
            "sweep": {"param": "u", "values": [1.05, 1.1, 1.2, 1.3, 1.4, 1.5],
                      "b_range": [-1.0, 1.0]},
        },
    }


# ------------------------------------------------------------------ parsing

def _num(value, path, *, integer=False, positive=False, nonneg=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if not np.isfinite(value):
        raise ConfigError(path, "must be finite")
    if integer:
        if int(value) != value:
            raise ConfigError(path, f"expected an integer, got {value!r}")
        value = int(value)
    else:
        value = float(value)
    if positive and value <= 0:
        raise ConfigError(path, "must be > 0")
    if nonneg and value < 0:
        raise ConfigError(path, "must be >= 0")
    return value


def _section(raw: dict, key: str, defaults: dict, path: str) -> dict:
    sub = raw.get(key, {})
    if not isinstance(sub, dict):
        raise ConfigError(f"{path}{key}", "expected an object")
    unknown = set(sub) - set(defaults)
    if unknown:
        raise ConfigError(f"{path}{key}.{sorted(unknown)[0]}", "unknown key")
    return sub


def _params(raw: dict, base: dict, path: str) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError(path, "expected an object")
    out = dict(base)
    for k, v in raw.items():
        if k not in base:
            raise ConfigError(f"{path}.{k}", "unknown agent parameter")
        out[k] = _num(v, f"{path}.{k}", positive=(k != "b"))
    return out


def normalize(raw: dict) -> dict:
    """Fill defaults, type-check and validate; raise ConfigError naming the field."""
    if not isinstance(raw, dict):
        raise ConfigError("", "config must be a JSON object")
    d = default_config()
    unknown = set(raw) - set(d)
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown section")
    out = {}

    sc_raw = _section(raw, "scenario", d["scenario"], "")
    sd = d["scenario"]
    sc = {}
    sc["name"] = str(sc_raw.get("name", sd["name"]))
    seed = _num(sc_raw.get("seed", sd["seed"]), "scenario.seed", integer=True, nonneg=True)
    if seed >= 2**64:
        raise ConfigError("scenario.seed", "must fit in 64 bits")
    sc["seed"] = seed
    wp = sc_raw.get("waypoints", sd["waypoints"])
    if wp not in WAYPOINT_MODES:
        raise ConfigError("scenario.waypoints", f"must be one of {list(WAYPOINT_MODES)}")
    sc["waypoints"] = wp

    pr = _section(sc_raw, "patches", sd["patches"], "scenario.")
    inner = _num(pr.get("inner", sd["patches"]["inner"]), "scenario.patches.inner", nonneg=True)
    yb = pr.get("y_bounds", sd["patches"]["y_bounds"])
    if not isinstance(yb, list) or len(yb) != 2:
        raise ConfigError("scenario.patches.y_bounds", "expected [low, high]")
    yb = [_num(v, f"scenario.patches.y_bounds[{i}]") for i, v in enumerate(yb)]
    if not yb[0] < yb[1]:
        raise ConfigError("scenario.patches.y_bounds", "need low < high")
    sc["patches"] = {"inner": inner, "y_bounds": yb}

    er = _section(sc_raw, "efficiency", sd["efficiency"], "scenario.")
    sc["efficiency"] = {k: _num(er.get(k, v), f"scenario.efficiency.{k}", positive=True)
                        for k, v in sd["efficiency"].items()}

    base = _params(sc_raw.get("agent_defaults", {}), sd["agent_defaults"],
                   "scenario.agent_defaults")
    sc["agent_defaults"] = base
    if inner >= base["l"]:
        raise ConfigError("scenario.patches.inner", "must be smaller than l")
    agents_raw = sc_raw.get("agents", sd["agents"])
    if not isinstance(agents_raw, list) or not agents_raw:
        raise ConfigError("scenario.agents", "need a non-empty list of agents")
    agents = []
    for i, a in enumerate(agents_raw):
        p = f"scenario.agents[{i}]"
        if not isinstance(a, dict):
            raise ConfigError(p, "expected an object")
        bad = set(a) - {"label", "params", "z0", "x0", "y0"}
        if bad:
            raise ConfigError(f"{p}.{sorted(bad)[0]}", "unknown key")
        ag = {
            "label": str(a.get("label", f"agent{i}")),
            "params": {k: v for k, v in _params(a.get("params", {}), base, f"{p}.params").items()
                       if k in a.get("params", {})},
            "z0": _num(a.get("z0", 0.5 if a.get("x0", 0.6) >= 0 else -0.5), f"{p}.z0"),
            "x0": _num(a.get("x0", 0.6), f"{p}.x0"),
            "y0": _num(a.get("y0", 0.0), f"{p}.y0"),
        }
        if ag["z0"] == 0 or np.sign(ag["z0"]) != np.sign(ag["x0"]):
            raise ConfigError(p, "initial opinion and position must have the same non-zero sign")
        agents.append(ag)
    sc["agents"] = agents

    tr = _section(sc_raw, "trash", sd["trash"], "scenario.")
    sc["trash"] = {k: _num(tr.get(k, v), f"scenario.trash.{k}", integer=True, nonneg=True)
                   for k, v in sd["trash"].items()}

    ev_raw = sc_raw.get("events", [])
    if not isinstance(ev_raw, list):
        raise ConfigError("scenario.events", "expected a list")
    events = []
    for i, e in enumerate(ev_raw):
        p = f"scenario.events[{i}]"
        if not isinstance(e, dict) or set(e) != {"time", "kind", "target", "value"}:
            raise ConfigError(p, "expected {time, kind, target, value}")
        if e["kind"] not in EVENT_KINDS:
            raise ConfigError(f"{p}.kind", f"must be one of {list(EVENT_KINDS)}")
        ev = {"time": _num(e["time"], f"{p}.time", nonneg=True), "kind": e["kind"],
              "target": _num(e["target"], f"{p}.target", integer=True, nonneg=True)}
        if e["kind"] == "add_trash":
            ev["value"] = _num(e["value"], f"{p}.value", integer=True, nonneg=True)
            if ev["target"] not in (1, 2):
                raise ConfigError(f"{p}.target", "add_trash target is a patch id (1 or 2)")
        else:
            ev["value"] = _num(e["value"], f"{p}.value", positive=True)
            if ev["target"] >= len(agents):
                raise ConfigError(f"{p}.target", "agent index out of range")
        events.append(ev)
    sc["events"] = events
    out["scenario"] = sc

    ir = _section(raw, "integrator", d["integrator"], "")
    out["integrator"] = {
        "dt": _num(ir.get("dt", d["integrator"]["dt"]), "integrator.dt", positive=True),
        "t_end": _num(ir.get("t_end", d["integrator"]["t_end"]), "integrator.t_end", nonneg=True),
        "arrival_tol": _num(ir.get("arrival_tol", d["integrator"]["arrival_tol"]),
                            "integrator.arrival_tol", positive=True),
    }

    sr = _section(raw, "safety", d["safety"], "")
    ds = d["safety"]
    enabled = sr.get("enabled", ds["enabled"])
    if not isinstance(enabled, bool):
        raise ConfigError("safety.enabled", "expected true or false")
    out["safety"] = {
        "agent_radius": _num(sr.get("agent_radius", ds["agent_radius"]), "safety.agent_radius",
                             positive=True),
        "margin": _num(sr.get("margin", ds["margin"]), "safety.margin", nonneg=True),
        "gain_alpha": _num(sr.get("gain_alpha", ds["gain_alpha"]), "safety.gain_alpha",
                           positive=True),
        "max_sweeps": _num(sr.get("max_sweeps", ds["max_sweeps"]), "safety.max_sweeps",
                           integer=True, positive=True),
        "window": _num(sr.get("window", ds["window"]), "safety.window", integer=True,
                       positive=True),
        "enabled": enabled,
    }

    br = _section(raw, "bifurcation", d["bifurcation"], "")
    db = d["bifurcation"]
    bif = {"params": _params(br.get("params", {}), db["params"], "bifurcation.params")}
    bif["rho"] = _num(br.get("rho", db["rho"]), "bifurcation.rho", nonneg=True)
    fp = br.get("free_param", db["free_param"])
    if fp not in ("u", "b"):
        raise ConfigError("bifurcation.free_param", "must be 'u' or 'b'")
    bif["free_param"] = fp
    rng = br.get("range", db["range"])
    if not isinstance(rng, list) or len(rng) != 2:
        raise ConfigError("bifurcation.range", "expected [low, high]")
    rng = [_num(v, f"bifurcation.range[{i}]") for i, v in enumerate(rng)]
    if not rng[0] < rng[1]:
        raise ConfigError("bifurcation.range", "need low < high")
    if fp == "u" and rng[0] <= 0:
        raise ConfigError("bifurcation.range", "u must stay positive")
    bif["range"] = rng
    sw = br.get("sweep", db["sweep"])
    if not isinstance(sw, dict) or set(sw) - {"param", "values", "b_range"}:
        raise ConfigError("bifurcation.sweep", "expected {param, values, b_range}")
    sp = sw.get("param", db["sweep"]["param"])
    if sp not in ("u", "K_x"):
        raise ConfigError("bifurcation.sweep.param", "must be 'u' or 'K_x'")
    vals = sw.get("values", db["sweep"]["values"])
    if not isinstance(vals, list) or not vals:
        raise ConfigError("bifurcation.sweep.values", "need a non-empty list")
    br_ = sw.get("b_range", db["sweep"]["b_range"])
    if not isinstance(br_, list) or len(br_) != 2:
        raise ConfigError("bifurcation.sweep.b_range", "expected [low, high]")
    br_ = [_num(v, f"bifurcation.sweep.b_range[{i}]") for i, v in enumerate(br_)]
    if not br_[0] < br_[1]:
        raise ConfigError("bifurcation.sweep.b_range", "need low < high")
    bif["sweep"] = {"param": sp, "values": [_num(v, f"bifurcation.sweep.values[{i}]",
                                                  positive=True) for i, v in enumerate(vals)],
                    "b_range": br_}
    out["bifurcation"] = bif
    return out


# --------------------------------------------------------------- overrides

def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(raw: dict, assignment: str) -> dict:
    """Apply ``a.b.0.c=value`` to a raw config (value parsed as JSON when possible)."""
    if "=" not in assignment:
        raise ConfigError(assignment, "override must look like key=value")
    key, text = assignment.split("=", 1)
    parts = key.strip().split(".")
    if not all(parts):
        raise ConfigError(key, "empty path component")
    node = raw
    for i, part in enumerate(parts[:-1]):
        nxt_is_index = parts[i + 1].isdigit()
        if isinstance(node, list):
            idx = int(part) if part.isdigit() else None
            if idx is None or idx >= len(node):
                raise ConfigError(".".join(parts[:i + 1]), "list index out of range")
            node = node[idx]
        else:
            if part not in node:
                node[part] = [] if nxt_is_index else {}
            node = node[part]
    last = parts[-1]
    value = _parse_value(text)
    if isinstance(node, list):
        if not last.isdigit() or int(last) > len(node):
            raise ConfigError(key, "list index out of range")
        if int(last) == len(node):
            node.append(value)
        else:
            node[int(last)] = value
    elif isinstance(node, dict):
        node[last] = value
    else:
        raise ConfigError(key, "cannot index into a scalar")
    return raw


def merged_with_defaults(raw: dict) -> dict:
    """Raw config laid over the defaults, without validation (used before overrides)."""
    base = default_config()

    def merge(a, b):
        for k, v in b.items():
            if isinstance(v, dict) and isinstance(a.get(k), dict) and k not in (
                    "params", "trash"):
                merge(a[k], v)
            else:
                a[k] = copy.deepcopy(v)
        return a

    return merge(base, raw)


def load_config(path, overrides=()) -> dict:
    """Read, override and normalize a config file.

    JSON syntax errors become ConfigError with line and column.
    """
    with open(path) as fh:
        text = fh.read()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from None
    if not isinstance(raw, dict):
        raise ConfigError("", "config must be a JSON object")
    raw = merged_with_defaults(raw)
    for o in overrides:
        apply_override(raw, o)
    return normalize(raw)


def shipped_config_path(name: str):
    if name not in SHIPPED:
        raise KeyError(f"no shipped config {name!r}; choose from {SHIPPED}")
    return resources.files("coupled_nod") / "configs" / f"{name}.json"


def load_shipped(name: str, overrides=()) -> dict:
    with resources.as_file(shipped_config_path(name)) as p:
        return load_config(p, overrides)


def dumps(cfg: dict) -> str:
    return json.dumps(cfg, indent=2, sort_keys=True) + "\n"


# ------------------------------------------------------------ construction

def build_scenario(cfg: dict) -> Scenario:
    cfg = normalize(cfg)
    sc = cfg["scenario"]
    base = sc["agent_defaults"]
    patches = mirrored_patches(sc["patches"]["inner"], l=base["l"],
                               y_bounds=tuple(sc["patches"]["y_bounds"]))
    agents = []
    for a in sc["agents"]:
        params = AgentParams(**dict(base, **a["params"]))
        agents.append((params, AgentState(z=a["z0"], x=a["x0"], y=a["y0"])))
    rng = np.random.default_rng([sc["seed"], TRASH_STREAM])
    trash = TrashField.uniform(patches, {1: sc["trash"]["patch1"], 2: sc["trash"]["patch2"]}, rng)
    events = [Event(e["time"], e["kind"], e["target"], e["value"]) for e in sc["events"]]
    scenario = Scenario(
        patches=patches, agents=agents, trash=trash, events=events,
        integrator=IntegratorConfig(**cfg["integrator"]),
        safety=SafetyConfig(**cfg["safety"]),
        seed=sc["seed"],
        efficiency=EfficiencyConfig(**sc["efficiency"]),
        labels=[a["label"] for a in sc["agents"]],
        waypoints=sc["waypoints"],
    )
    try:
        scenario.validate()
    except ValueError as exc:
        raise ConfigError("scenario", str(exc)) from None
    return scenario


def bifurcation_params(cfg: dict) -> tuple[AgentParams, float]:
    b = cfg["bifurcation"]
    return AgentParams(**b["params"]), b["rho"]
