"""Scenario configuration: JSON schema, embedded presets and validation."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema

from .traffic import concentric_positions

MACS = ("qma", "csma_slotted", "csma_unslotted")
TRAFFIC_KINDS = ("poisson", "alternating", "handshake", "none")


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


_num = {"type": "number"}
_pos_int = {"type": "integer", "minimum": 1}

_TRAFFIC = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": list(TRAFFIC_KINDS)},
        "rate": _num,
        "rates": {"type": "array", "items": _num, "minItems": 1},
        "phase_s": _num,
        "budget": {"type": "integer", "minimum": 0},
        "start_s": _num,
        "sources": {"type": ["array", "null"], "items": {"type": "integer", "minimum": 0}},
    },
}

SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "QMA scenario",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "preset": {"type": "string"},
        "name": {"type": "string", "minLength": 1},
        "topology": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "positions": {"type": "array", "minItems": 2,
                              "items": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}},
                "names": {"type": "array", "items": {"type": "string"}},
                "comm_range": _num,
                "cs_range": {"type": ["number", "null"]},
                "sink": {"type": "integer", "minimum": 0},
            },
        },
        "mac": {"enum": list(MACS)},
        "mac_per_node": {"type": "object", "additionalProperties": {"enum": list(MACS)}},
        "traffic": _TRAFFIC,
        "node_traffic": {"type": "object", "additionalProperties": _TRAFFIC},
        "learning": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "alpha": _num, "gamma": _num, "xi": _num, "q_init": _num,
                "startup_subslots": {"type": ["integer", "null"]},
                "rho_table": {"type": ["array", "null"], "items": _num},
                "fixed_point": {"type": "boolean"},
            },
        },
        "timing": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "subslots": _pos_int, "subslot_ticks": _pos_int, "data_ticks": _pos_int,
                "ack_ticks": _pos_int, "turnaround_ticks": {"type": "integer", "minimum": 0},
                "cca_ticks": _pos_int, "ack_wait_ticks": {"type": "integer", "minimum": 0},
                "backoff_period_ticks": _pos_int, "cfp_fraction": _num,
            },
        },
        "warmup_s": _num,
        "duration_s": {"type": ["number", "null"]},
        "drain_s": _num,
        "handshake_timeout_s": _num,
        "repetitions": {"type": "integer"},
        "seed": {"type": "integer", "minimum": 0},
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": ["string", "null"]},
                "formats": {"type": "array", "items": {"enum": ["json", "csv"]}},
            },
        },
    },
}


@dataclass
class TrafficSpec:
    kind: str = "poisson"
    rate: float = 25.0
    rates: list = field(default_factory=lambda: [1.0, 10.0])
    phase_s: float = 5.0
    budget: int = 1000
    start_s: float = 0.0
    sources: list | None = None   # None: every node except the sink


@dataclass
class TopologySpec:
    positions: list
    comm_range: float
    cs_range: float | None = None
    sink: int = 0
    names: list | None = None


@dataclass
class LearningSpec:
    alpha: float = 0.5
    gamma: float = 0.9
    xi: float = 2.0
    q_init: float = -10.0
    startup_subslots: int | None = None
    rho_table: list | None = None
    fixed_point: bool = True


@dataclass
class TimingSpec:
    subslots: int = 54
    subslot_ticks: int = 133
    data_ticks: int = 266
    ack_ticks: int = 22
    turnaround_ticks: int = 12
    cca_ticks: int = 8
    ack_wait_ticks: int = 54
    backoff_period_ticks: int = 20
    cfp_fraction: float = 0.0


@dataclass
class OutputSpec:
    dir: str | None = None
    formats: list = field(default_factory=lambda: ["json", "csv"])


@dataclass
class ScenarioConfig:
    name: str
    topology: TopologySpec
    mac: str = "qma"
    mac_per_node: dict = field(default_factory=dict)
    traffic: TrafficSpec = field(default_factory=TrafficSpec)
    node_traffic: dict = field(default_factory=dict)
    learning: LearningSpec = field(default_factory=LearningSpec)
    timing: TimingSpec = field(default_factory=TimingSpec)
    warmup_s: float = 0.0
    duration_s: float | None = None
    drain_s: float = 10.0
    handshake_timeout_s: float = 1.0
    repetitions: int = 1
    seed: int = 1
    output: OutputSpec = field(default_factory=OutputSpec)

    def mac_of(self, node: int) -> str:
        return self.mac_per_node.get(node, self.mac)

    def traffic_of(self, node: int) -> TrafficSpec | None:
        if node in self.node_traffic:
            return self.node_traffic[node]
        t = self.traffic
        if node == self.topology.sink and t.sources is None:
            return None
        if t.sources is not None and node not in t.sources:
            return None
        return t

    def replace(self, **changes) -> "ScenarioConfig":
        c = copy.deepcopy(self)
        for k, v in changes.items():
            setattr(c, k, v)
        return c


# --- presets ------------------------------------------------------------

SPACING = 10.0
RANGE = 12.0
# DSME superframe: 7 of the 15 non-beacon slots form the CFP, modelled as dead time
DSME_CFP = 7 / 15


def _hidden_node() -> dict:
    return {
        "name": "hidden-node",
        "topology": {"positions": [[-SPACING, 0], [0, 0], [SPACING, 0]],
                     "names": ["A", "B", "C"], "comm_range": RANGE, "sink": 1},
        "traffic": {"kind": "poisson", "rate": 25.0, "budget": 1000, "sources": [0, 2]},
        "timing": {"cfp_fraction": DSME_CFP},
    }


def _hidden_node_adaptive() -> dict:
    d = _hidden_node()
    d["name"] = "hidden-node-adaptive"
    d["node_traffic"] = {
        "0": {"kind": "alternating", "rates": [10.0, 100.0], "phase_s": 100.0, "budget": 100_000},
        "2": {"kind": "poisson", "rate": 25.0, "budget": 100_000, "start_s": 100.0},
    }
    d["duration_s"] = 500.0
    return d


def _tree10() -> dict:
    # depth-4 tree: only parents, children and siblings are within range
    pos = [[0, 0], [-8, -8], [8, -8], [-14, -16], [-2, -16], [8, -19],
           [-14, -27], [-2, -27], [8, -30], [-14, -38]]
    return {
        "name": "tree10",
        "topology": {"positions": pos, "comm_range": RANGE, "sink": 0},
        "traffic": {"kind": "poisson", "rate": 10.0, "budget": 1000},
        "timing": {"cfp_fraction": DSME_CFP},
    }


def _star17() -> dict:
    pos = [[0, 0]] + [[round(8 * math.cos(2 * math.pi * k / 16), 9),
                       round(8 * math.sin(2 * math.pi * k / 16), 9)] for k in range(16)]
    return {
        "name": "star17",
        "topology": {"positions": pos, "comm_range": 20.0, "sink": 0},
        "traffic": {"kind": "poisson", "rate": 10.0, "budget": 1000},
        "timing": {"cfp_fraction": DSME_CFP},
    }


def _concentric(rings: int) -> dict:
    pos = [list(p) for p in concentric_positions(rings, SPACING)]
    return {
        "name": f"concentric{rings}",
        "topology": {"positions": pos, "comm_range": RANGE, "sink": 0},
        "traffic": {"kind": "handshake", "rates": [1.0, 10.0], "phase_s": 5.0},
        "timing": {"cfp_fraction": DSME_CFP},
        "warmup_s": 200.0,
        "duration_s": 400.0,
    }


PRESETS = {
    "hidden-node": _hidden_node,
    "hidden-node-adaptive": _hidden_node_adaptive,
    "tree10": _tree10,
    "star17": _star17,
    **{f"concentric{k}": (lambda k=k: _concentric(k)) for k in range(1, 5)},
}


def preset_dict(name: str) -> dict:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError("preset", f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


# --- validation -----------------------------------------------------------

def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("node_traffic", "mac_per_node"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _schema_check(data: dict) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        path = ".".join(str(p) for p in e.absolute_path) or "<root>"
        if e.validator == "additionalProperties":
            extra = sorted(set(e.instance) - set(e.schema.get("properties", {})))
            raise ConfigError(".".join(filter(None, [path if path != "<root>" else "", extra[0]])),
                              "unknown key")
        raise ConfigError(path, e.message)


def _int_keys(d: dict, path: str) -> dict:
    out = {}
    for k, v in d.items():
        try:
            out[int(k)] = v
        except ValueError:
            raise ConfigError(f"{path}.{k}", "node keys must be integers") from None
    return out


def _traffic(d: dict, path: str) -> TrafficSpec:
    t = TrafficSpec(**d)
    if t.kind in ("poisson",) and t.rate <= 0:
        raise ConfigError(f"{path}.rate", "rate must be > 0")
    if t.kind in ("alternating", "handshake"):
        if any(r <= 0 for r in t.rates):
            raise ConfigError(f"{path}.rates", "rates must be > 0")
        if t.phase_s <= 0:
            raise ConfigError(f"{path}.phase_s", "phase length must be > 0")
    if t.kind in ("poisson", "alternating") and t.budget <= 0 and "budget" in d:
        raise ConfigError(f"{path}.budget", "budget must be > 0")
    if t.start_s < 0:
        raise ConfigError(f"{path}.start_s", "start must be >= 0")
    return t


def from_dict(data: dict) -> ScenarioConfig:
    """Validate a raw config (optionally based on a preset) and build the dataclass."""
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    _schema_check(data)
    if "preset" in data:
        base = preset_dict(data["preset"])
        data = _merge(base, {k: v for k, v in data.items() if k != "preset"})
    if "topology" not in data or "positions" not in data["topology"]:
        raise ConfigError("topology.positions", "required (or use a preset)")
    if "comm_range" not in data["topology"]:
        raise ConfigError("topology.comm_range", "required")
    name = data.get("name", "custom")

    topo = TopologySpec(**data["topology"])
    n = len(topo.positions)
    if topo.comm_range <= 0:
        raise ConfigError("topology.comm_range", "must be > 0")
    if topo.cs_range is not None and topo.cs_range <= 0:
        raise ConfigError("topology.cs_range", "must be > 0")
    if topo.sink >= n:
        raise ConfigError("topology.sink", f"node {topo.sink} does not exist ({n} nodes)")
    if topo.names is not None and len(topo.names) != n:
        raise ConfigError("topology.names", "needs one name per position")

    learning = LearningSpec(**data.get("learning", {}))
    if not 0.0 <= learning.alpha <= 1.0:
        raise ConfigError("learning.alpha", "alpha must lie in [0, 1]")
    if not 0.0 <= learning.gamma < 1.0:
        raise ConfigError("learning.gamma", "gamma must satisfy 0 <= gamma < 1 "
                          "(the subslot process never terminates, so gamma=1 diverges)")
    if learning.xi < 0:
        raise ConfigError("learning.xi", "xi must be >= 0")
    if learning.startup_subslots is not None and learning.startup_subslots < 0:
        raise ConfigError("learning.startup_subslots", "must be >= 0")
    if learning.rho_table is not None:
        if len(learning.rho_table) != 9 or any(not 0 <= r <= 1 for r in learning.rho_table):
            raise ConfigError("learning.rho_table", "needs 9 probabilities (differences 0..8)")

    timing = TimingSpec(**data.get("timing", {}))
    if not 0.0 <= timing.cfp_fraction < 1.0:
        raise ConfigError("timing.cfp_fraction", "must lie in [0, 1)")
    if timing.ack_wait_ticks < timing.turnaround_ticks + timing.ack_ticks:
        raise ConfigError("timing.ack_wait_ticks", "must cover turnaround plus ACK airtime")

    traffic = _traffic(data.get("traffic", {}), "traffic")
    node_traffic = {k: _traffic(v, f"node_traffic.{k}")
                    for k, v in _int_keys(data.get("node_traffic", {}), "node_traffic").items()}
    mac_per_node = _int_keys(data.get("mac_per_node", {}), "mac_per_node")
    for k in list(node_traffic) + list(mac_per_node):
        if k >= n:
            raise ConfigError(f"node_traffic.{k}" if k in node_traffic else f"mac_per_node.{k}",
                              f"node {k} does not exist ({n} nodes)")
    for s in traffic.sources or []:
        if s >= n:
            raise ConfigError("traffic.sources", f"node {s} does not exist ({n} nodes)")

    reps = data.get("repetitions", 1)
    if reps < 1:
        raise ConfigError("repetitions", "must be >= 1")
    for key in ("warmup_s", "drain_s"):
        if data.get(key, 0) < 0:
            raise ConfigError(key, "must be >= 0")
    if data.get("handshake_timeout_s", 1.0) <= 0:
        raise ConfigError("handshake_timeout_s", "must be > 0")
    dur = data.get("duration_s")
    if dur is not None and dur <= 0:
        raise ConfigError("duration_s", "must be > 0")
    if traffic.kind == "handshake" and dur is None:
        raise ConfigError("duration_s", "handshake traffic needs a duration")

    return ScenarioConfig(
        name=name, topology=topo, mac=data.get("mac", "qma"), mac_per_node=mac_per_node,
        traffic=traffic, node_traffic=node_traffic, learning=learning, timing=timing,
        warmup_s=data.get("warmup_s", 0.0), duration_s=dur, drain_s=data.get("drain_s", 10.0),
        handshake_timeout_s=data.get("handshake_timeout_s", 1.0),
        repetitions=reps, seed=data.get("seed", 1), output=OutputSpec(**data.get("output", {})),
    )


def load_config(path: str | Path) -> ScenarioConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(str(p), "file not found")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{p}:{e.lineno}", f"invalid JSON ({e.msg})") from None
    return from_dict(data)


def preset(name: str, **overrides) -> ScenarioConfig:
    """Preset config with top-level or nested overrides (dicts are merged)."""
    return from_dict(_merge({"preset": name}, overrides))
