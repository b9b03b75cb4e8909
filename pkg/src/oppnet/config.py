"""Line-oriented scenario files: ``[section]`` headers and ``key = value`` pairs.

Sections are ``[field]``, ``[traffic]``, ``[router]``, ``[sim]`` and any number
of ``[node]`` blocks. A node block may carry ``count = N`` to stamp out N
identical nodes; ids are assigned in file order unless given explicitly.
"""
from __future__ import annotations

import re
from pathlib import Path
from typing import Optional

from .mobility import DEFAULT_TARGET_PROB, NoSolution, bias_sigma_from_quantile
from .scenario import (BiasSpec, FieldSpec, NodeSpec, Point, Rect, RouterParams, ScenarioConfig,
                       TrafficSpec, STATIC_ROLES, validate_scenario)

SECTION_KEYS = {
    "field": {"side"},
    "traffic": {"packet_size", "interval", "ttl"},
    "router": {"router", "snw_copies", "prophet_p0", "prophet_beta", "prophet_alpha"},
    "sim": {"sim_time", "time_step", "seed", "name"},
    "node": {"id", "count", "role", "position", "rf_range", "bit_rate", "buffer_capacity",
             "velocity", "pause_min", "pause_max", "bias_region", "bias_degree", "bias_sigma"},
}
REQUIRED = {
    "field": {"side"},
    "traffic": {"packet_size", "interval", "ttl"},
    "router": {"router"},
    "sim": {"sim_time"},
    "node": {"role", "rf_range", "bit_rate", "buffer_capacity"},
}
ROUTER_ALIASES = {"epidemic": "epidemic", "snw": "snw", "spray-and-wait": "snw", "prophet": "prophet"}

_SECTION = re.compile(r"^\[\s*([A-Za-z_]+)\s*\]$")
_INT = re.compile(r"^[+-]?\d+$")


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _number(text: str, line: int):
    text = text.strip()
    try:
        return int(text) if _INT.match(text) else float(text)
    except ValueError:
        raise ConfigError(f"expected a number, got {text!r}", line) from None


def _numbers(text: str, n: int, line: int) -> list:
    parts = [p for p in text.split(",")]
    if len(parts) != n:
        raise ConfigError(f"expected {n} comma-separated numbers, got {text!r}", line)
    return [_number(p, line) for p in parts]


def _read_blocks(text: str) -> list[tuple[str, int, dict[str, tuple[str, int]]]]:
    blocks: list[tuple[str, int, dict]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SECTION.match(line)
        if m:
            name = m.group(1).lower()
            if name not in SECTION_KEYS:
                raise ConfigError(f"unknown section [{name}]", lineno)
            if name != "node" and any(b[0] == name for b in blocks):
                raise ConfigError(f"duplicate section [{name}]", lineno)
            blocks.append((name, lineno, {}))
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        if not blocks:
            raise ConfigError("key outside of any section", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        name, _, entries = blocks[-1]
        if key not in SECTION_KEYS[name]:
            raise ConfigError(f"unknown key {key!r} in [{name}]", lineno)
        if key in entries:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        entries[key] = (value, lineno)
    return blocks


def _require(name: str, start: int, entries: dict) -> None:
    missing = sorted(REQUIRED[name] - entries.keys())
    if missing:
        raise ConfigError(f"[{name}] missing required key(s): {', '.join(missing)}", start)


def _node_specs(start: int, e: dict, first_id: int) -> list[NodeSpec]:
    _require("node", start, e)

    def num(key, default=None):
        return _number(e[key][0], e[key][1]) if key in e else default

    role = e["role"][0]
    position = None
    if "position" in e:
        position = Point(*_numbers(e["position"][0], 2, e["position"][1]))
    bias = None
    if "bias_region" in e or "bias_degree" in e:
        if "bias_region" not in e or "bias_degree" not in e:
            raise ConfigError("bias_region and bias_degree go together", start)
        region = Rect(*_numbers(e["bias_region"][0], 4, e["bias_region"][1]))
        degree = num("bias_degree")
        sigma = num("bias_sigma")
        if sigma is None:
            try:
                sigma = bias_sigma_from_quantile(degree, DEFAULT_TARGET_PROB)
            except NoSolution:
                raise ConfigError(f"bias_sigma must be given when bias_degree={degree} "
                                  "is outside (0.5, 1)", e["bias_degree"][1]) from None
        bias = BiasSpec(region, degree, sigma)
    elif "bias_sigma" in e:
        raise ConfigError("bias_sigma without bias_region/bias_degree", e["bias_sigma"][1])

    count = num("count", 1)
    if not isinstance(count, int) or count < 1:
        raise ConfigError("count must be an integer >= 1", e["count"][1])
    node_id = num("id", first_id)
    if count > 1 and "id" in e:
        raise ConfigError("id and count > 1 are exclusive", e["id"][1])
    return [NodeSpec(id=node_id + k, role=role, rf_range=num("rf_range"), bit_rate=num("bit_rate"),
                     buffer_capacity=num("buffer_capacity"), position=position,
                     velocity=num("velocity"), pause_min=num("pause_min"), pause_max=num("pause_max"),
                     bias=bias)
            for k in range(count)]


def parse_scenario(text: str, name: Optional[str] = None) -> ScenarioConfig:
    """Parse and validate scenario text. Raises ConfigError or ScenarioError."""
    blocks = _read_blocks(text)
    sections = {b[0]: (b[1], b[2]) for b in blocks if b[0] != "node"}
    for required in ("field", "traffic", "router", "sim"):
        if required not in sections:
            raise ConfigError(f"missing [{required}] section")
    for sname, (start, entries) in sections.items():
        _require(sname, start, entries)

    def get(section, key, default=None):
        start, entries = sections[section]
        if key not in entries:
            return default
        return _number(*entries[key])

    router_text, router_line = sections["router"][1]["router"]
    router = ROUTER_ALIASES.get(router_text.lower())
    if router is None:
        raise ConfigError(f"unknown router {router_text!r}", router_line)
    defaults = RouterParams()
    params = RouterParams(snw_copies=get("router", "snw_copies", defaults.snw_copies),
                          p0=get("router", "prophet_p0", defaults.p0),
                          beta=get("router", "prophet_beta", defaults.beta),
                          alpha=get("router", "prophet_alpha", defaults.alpha))

    nodes: list[NodeSpec] = []
    next_id = 0
    for bname, start, entries in blocks:
        if bname != "node":
            continue
        specs = _node_specs(start, entries, next_id)
        nodes.extend(specs)
        next_id = max(next_id, max(s.id for s in specs) + 1)

    sim_entries = sections["sim"][1]
    cfg = ScenarioConfig(
        field=FieldSpec(get("field", "side")),
        nodes=tuple(nodes),
        traffic=TrafficSpec(packet_size=get("traffic", "packet_size"),
                            generation_interval=get("traffic", "interval"),
                            ttl=get("traffic", "ttl")),
        router=router,
        router_params=params,
        sim_time=get("sim", "sim_time"),
        time_step=get("sim", "time_step", 0.1),
        seed=get("sim", "seed", 0),
        name=sim_entries["name"][0] if "name" in sim_entries else (name or "scenario"),
    )
    if not isinstance(cfg.seed, int):
        raise ConfigError("seed must be an integer", sim_entries["seed"][1])
    return validate_scenario(cfg)


def load_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    return parse_scenario(path.read_text(encoding="utf-8"), name=path.stem)


def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def emit_scenario(cfg: ScenarioConfig) -> str:
    """Render ``cfg`` so that ``parse_scenario(emit_scenario(cfg)) == cfg``."""
    rp = cfg.router_params
    lines = [
        "[field]", f"side = {_fmt(cfg.field.side)}", "",
        "[traffic]", f"packet_size = {_fmt(cfg.traffic.packet_size)}",
        f"interval = {_fmt(cfg.traffic.generation_interval)}", f"ttl = {_fmt(cfg.traffic.ttl)}", "",
        "[router]", f"router = {cfg.router}", f"snw_copies = {rp.snw_copies}",
        f"prophet_p0 = {_fmt(rp.p0)}", f"prophet_beta = {_fmt(rp.beta)}",
        f"prophet_alpha = {_fmt(rp.alpha)}", "",
        "[sim]", f"name = {cfg.name}", f"sim_time = {_fmt(cfg.sim_time)}",
        f"time_step = {_fmt(cfg.time_step)}", f"seed = {cfg.seed}",
    ]
    for n in cfg.nodes:
        lines += ["", "[node]", f"id = {n.id}", f"role = {n.role}"]
        if n.position is not None:
            lines.append(f"position = {_fmt(n.position.x)}, {_fmt(n.position.y)}")
        lines += [f"rf_range = {_fmt(n.rf_range)}", f"bit_rate = {_fmt(n.bit_rate)}",
                  f"buffer_capacity = {_fmt(n.buffer_capacity)}"]
        if n.role not in STATIC_ROLES:
            lines += [f"velocity = {_fmt(n.velocity)}", f"pause_min = {_fmt(n.pause_min)}",
                      f"pause_max = {_fmt(n.pause_max)}"]
        if n.bias is not None:
            r = n.bias.region
            lines += [f"bias_region = {', '.join(_fmt(v) for v in (r.x_min, r.y_min, r.x_max, r.y_max))}",
                      f"bias_degree = {_fmt(n.bias.degree)}", f"bias_sigma = {_fmt(n.bias.sigma)}"]
    return "\n".join(lines) + "\n"
