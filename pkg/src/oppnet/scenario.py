"""Scenario domain types, validation and per-consumer random streams.

Coordinates live on ``[0, side]^2`` with the origin at the lower-left corner.
Sizes are bytes, rates bytes per second, times seconds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

STATIC_SOURCE = "static-source"
STATIC_DESTINATION = "static-destination"
HELPER = "helper"
SATELLITE = "satellite"
ROLES = (STATIC_SOURCE, STATIC_DESTINATION, HELPER, SATELLITE)
STATIC_ROLES = (STATIC_SOURCE, STATIC_DESTINATION)

EPIDEMIC = "epidemic"
SPRAY_AND_WAIT = "snw"
PROPHET = "prophet"
ROUTERS = (EPIDEMIC, SPRAY_AND_WAIT, PROPHET)

# stream id reserved for the traffic generator; node streams use the node id
TRAFFIC_STREAM = 2**31 - 1

KIB = 1024


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def distance(self, other: "Point") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class FieldSpec:
    side: float

    @property
    def area(self) -> float:
        return self.side * self.side

    def contains(self, p: Point) -> bool:
        return 0.0 <= p.x <= self.side and 0.0 <= p.y <= self.side


@dataclass(frozen=True)
class Rect:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def contains(self, p: Point) -> bool:
        return self.x_min <= p.x <= self.x_max and self.y_min <= p.y <= self.y_max

    def inside(self, fld: FieldSpec) -> bool:
        return (0.0 <= self.x_min and 0.0 <= self.y_min
                and self.x_max <= fld.side and self.y_max <= fld.side)


@dataclass(frozen=True)
class BiasSpec:
    region: Rect
    degree: float
    sigma: float


@dataclass(frozen=True)
class NodeSpec:
    id: int
    role: str
    rf_range: float
    bit_rate: float
    buffer_capacity: int
    position: Optional[Point] = None
    velocity: Optional[float] = None
    pause_min: Optional[float] = None
    pause_max: Optional[float] = None
    bias: Optional[BiasSpec] = None

    @property
    def is_static(self) -> bool:
        return self.role in STATIC_ROLES


@dataclass(frozen=True)
class TrafficSpec:
    packet_size: int
    generation_interval: float
    ttl: float

    @property
    def rate(self) -> float:
        """Offered load per endpoint in bytes/s (lambda)."""
        return self.packet_size / self.generation_interval


@dataclass(frozen=True)
class RouterParams:
    snw_copies: int = 6
    p0: float = 0.75
    beta: float = 0.25
    alpha: float = 0.98


@dataclass(frozen=True)
class ScenarioConfig:
    field: FieldSpec
    nodes: tuple[NodeSpec, ...]
    traffic: TrafficSpec
    router: str = EPIDEMIC
    router_params: RouterParams = field(default_factory=RouterParams)
    sim_time: float = 30000.0
    time_step: float = 0.1
    seed: int = 0
    name: str = "scenario"

    @property
    def source(self) -> NodeSpec:
        return next(n for n in self.nodes if n.role == STATIC_SOURCE)

    @property
    def destination(self) -> NodeSpec:
        return next(n for n in self.nodes if n.role == STATIC_DESTINATION)

    def node(self, node_id: int) -> NodeSpec:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)


class ScenarioError(ValueError):
    """Raised by :func:`validate_scenario`; ``violations`` holds (kind, field, message)."""

    def __init__(self, violations: list[tuple[str, str, str]]):
        self.violations = violations
        lines = [f"{kind}: {fld}: {msg}" for kind, fld, msg in violations]
        super().__init__("invalid scenario:\n  " + "\n  ".join(lines))

    @property
    def kinds(self) -> set[str]:
        return {v[0] for v in self.violations}


INVALID_GEOMETRY = "invalid-geometry"
INVALID_ROLES = "invalid-roles"
INVALID_PARAMETER = "invalid-parameter"


def _positive(value, name, out):
    if value is None or not value > 0:
        out.append((INVALID_PARAMETER, name, f"must be > 0, got {value!r}"))


def _check_node(n: NodeSpec, fld: FieldSpec, out: list) -> None:
    tag = f"node[{n.id}]"
    if n.role not in ROLES:
        out.append((INVALID_ROLES, f"{tag}.role", f"unknown role {n.role!r}"))
        return
    _positive(n.rf_range, f"{tag}.rf_range", out)
    _positive(n.bit_rate, f"{tag}.bit_rate", out)
    _positive(n.buffer_capacity, f"{tag}.buffer_capacity", out)

    if n.is_static:
        if n.position is None:
            out.append((INVALID_GEOMETRY, f"{tag}.position", "static node needs a position"))
        elif fld.side > 0 and not fld.contains(n.position):
            out.append((INVALID_GEOMETRY, f"{tag}.position", f"{n.position} outside field"))
        for attr in ("velocity", "pause_min", "pause_max", "bias"):
            if getattr(n, attr) is not None:
                out.append((INVALID_PARAMETER, f"{tag}.{attr}", "not allowed on a static node"))
        return

    if n.position is not None:
        out.append((INVALID_PARAMETER, f"{tag}.position", "mobile nodes have no fixed position"))
    _positive(n.velocity, f"{tag}.velocity", out)
    if n.pause_min is None or n.pause_max is None or n.pause_min < 0:
        out.append((INVALID_PARAMETER, f"{tag}.pause_min", "pause bounds must be >= 0"))
    elif n.pause_min > n.pause_max:
        out.append((INVALID_PARAMETER, f"{tag}.pause_max", "pause_min > pause_max"))

    if n.role == HELPER and n.bias is not None:
        out.append((INVALID_PARAMETER, f"{tag}.bias", "helper nodes are unbiased"))
    if n.role == SATELLITE:
        b = n.bias
        if b is None:
            out.append((INVALID_PARAMETER, f"{tag}.bias", "satellite node needs a bias"))
            return
        r = b.region
        if not (r.x_min < r.x_max and r.y_min < r.y_max):
            out.append((INVALID_GEOMETRY, f"{tag}.bias_region", f"degenerate rectangle {r}"))
        elif fld.side > 0 and not r.inside(fld):
            out.append((INVALID_GEOMETRY, f"{tag}.bias_region", f"{r} not inside field"))
        if not 0.0 <= b.degree <= 1.0:
            out.append((INVALID_PARAMETER, f"{tag}.bias_degree", f"must be in [0, 1], got {b.degree}"))
        _positive(b.sigma, f"{tag}.bias_sigma", out)


def validate_scenario(cfg: ScenarioConfig) -> ScenarioConfig:
    """Return ``cfg`` unchanged or raise :class:`ScenarioError` listing every violation."""
    out: list[tuple[str, str, str]] = []
    _positive(cfg.field.side, "field.side", out)

    ids = [n.id for n in cfg.nodes]
    if len(set(ids)) != len(ids):
        out.append((INVALID_ROLES, "node.id", "node ids must be unique"))
    if any(i < 0 for i in ids):
        out.append((INVALID_PARAMETER, "node.id", "node ids must be non-negative"))
    for role in STATIC_ROLES:
        count = sum(n.role == role for n in cfg.nodes)
        if count != 1:
            out.append((INVALID_ROLES, "node.role", f"need exactly one {role}, found {count}"))
    for n in cfg.nodes:
        _check_node(n, cfg.field, out)

    t = cfg.traffic
    _positive(t.packet_size, "traffic.packet_size", out)
    _positive(t.generation_interval, "traffic.interval", out)
    _positive(t.ttl, "traffic.ttl", out)

    if cfg.router not in ROUTERS:
        out.append((INVALID_PARAMETER, "router.router", f"unknown router {cfg.router!r}"))
    rp = cfg.router_params
    if not (isinstance(rp.snw_copies, int) and rp.snw_copies >= 1):
        out.append((INVALID_PARAMETER, "router.snw_copies", "must be an integer >= 1"))
    for name in ("p0", "beta", "alpha"):
        v = getattr(rp, name)
        if not 0.0 < v < 1.0:
            out.append((INVALID_PARAMETER, f"router.prophet_{name}", f"must be in (0, 1), got {v}"))

    _positive(cfg.sim_time, "sim.sim_time", out)
    if not 0.0 < cfg.time_step <= 1.0:
        out.append((INVALID_PARAMETER, "sim.time_step", f"must be in (0, 1], got {cfg.time_step}"))

    if out:
        raise ScenarioError(out)
    return cfg


def rng_stream(seed: int, stream_id: int) -> np.random.Generator:
    """Independent PCG64 stream keyed by ``(seed, stream_id)``.

    PCG64 output and SeedSequence hashing are fixed by numpy across platforms,
    so the same key always yields the same variates.
    """
    ss = np.random.SeedSequence(entropy=seed & 0xFFFF_FFFF_FFFF_FFFF, spawn_key=(stream_id,))
    return np.random.Generator(np.random.PCG64(ss))
