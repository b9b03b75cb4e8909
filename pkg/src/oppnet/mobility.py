"""Random Waypoint and affinity-biased waypoint mobility."""
from __future__ import annotations

from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .scenario import FieldSpec, NodeSpec, Point, BiasSpec, Rect, SATELLITE

# untruncated quantile used to calibrate sigma when a config leaves it unset
DEFAULT_TARGET_PROB = 0.725
SELECTOR_MEAN = 0.5

_STD_NORMAL = NormalDist()


@dataclass(frozen=True)
class MobilityState:
    origin: Point
    target: Point
    leg_start: float
    leg_arrival: float
    pause_until: float
    velocity: float


def _pdf_factor(u: float, a: float) -> float:
    return u * u - a * a / 4.0


def rwp_pdf(p: Point, fld: FieldSpec) -> float:
    """Long-run RWP spatial density at ``p`` (per square metre)."""
    if not fld.contains(p):
        raise ValueError(f"point {p} outside field of side {fld.side}")
    a = fld.side
    h = a / 2.0
    value = 36.0 / a**6 * _pdf_factor(p.x - h, a) * _pdf_factor(p.y - h, a)
    # factors are <= 0 on the field; clamp rounding noise at the border
    return value if value > 0.0 else 0.0


def next_waypoint_rwp(rng: np.random.Generator, fld: FieldSpec) -> Point:
    x, y = rng.random(2) * fld.side
    return Point(float(x), float(y))


class NoSolution(ValueError):
    pass


def bias_sigma_from_quantile(degree: float, target_prob: float, tol: float = 1e-9) -> float:
    """Sigma of Normal(0.5, sigma) with P(r <= degree) = target_prob, by bisection."""
    if not (0.5 < degree < 1.0 and 0.5 < target_prob < 1.0):
        raise NoSolution(f"no sigma for degree={degree}, target_prob={target_prob}")
    offset = degree - SELECTOR_MEAN

    def excess(sigma: float) -> float:
        # decreasing in sigma: 1 as sigma -> 0, 0.5 as sigma -> inf
        return _STD_NORMAL.cdf(offset / sigma) - target_prob

    lo, hi = 1e-12, 1.0
    while excess(hi) > 0:
        hi *= 2.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def truncated_visit_probability(degree: float, sigma: float) -> float:
    """P(r <= degree) for r ~ Normal(0.5, sigma) truncated to [0, 1]."""
    dist = NormalDist(SELECTOR_MEAN, sigma)
    lo, hi = dist.cdf(0.0), dist.cdf(1.0)
    d = min(max(degree, 0.0), 1.0)
    return (dist.cdf(d) - lo) / (hi - lo)


def _draw_selector(rng: np.random.Generator, sigma: float) -> float:
    while True:
        r = rng.normal(SELECTOR_MEAN, sigma)
        if 0.0 <= r <= 1.0:
            return float(r)


def _uniform_in(rng: np.random.Generator, rect: Rect) -> Point:
    u, w = rng.random(2)
    return Point(rect.x_min + float(u) * rect.width, rect.y_min + float(w) * rect.height)


def _covers(rect: Rect, fld: FieldSpec) -> bool:
    return rect.x_min <= 0 and rect.y_min <= 0 and rect.x_max >= fld.side and rect.y_max >= fld.side


def next_waypoint_biased(rng: np.random.Generator, fld: FieldSpec, bias: BiasSpec) -> Point:
    """Waypoint inside ``bias.region`` when the selector r <= degree, else in its complement."""
    r = _draw_selector(rng, bias.sigma)
    if r <= bias.degree or _covers(bias.region, fld):
        return _uniform_in(rng, bias.region)
    while True:
        p = next_waypoint_rwp(rng, fld)
        if not bias.region.contains(p):
            return p


def next_waypoint(rng: np.random.Generator, fld: FieldSpec, spec: NodeSpec) -> Point:
    if spec.role == SATELLITE:
        return next_waypoint_biased(rng, fld, spec.bias)
    return next_waypoint_rwp(rng, fld)


def position_at(state: MobilityState, t: float) -> Point:
    if not state.leg_start <= t <= state.pause_until:
        raise ValueError(f"t={t} outside [{state.leg_start}, {state.pause_until}]")
    duration = state.leg_arrival - state.leg_start
    if t >= state.leg_arrival or duration <= 0:
        return state.target
    frac = (t - state.leg_start) / duration
    o, g = state.origin, state.target
    return Point(o.x + (g.x - o.x) * frac, o.y + (g.y - o.y) * frac)


def advance(state: MobilityState, now: float, spec: NodeSpec, fld: FieldSpec,
            rng: np.random.Generator) -> MobilityState:
    """Start the next leg from the current target; draws waypoint then pause."""
    if spec.is_static:
        raise ValueError(f"node {spec.id} is static")
    if now < state.pause_until:
        raise ValueError(f"node {spec.id} still paused until {state.pause_until}")
    origin = state.target
    target = next_waypoint(rng, fld, spec)
    arrival = now + origin.distance(target) / spec.velocity
    pause = float(rng.uniform(spec.pause_min, spec.pause_max))
    return MobilityState(origin, target, now, arrival, arrival + pause, spec.velocity)


def initial_state(spec: NodeSpec, fld: FieldSpec, rng: np.random.Generator) -> MobilityState:
    """Start position drawn with the node's own waypoint rule, first leg begun at t=0."""
    start = next_waypoint(rng, fld, spec)
    parked = MobilityState(start, start, 0.0, 0.0, 0.0, spec.velocity)
    return advance(parked, 0.0, spec, fld, rng)


__all__ = [
    "MobilityState", "rwp_pdf", "next_waypoint_rwp", "bias_sigma_from_quantile",
    "truncated_visit_probability", "next_waypoint_biased", "next_waypoint",
    "position_at", "advance", "initial_state", "NoSolution", "DEFAULT_TARGET_PROB",
]
