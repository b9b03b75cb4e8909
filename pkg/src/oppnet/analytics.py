"""Closed-form mobility estimators and the encounter/area power-law fit."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .scenario import FieldSpec, Point, Rect

# mean distance between two uniform points in the unit square
TRANSITION_LENGTH_COEFF = 0.5214


@dataclass(frozen=True)
class EncounterRegion:
    center: Point
    half_width: float
    clipped: Rect


@dataclass(frozen=True)
class CubeLawFit:
    c: float
    exponent: float
    residual: float

    def predict(self, area: float) -> float:
        return self.c * area**self.exponent


def encounter_region(center: Point, rf_range: float, fld: FieldSpec) -> EncounterRegion:
    """The 2R x 2R square around ``center`` clipped to the field."""
    if rf_range <= 0:
        raise ValueError("rf_range must be > 0")
    clipped = Rect(max(0.0, center.x - rf_range), max(0.0, center.y - rf_range),
                   min(fld.side, center.x + rf_range), min(fld.side, center.y + rf_range))
    if not (clipped.x_min < clipped.x_max and clipped.y_min < clipped.y_max):
        raise ValueError(f"region around {center} does not intersect the field")
    return EncounterRegion(center, rf_range, clipped)


def _antiderivative(u: float, a: float) -> float:
    # integral of (u^2 - a^2/4) du
    return u**3 / 3.0 - a * a * u / 4.0


def encounter_probability(region: EncounterRegion, fld: FieldSpec) -> float:
    """Probability mass of the RWP spatial density over the clipped region."""
    a = fld.side
    h = a / 2.0
    r = region.clipped
    ix = _antiderivative(r.x_max - h, a) - _antiderivative(r.x_min - h, a)
    iy = _antiderivative(r.y_max - h, a) - _antiderivative(r.y_min - h, a)
    p = 36.0 / a**6 * ix * iy
    return min(max(p, 0.0), 1.0)


def expected_transition_length(fld: FieldSpec) -> float:
    return TRANSITION_LENGTH_COEFF * fld.side


def _require_positive(**kwargs: float) -> None:
    for name, value in kwargs.items():
        if not value > 0:
            raise ValueError(f"{name} must be > 0, got {value!r}")


def expected_epoch_time(fld: FieldSpec, v: float) -> float:
    """Mean travel time of one leg, pauses excluded."""
    _require_positive(v=v)
    return expected_transition_length(fld) / v


def expected_contact_duration(rf_range: float, v: float) -> float:
    """2R/v: the diametral crossing time, an upper bound on the mean chord time."""
    _require_positive(rf_range=rf_range, v=v)
    return 2.0 * rf_range / v


def max_intercontact_time(rf_range: float, bit_rate: float, rate: float, v: float) -> float:
    """Largest inter-contact gap whose backlog one contact can still drain."""
    _require_positive(rf_range=rf_range, bit_rate=bit_rate, rate=rate, v=v)
    return 2.0 * rf_range * bit_rate / (rate * v)


def buffer_intercontact_bound(buffer_capacity: float, rate: float) -> float:
    """Necessary condition B/lambda: longest gap before the buffer overflows."""
    _require_positive(buffer_capacity=buffer_capacity, rate=rate)
    return buffer_capacity / rate


def fit_cube_law(samples: Iterable[tuple[float, float]]) -> CubeLawFit:
    """Least-squares line through (log area, log count)."""
    pts = [(float(a), float(n)) for a, n in samples]
    if len(pts) < 3:
        raise ValueError("need at least 3 (area, count) samples")
    if any(a <= 0 or n <= 0 for a, n in pts):
        raise ValueError("areas and counts must be positive")
    if len({a for a, _ in pts}) != len(pts):
        raise ValueError("areas must be distinct")
    x = np.log([a for a, _ in pts])
    y = np.log([n for _, n in pts])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return CubeLawFit(c=math.exp(intercept), exponent=float(slope),
                      residual=float(np.sqrt(np.mean(resid**2))))
