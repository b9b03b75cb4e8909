"""Independent reference implementations used as test oracles."""
from __future__ import annotations

import numpy as np
from scipy.integrate import simpson


def simpson_2d(f, x0, x1, y0, y1, n=1001):
    x = np.linspace(x0, x1, n)
    y = np.linspace(y0, y1, n)
    X, Y = np.meshgrid(x, y)
    return float(simpson(simpson(f(X, Y), x=x), x=y))


def rwp_density(side):
    a = float(side)

    def f(x, y):
        return 36.0 / a**6 * ((x - a / 2) ** 2 - a * a / 4) * ((y - a / 2) ** 2 - a * a / 4)
    return f


def reachable(src, dst, created, ttl, contacts, end):
    """Whether a message born at ``src`` at integer time ``created`` can reach ``dst``.

    ``contacts`` are (a, b, start, end) with integer times, active for
    start <= t < end. One hop per unit step, first hop the step after creation,
    last usable step created + ttl, and no step past ``end``.
    """
    holders = {src}
    for t in range(int(created) + 1, int(min(created + ttl, end)) + 1):
        gained = set()
        for a, b, s, e in contacts:
            if s <= t < e:
                if a in holders:
                    gained.add(b)
                if b in holders:
                    gained.add(a)
        holders |= gained
        if dst in holders:
            return True
    return False
