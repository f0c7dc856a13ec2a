"""Lattice Green's function of SRW on Z^d (d >= 3) and constants derived from it.

Discrete-time visits equal continuous-time occupation for a rate-one walk, so

    G(0, z) = int_0^inf prod_i e^{-t/d} I_{z_i}(t/d) dt,

a one-dimensional integral of modified Bessel functions (equivalent to the
Watson integral).  Far away G(0, z) ~ a_d |z|^{2-d} with
a_d = d Gamma(d/2 - 1) / (2 pi^{d/2}).
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.special import ive


def green_constant(d: int) -> float:
    """a_d in G(0, z) ~ a_d |z|^{2-d}."""
    if d < 3:
        raise ValueError("the Green's function is finite only for d >= 3")
    return d * math.gamma(d / 2 - 1) / (2 * math.pi ** (d / 2))


def green_asymptotic(d: int, r) -> np.ndarray | float:
    return green_constant(d) * np.asarray(r, dtype=float) ** (2 - d)


@lru_cache(maxsize=4096)
def _green_sorted(d: int, z: tuple[int, ...]) -> float:
    def f(t):
        return float(np.prod(ive(z, t / d)))

    # split at a few scales so quad sees the peak and the algebraic tail
    edges = [0.0, 10.0, 100.0, 1000.0, 1e4, np.inf]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = quad(f, a, b, limit=400, epsabs=1e-14, epsrel=1e-12)
        total += val
    return total


def green_exact(d: int, z) -> float:
    """G(0, z) to about 1e-11 relative accuracy."""
    if d < 3:
        raise ValueError("the Green's function is finite only for d >= 3")
    key = tuple(sorted(abs(int(c)) for c in z))
    if len(key) != d:
        raise ValueError("point has the wrong dimension")
    return _green_sorted(d, key)


def green_ratio_extremes(d: int, box: int = 8) -> tuple[float, float]:
    """min and max of G(0,z)|z|^{d-2} over 0 < |z|_inf <= box."""
    vals = []
    for z in itertools.combinations_with_replacement(range(box + 1), d):
        if any(z):
            vals.append(green_exact(d, z) * math.sqrt(sum(c * c for c in z)) ** (d - 2))
    return min(vals), max(vals)


# Shipped bounds on G(0,z)|z|^{d-2} over z != 0: green_ratio_extremes (box=8 for
# d <= 5, box=4 above) widened by 1% outward.  SUP is the truncation constant
# c_d of the escape brackets; INF bounds the capacity of a ball.  Regenerate
# and cross-check with scripts/calibrate_cd.py.
GREEN_RATIO_INF: dict[int, float] = {3: 0.4483, 4: 0.1771, 5: 0.1021, 6: 0.0715, 7: 0.0572, 8: 0.0507}
GREEN_RATIO_SUP: dict[int, float] = {3: 0.5216, 4: 0.2665, 5: 0.2223, 6: 0.2396, 7: 0.3006, 8: 0.4522}


def green_ratio_bounds(d: int) -> tuple[float, float]:
    """(inf, sup) of G(0,z)|z|^{d-2}; shipped values when present, computed otherwise."""
    if d in GREEN_RATIO_SUP:
        return GREEN_RATIO_INF[d], GREEN_RATIO_SUP[d]
    lo, hi = green_ratio_extremes(d, box=6 if d <= 5 else 3)
    a = green_constant(d)
    return 0.99 * min(lo, a), 1.01 * max(hi, a)


def capacity_from_green(points) -> float:
    """Exact cap(A) = 1^T G_AA^{-1} 1 for a small set, from exact Green's function values."""
    pts = np.asarray(points, dtype=np.int64)
    pts = np.unique(pts, axis=0)
    d = pts.shape[1]
    G = np.array([[green_exact(d, p - q) for q in pts] for p in pts])
    return float(np.linalg.solve(G, np.ones(len(pts))).sum())
