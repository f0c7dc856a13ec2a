"""Monte Carlo capacity of finite sets in Z^d.

Three estimators of cap(A) = sum_a P_a(W[1,inf) misses A):

* escape sums: walks from each a in A, counted as escaping once they leave
  the ball B(0, R) without returning to A;
* the ordered decomposition, a sum of products of one-sided escape
  probabilities from prefixes of an ordering of A;
* hitting from far away: P_y(hit A) / G(0, y) averaged over starts y on a
  sphere around A.

Escape estimates carry a bracket.  A walk that reached |x| > R still has
probability at most c_d cap(A) / (R - rho)^{d-2} of coming back (rho = max |a|,
c_d = sup G(0,z)|z|^{d-2}), so the true escape probability lies in
[p (1 - t), p] with t that bound, widened by ``z`` standard errors.
"""

from __future__ import annotations

import json
import math
import time
import warnings
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from . import _kernels as K
from ._exits import exit_tables
from ._index import SetIndex, build_index, levels_for, sausage_level
from .green import green_asymptotic, green_constant, green_exact, green_ratio_bounds
from .lattice import as_points
from .rng import RngStream, as_generator

Z_BRACKET = 3.0
KILL_FACTOR = 10.0
EXACT_GREEN_RADIUS = 24.0


@dataclass(frozen=True)
class EscapeEstimate:
    """Bracketed estimate of P_a(W[1,inf) misses A)."""

    lower: float
    upper: float
    trials: int
    truncation_radius: float
    successes: int
    estimate: float  # midpoint of the truncation bracket around the success fraction
    stderr: float
    truncation: float  # t in [p(1-t), p]

    @property
    def success_fraction(self) -> float:
        return self.successes / self.trials


@dataclass
class EstimateRecord:
    value: float
    stderr: float
    trials: int
    method: str  # escape_sum | decomposition | hitting_green
    params: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    bracket: tuple[float, float] | None = None

    CSV_COLUMNS = ("method", "value", "stderr", "trials", "R", "seed", "wall_time")

    def to_dict(self) -> dict:
        out = asdict(self)
        if self.bracket is not None:
            out["bracket"] = list(self.bracket)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, default=_jsonable)

    def csv_row(self) -> list:
        R = self.params.get("R", self.params.get("y_radius", ""))
        return [self.method, repr(self.value), repr(self.stderr), self.trials, R,
                self.provenance.get("seed", ""), self.provenance.get("wall_time", "")]


@dataclass(frozen=True)
class GreenEstimate:
    y: tuple[int, ...]
    value: float
    method: str  # monte_carlo | asymptotic
    stderr: float = 0.0
    trials: int = 0


def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)


def provenance(rng) -> dict:
    if isinstance(rng, RngStream):
        return {"seed": rng.master_seed, "stream_id": rng.stream_id}
    if isinstance(rng, (int, np.integer)):
        return {"seed": int(rng), "stream_id": 0}
    return {"seed": None, "stream_id": None}


# set preparation ------------------------------------------------------------

def _points(A) -> np.ndarray:
    pts = as_points(A)
    if pts.ndim != 2 or len(pts) == 0:
        raise ValueError("A must be a nonempty set of points")
    if pts.shape[1] < 3:
        raise ValueError("capacity needs a transient walk (d >= 3)")
    return np.ascontiguousarray(pts)


def _distinct(pts: np.ndarray) -> np.ndarray:
    _, first = np.unique(pts, axis=0, return_index=True)
    return np.ascontiguousarray(pts[np.sort(first)])


def origin_radius(pts: np.ndarray) -> float:
    return float(np.sqrt((pts.astype(float) ** 2).sum(axis=1).max()))


def capacity_upper_bound(pts: np.ndarray) -> float:
    """Deterministic upper bound on cap(A).

    The smaller of |A| cap({0}) (subadditivity) and the capacity bound of a
    ball B(c, r) containing A: 1 = P_c(hit B) >= cap(B) min_{b in B} G(c - b).
    """
    d = pts.shape[1]
    n = len(_distinct(pts))
    single = n / green_exact(d, (0,) * d)
    c = np.rint((pts.min(axis=0) + pts.max(axis=0)) / 2.0)
    r = float(np.sqrt(((pts - c) ** 2).sum(axis=1).max()))
    if r < 1:
        return single
    g_inf, _ = green_ratio_bounds(d)
    return min(single, r ** (d - 2) / g_inf)


def truncation_factor(pts: np.ndarray, R: float) -> float:
    d = pts.shape[1]
    rho = origin_radius(pts)
    _, c_d = green_ratio_bounds(d)
    return min(1.0, c_d * capacity_upper_bound(pts) / (R - rho) ** (d - 2))


def prefix_truncation_factors(pts: np.ndarray, R: float) -> np.ndarray:
    """t_k for each prefix {x_0..x_k} of an ordered set, from |prefix| cap({0})
    and the ball B(0, max_{j<=k} |x_j|)."""
    d = pts.shape[1]
    size = np.arange(1, len(pts) + 1) / green_exact(d, (0,) * d)
    rho = np.maximum.accumulate(np.sqrt((pts.astype(float) ** 2).sum(axis=1)))
    g_inf, c_d = green_ratio_bounds(d)
    ball = np.where(rho >= 1, np.maximum(rho, 1.0) ** (d - 2) / g_inf, np.inf)
    return np.minimum(1.0, c_d * np.minimum(size, ball) / (R - origin_radius(pts)) ** (d - 2))


def _check_R(pts: np.ndarray, R: float) -> None:
    if not R > 2 * origin_radius(pts):
        raise ValueError(f"R={R} must exceed twice the radius of A ({origin_radius(pts):.3f})")


def _escape_hits(index: SetIndex, starts: np.ndarray, limits: np.ndarray, R: float, gen,
                 use_jumps: bool) -> np.ndarray:
    tabs = exit_tables(index.d)
    return K.escape_batch(gen, np.ascontiguousarray(starts, dtype=np.int64), *index.args(), 0.0, 0,
                          np.zeros(index.d), float(R) ** 2, *tabs.args(), bool(use_jumps),
                          np.ascontiguousarray(limits, dtype=np.int64))


def _bracket(successes: int, trials: int, t: float, R: float, z: float) -> EscapeEstimate:
    p = successes / trials
    se = math.sqrt(p * (1 - p) / trials)
    lower = min(1.0, max(0.0, (p - z * se) * (1 - t)))
    upper = min(1.0, max(0.0, p + z * se))
    return EscapeEstimate(lower, upper, trials, float(R), int(successes), p * (1 - t / 2),
                          se * (1 - t / 2), t)


# escape-sum estimators ----------------------------------------------------------

def escape_probability_mc(A, a, R: float, trials: int, rng, z: float = Z_BRACKET,
                          use_jumps: bool = True) -> EscapeEstimate:
    """Bracketed P_a(W[1,inf) misses A) from ``trials`` walks killed outside B(0, R)."""
    if trials < 1:
        raise ValueError("trials must be positive")
    pts = _distinct(_points(A))
    a = np.asarray(a, dtype=np.int64)
    if not np.any(np.all(pts == a, axis=1)):
        raise ValueError("a must belong to A")
    _check_R(pts, R)
    index = build_index(pts)
    starts = np.repeat(a[None, :], trials, axis=0)
    hits = _escape_hits(index, starts, np.full(trials, len(pts)), R, as_generator(rng), use_jumps)
    return _bracket(int((hits < 0).sum()), trials, truncation_factor(pts, R), R, z)


def capacity_mc(A, R: float, trials_per_point: int, rng, subsample: int | None = None,
                z: float = Z_BRACKET, use_jumps: bool = True) -> EstimateRecord:
    """Sum of bracket midpoints of the escape probabilities over A.

    With ``subsample = m < |A|`` only m uniformly chosen points (without
    replacement) are simulated and the sum is estimated as |A| times their
    mean; the standard error then comes from the spread across points.
    """
    t0 = time.perf_counter()
    if trials_per_point < 1:
        raise ValueError("trials_per_point must be positive")
    pts = _distinct(_points(A))
    _check_R(pts, R)
    n = len(pts)
    gen = as_generator(rng)
    t = truncation_factor(pts, R)
    chosen = np.arange(n)
    if subsample is not None and subsample < n:
        if subsample < 2:
            raise ValueError("subsample needs at least 2 points")
        chosen = np.sort(gen.choice(n, size=int(subsample), replace=False))
    m = len(chosen)
    index = build_index(pts)
    starts = np.repeat(pts[chosen], trials_per_point, axis=0)
    hits = _escape_hits(index, starts, np.full(len(starts), n), R, gen, use_jumps)
    succ = (hits < 0).reshape(m, trials_per_point).sum(axis=1)
    p = succ / trials_per_point
    if m == n:
        var = p * (1 - p) / trials_per_point
        value = float(p.sum())
        se = float(math.sqrt(var.sum()))
        lo = float(np.clip(p - z * np.sqrt(var), 0, 1).sum() * (1 - t))
        hi = float(np.clip(p + z * np.sqrt(var), 0, 1).sum())
    else:
        value = n * float(p.mean())
        se = n * float(p.std(ddof=1)) / math.sqrt(m)
        lo = max(0.0, (value - z * se) * (1 - t))
        hi = value + z * se
    return EstimateRecord(
        value * (1 - t / 2), se * (1 - t / 2), int(m * trials_per_point), "escape_sum",
        params={"R": float(R), "trials_per_point": int(trials_per_point), "points": n,
                "simulated_points": int(m), "truncation": t, "z": z, "use_jumps": bool(use_jumps)},
        provenance={**provenance(rng), "wall_time": time.perf_counter() - t0},
        bracket=(lo, hi),
    )


def capacity_decomposition_mc(A, R: float, trials_per_point: int, rng, subsample: int | None = None,
                              use_jumps: bool = True) -> EstimateRecord:
    """Ordered decomposition: sum_k esc({x_1..x_k}, x_k) * avoid({x_1..x_{k-1}}, x_k).

    Both factors are estimated from independent walks; the empty prefix is
    avoided with probability one.
    """
    t0 = time.perf_counter()
    if trials_per_point < 1:
        raise ValueError("trials_per_point must be positive")
    pts = _points(A)
    if len(_distinct(pts)) != len(pts):
        raise ValueError("ordering contains duplicate points")
    _check_R(pts, R)
    n = len(pts)
    gen = as_generator(rng)
    t = truncation_factor(pts, R)
    ks = np.arange(n)
    if subsample is not None and subsample < n:
        if subsample < 2:
            raise ValueError("subsample needs at least 2 points")
        ks = np.sort(gen.choice(n, size=int(subsample), replace=False))
    m = len(ks)
    index = build_index(pts)
    T = trials_per_point
    starts = np.repeat(pts[ks], 2 * T, axis=0)
    limits = np.concatenate([np.concatenate([np.full(T, k), np.full(T, k - 1)]) for k in ks])
    hits = _escape_hits(index, starts, limits, R, gen, use_jumps).reshape(m, 2, T)
    # each factor escapes only a prefix, so it gets that prefix's truncation midpoint
    tk = prefix_truncation_factors(pts, R)
    p1 = (hits[:, 0] < 0).mean(axis=1) * (1 - tk[ks] / 2)
    p2 = (hits[:, 1] < 0).mean(axis=1) * (1 - tk[np.maximum(ks - 1, 0)] / 2)
    first = ks == 0
    p2[first] = 1.0  # empty prefix: no walk needed
    v1 = p1 * (1 - p1) / T
    v2 = np.where(first, 0.0, p2 * (1 - p2) / T)
    terms = p1 * p2
    if m == n:
        value = float(terms.sum())
        se = float(math.sqrt((p2**2 * v1 + p1**2 * v2 + v1 * v2).sum()))
    else:
        value = n * float(terms.mean())
        se = n * float(terms.std(ddof=1)) / math.sqrt(m)
    return EstimateRecord(
        value, se, int(m * T * 2 - T * first.sum()), "decomposition",
        params={"R": float(R), "trials_per_point": int(T), "points": n, "simulated_points": int(m),
                "truncation": t, "use_jumps": bool(use_jumps)},
        provenance={**provenance(rng), "wall_time": time.perf_counter() - t0},
    )


# Green's function -------------------------------------------------------------

def green_estimate(d: int, y, method: str = "monte_carlo", trials: int | None = None, rng=None,
                   R: float | None = None) -> GreenEstimate:
    """G(0, y) by visit counting (walks killed at radius R, remaining visits
    added as a_d |x - y|^{2-d}) or by the asymptotic a_d |y|^{2-d}."""
    if d < 3:
        raise ValueError("the Green's function is finite only for d >= 3")
    y = tuple(int(c) for c in y)
    if len(y) != d:
        raise ValueError("y has the wrong dimension")
    norm = math.sqrt(sum(c * c for c in y))
    if method == "asymptotic":
        if norm == 0:
            raise ValueError("the asymptotic form needs y != 0")
        return GreenEstimate(y, float(green_asymptotic(d, norm)), "asymptotic")
    if method != "monte_carlo":
        raise ValueError(f"unknown method {method!r}")
    if trials is None or trials < 1:
        raise ValueError("monte_carlo needs trials >= 1")
    if R is None:
        R = max(20.0, 10.0 * norm)
    if R <= 2 * norm:
        raise ValueError("R must exceed twice |y|")
    yarr = np.array(y, dtype=np.int64)
    index = build_index(yarr[None, :])
    tabs = exit_tables(d)
    counts, dist = K.visit_batch(as_generator(rng), int(trials), yarr, *index.args(), float(R) ** 2,
                                 *tabs.args())
    x = counts + green_asymptotic(d, dist)
    return GreenEstimate(y, float(x.mean()), "monte_carlo", float(x.std(ddof=1) / math.sqrt(trials))
                         if trials > 1 else 0.0, int(trials))


# far-field estimators -----------------------------------------------------------

def shell_starts(d: int, center: np.ndarray, r: float, n: int, gen) -> np.ndarray:
    """``n`` sites uniform over {y : | |y - center| - r | <= 1}, center a lattice point.

    Continuous points uniform on a shell thickened by half a cube diagonal are
    rounded to the nearest site; every site of the target shell owns a whole
    unit cube inside the thickened shell, so accepted sites are uniform.
    """
    pad = 1.0 + math.sqrt(d) / 2
    lo, hi = max(r - pad, 0.0), r + pad
    out = np.empty((0, d), dtype=np.int64)
    while len(out) < n:
        k = 2 * (n - len(out)) + 16
        g = gen.standard_normal((k, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        u = gen.random(k)
        rad = (lo**d + u * (hi**d - lo**d)) ** (1.0 / d)
        site = np.rint(g * rad[:, None]).astype(np.int64)
        norm = np.linalg.norm(site, axis=1)
        ok = np.abs(norm - r) <= 1.0
        out = np.concatenate([out, site[ok]])
    return out[:n] + center.astype(np.int64)


@lru_cache(maxsize=None)
def _exact_green_key(d: int, key: tuple[int, ...]) -> float:
    return green_exact(d, key)


def green_at(d: int, offsets: np.ndarray) -> np.ndarray:
    """G(0, z) per row: exact near the origin, asymptotic beyond EXACT_GREEN_RADIUS."""
    norms = np.linalg.norm(offsets, axis=1)
    out = green_asymptotic(d, np.maximum(norms, 1.0))
    near = np.flatnonzero(norms <= EXACT_GREEN_RADIUS)
    if len(near):
        keys = np.sort(np.abs(offsets[near]), axis=1)
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        vals = np.array([_exact_green_key(d, tuple(int(c) for c in u)) for u in uniq])
        out[near] = vals[inv.ravel()]
    return out


def _far_field_setup(pts: np.ndarray, eps: float, y_radius: float):
    center = np.rint((pts.min(axis=0) + pts.max(axis=0)) / 2.0)
    rho = float(np.sqrt(((pts - center) ** 2).sum(axis=1).max())) + eps
    if not y_radius > 2 * rho:
        raise ValueError(f"y_radius={y_radius} must exceed twice the radius of the target ({rho:.3f})")
    return center, rho


def _hit_walks(pts, eps, center, y_radius, kill_factor, trials, gen, use_jumps=True):
    d = pts.shape[1]
    index = build_index(pts, n_levels=levels_for(d, eps), eps=eps)
    starts = shell_starts(d, center, y_radius, trials, gen)
    tabs = exit_tables(d)
    hits, dist = K.hit_batch(gen, starts, *index.args(), float(eps), sausage_level(eps), center.astype(float),
                             float(kill_factor * y_radius) ** 2, *tabs.args(), bool(use_jumps))
    return index, starts, hits, dist


def capacity_via_hitting(A, y_radius: float, trials: int, rng, kill_factor: float = KILL_FACTOR,
                         eps: float = 0.0) -> EstimateRecord:
    """cap(A) from hitting probabilities of walks started far away.

    Starts y are uniform on the lattice shell of radius ``y_radius`` around A;
    walks are killed at ``kill_factor * y_radius``.  A killed walk at x would
    still hit A with probability about cap(A) G(x - c), so
        mean(H) = cap * (mean G(y - c) - mean((1 - H) G(x - c)))
    and the estimate is the ratio, with a delta-method standard error.  With
    ``eps > 0`` the target is the eps-sausage of A.
    """
    t0 = time.perf_counter()
    if trials < 2:
        raise ValueError("trials must be at least 2")
    pts = _distinct(_points(A))
    d = pts.shape[1]
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    center, _ = _far_field_setup(pts, eps, y_radius)
    gen = as_generator(rng)
    _, starts, hits, dist = _hit_walks(pts, eps, center, y_radius, kill_factor, trials, gen)
    H = (hits >= 0).astype(float)
    Gy = green_at(d, (starts - center).astype(np.int64))
    Gx = np.where(H > 0, 0.0, green_asymptotic(d, np.maximum(dist, 1.0)))
    Y = Gy - Gx
    value, se = _ratio(H, Y)
    if H.sum() == 0:
        warnings.warn("no walk hit the set; increase trials or lower y_radius", RuntimeWarning, stacklevel=2)
        se = float("nan")
    return EstimateRecord(
        value, se, int(trials), "hitting_green",
        params={"y_radius": float(y_radius), "kill_radius": float(kill_factor * y_radius), "eps": float(eps),
                "hit_fraction": float(H.mean()), "points": len(pts)},
        provenance={**provenance(rng), "wall_time": time.perf_counter() - t0},
    )


def _ratio(X: np.ndarray, Y: np.ndarray) -> tuple[float, float]:
    n = len(X)
    mx, my = X.mean(), Y.mean()
    q = mx / my
    resid = X - q * Y
    return float(q), float(resid.std(ddof=1) / (abs(my) * math.sqrt(n)))


def sausage_capacity_mc(eta_prefix, eps: float, R: float, trials: int, rng,
                        kill_factor: float = KILL_FACTOR) -> EstimateRecord:
    """Capacity of B(eta, eps) by hitting from the shell of radius ``R``; the sausage is never listed."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    rec = capacity_via_hitting(eta_prefix, R, trials, rng, kill_factor=kill_factor, eps=eps)
    rec.method = "hitting_green"
    rec.params["target"] = "sausage"
    return rec


def harmonic_measure_counts(B, y_radius: float, n_walks: int, rng, kill_factor: float = KILL_FACTOR):
    """First-hit counts per point of B from far-shell starts; returns (counts, misses)."""
    pts = _distinct(_points(B))
    center, _ = _far_field_setup(pts, 0.0, y_radius)
    _, _, hits, _ = _hit_walks(pts, 0.0, center, y_radius, kill_factor, int(n_walks), as_generator(rng))
    counts = np.bincount(hits[hits >= 0], minlength=len(pts))
    return counts, int((hits < 0).sum())


def harmonic_measure_sample(B, y_radius: float, rng, kill_factor: float = KILL_FACTOR):
    """First point of B hit by a walk from a uniform far-shell start, or None on a miss."""
    pts = _distinct(_points(B))
    center, _ = _far_field_setup(pts, 0.0, y_radius)
    _, _, hits, _ = _hit_walks(pts, 0.0, center, y_radius, kill_factor, 1, as_generator(rng))
    if hits[0] < 0:
        return None
    return tuple(int(c) for c in pts[hits[0]])


def hit_probabilities(A, starts, kill_radius: float, rng, center=None) -> np.ndarray:
    """Indicator per start that its walk (time 0 included) hits A before leaving B(center, kill_radius)."""
    pts = _distinct(_points(A))
    d = pts.shape[1]
    c = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    index = build_index(pts)
    tabs = exit_tables(d)
    hits, _ = K.hit_batch(as_generator(rng), np.ascontiguousarray(starts, dtype=np.int64), *index.args(), 0.0, 0,
                          c, float(kill_radius) ** 2, *tabs.args(), True)
    return hits >= 0


__all__ = [
    "EscapeEstimate", "EstimateRecord", "GreenEstimate", "escape_probability_mc", "capacity_mc",
    "capacity_decomposition_mc", "green_estimate", "capacity_via_hitting", "harmonic_measure_sample",
    "harmonic_measure_counts", "sausage_capacity_mc", "capacity_upper_bound", "green_constant",
]
