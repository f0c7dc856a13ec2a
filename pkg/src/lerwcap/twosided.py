"""Two-sided LERW and the rescaled escape probabilities X_n, X~_n, X^_n, X^+_n.

In d >= 5 the two-sided walk is LE(S1) glued at the origin to LE(S2), with
S1, S2 conditioned on LE(S1)[1,inf) missing S2[1,inf); we sample it by
rejection over a finite horizon.  In d = 4 that event has probability zero and
the one-sided law is instead reweighted by X_inf, approximated here by a
finite-n escape estimate used as a self-normalised importance weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import _kernels as K
from ._exits import exit_tables
from ._index import build_index
from .green import green_asymptotic, green_exact, green_ratio_bounds
from .rng import as_generator
from .walk import LoopErasedPath, cylinder_counts, cylinder_frequency, lerw_sample

ESS_FLOOR = 0.10
KILL_FACTOR = 10.0


@dataclass(frozen=True, eq=False)
class TwoSidedPath:
    """eta^(-n..n): ``backward`` holds eta^(0), eta^(-1), ...; ``forward`` holds eta^(0), eta^(1), ..."""

    backward: LoopErasedPath
    forward: LoopErasedPath
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        b, f = self.backward.points, self.forward.points
        if np.any(b[0] != 0) or np.any(f[0] != 0):
            raise ValueError("both sides must start at the origin")

    @property
    def d(self) -> int:
        return self.forward.d

    def points(self) -> np.ndarray:
        """Rows eta^(-len(backward)+1) .. eta^(len(forward)-1)."""
        return np.concatenate([self.backward.points[::-1], self.forward.points[1:]])

    def is_self_avoiding(self) -> bool:
        pts = self.points()
        return len(np.unique(pts, axis=0)) == len(pts)


@dataclass(frozen=True, eq=False)
class WeightedSample:
    path: LoopErasedPath
    weight: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.weight >= 0 and math.isfinite(self.weight)):
            raise ValueError("weight must be finite and nonnegative")


# d >= 5 rejection sampler ------------------------------------------------------

def two_sided_sample_highdim(d: int, side_len: int, horizon: int, rng, max_attempts: int = 10**7,
                             check_violation: bool = False, kill_factor: float = KILL_FACTOR) -> TwoSidedPath:
    """One two-sided sample by rejection.

    S1 and S2 run ``horizon`` steps (longer if a loop erasure falls short of
    ``side_len``); the pair is accepted iff LE(S1)[1:] misses S2[1:].  With
    ``check_violation`` both walks are continued to ``kill_factor`` times the
    window radius with cube jumps, recording whether the continuation of S2
    hits LE(S1)[1:] or the continuation of S1 hits S2[1:]; either event is
    needed for the infinite-horizon condition to fail later.
    """
    if d < 5:
        raise ValueError("the rejection construction needs d >= 5")
    if side_len < 1 or horizon < side_len:
        raise ValueError("need 1 <= side_len <= horizon")
    gen = as_generator(rng)
    ok, attempts, s1, i1, s2, i2 = K.two_sided_kernel(gen, d, int(side_len), int(horizon), int(max_attempts))
    if not ok:
        raise RuntimeError(f"no acceptance within {max_attempts} attempts")
    le1, le2 = s1[i1], s2[i2]
    meta = {"attempts": int(attempts), "horizon": int(horizon), "window": (len(s1) - 1, len(s2) - 1)}
    if check_violation:
        meta.update(_violation_flags(gen, s1, le1, s2, kill_factor))
    fwd = LoopErasedPath(le1[: side_len + 1], i1[: side_len + 1], len(s1) - 1, complete=False)
    bwd = LoopErasedPath(le2[: side_len + 1], i2[: side_len + 1], len(s2) - 1, complete=False)
    return TwoSidedPath(bwd, fwd, meta)


def _violation_flags(gen, s1, le1, s2, kill_factor):
    d = s1.shape[1]
    tabs = exit_tables(d)
    out = {}
    for name, walker, target in (("s2_hits_le1", s2, le1[1:]), ("s1_hits_s2", s1, s2[1:])):
        if len(target) == 0:
            out[name] = False
            continue
        index = build_index(target)
        r = max(float(np.linalg.norm(target, axis=1).max()), float(np.linalg.norm(walker[-1])), 1.0)
        start = walker[-1][None, :].copy()
        hits = K.escape_batch(gen, start, *index.args(), 0.0, 0, np.zeros(d), (kill_factor * r) ** 2,
                              *tabs.args(), True, np.array([len(target)]))
        out[name] = bool(hits[0] >= 0)
    return out


@dataclass
class TwoSidedBatch:
    samples: list
    attempts: int
    violation_rate: float | None = None

    @property
    def acceptance_rate(self) -> float:
        return len(self.samples) / self.attempts

    def acceptance_ci(self, z: float = 1.96) -> tuple[float, float]:
        p, n = self.acceptance_rate, self.attempts
        se = math.sqrt(p * (1 - p) / n)
        return p - z * se, p + z * se


def two_sided_batch(d: int, side_len: int, horizon: int, n_samples: int, rng,
                    check_violation: bool = False) -> TwoSidedBatch:
    gen = as_generator(rng)
    out, attempts, viol = [], 0, 0
    for _ in range(n_samples):
        ts = two_sided_sample_highdim(d, side_len, horizon, gen, check_violation=check_violation)
        attempts += ts.metadata["attempts"]
        if check_violation:
            viol += ts.metadata["s2_hits_le1"] or ts.metadata["s1_hits_s2"]
        out.append(ts)
    return TwoSidedBatch(out, attempts, viol / n_samples if check_violation and n_samples else None)


def exact_acceptance_probability(d: int, h: int) -> float:
    """P(accept) at horizon h by exhaustive enumeration of all (2d)^(2h) walk pairs."""
    if h < 0:
        raise ValueError("h must be nonnegative")
    return int(K.acceptance_count_exact(int(d), int(h))) / float(2 * d) ** (2 * h)


def acceptance_probability_dp(d: int, h: int) -> float:
    """Same probability computed differently: enumerate S1, then count S2 walks avoiding
    LE(S1)[1:] by a transfer-matrix recursion on a box."""
    from .walk import loop_erase_reference

    N = 2 * h + 3
    steps = []
    for i in range(d):
        for s in (1, -1):
            v = [0] * d
            v[i] = s
            steps.append(v)
    total = 0.0
    for word in np.ndindex(*(2 * d,) * h):
        s1 = np.zeros((h + 1, d), dtype=np.int64)
        for t, f in enumerate(word):
            s1[t + 1] = s1[t] + steps[f]
        le, _ = loop_erase_reference(s1)
        blocked = np.zeros((N,) * d, dtype=bool)
        for p in le[1:]:
            blocked[tuple(p + h + 1)] = True
        mass = np.zeros((N,) * d)
        mass[(h + 1,) * d] = 1.0
        for _ in range(h):
            nxt = np.zeros_like(mass)
            for axis in range(d):
                nxt += np.roll(mass, 1, axis=axis) + np.roll(mass, -1, axis=axis)
            mass = np.where(blocked, 0.0, nxt / (2 * d))
        total += mass.sum()
    return total / (2 * d) ** h


# escape-probability estimators -----------------------------------------------------

def _log_scale(n: int) -> float:
    if n < 2:
        raise ValueError("n must be at least 2 (log n must be positive)")
    return math.log(n) ** (1.0 / 3.0)


def escape_profile(points: np.ndarray, w_trials: int, rng, kill_radius: float | None = None,
                   use_jumps: bool = True):
    """For walks W from points[0]: (min index >= 1 hit, whether index 0 was hit).

    Walks are killed at ``kill_radius`` (default: 4 times the set radius,
    at least 16).
    """
    pts = np.ascontiguousarray(points, dtype=np.int64)
    d = pts.shape[1]
    if kill_radius is None:
        kill_radius = max(16.0, 4.0 * float(np.linalg.norm(pts - pts[0], axis=1).max()))
    index = build_index(pts)
    tabs = exit_tables(d)
    starts = np.repeat(pts[:1], int(w_trials), axis=0)
    minpos, hit0 = K.escape_min_hits(as_generator(rng), starts, *index.args(), float(kill_radius) ** 2,
                                     *tabs.args(), bool(use_jumps))
    return minpos, hit0, float(kill_radius)


def _truncation(points: np.ndarray, kill_radius: float) -> float:
    d = points.shape[1]
    n = len(points)
    rho = float(np.linalg.norm(points - points[0], axis=1).max())
    _, c_d = green_ratio_bounds(d)
    cap_up = n / green_exact(d, (0,) * d)
    return min(1.0, c_d * cap_up / max(kill_radius - rho, 1.0) ** (d - 2))


@dataclass(frozen=True)
class XEstimate:
    value: float
    stderr: float
    lower: float  # bracket accounting for the kill radius
    upper: float
    n: int
    variant: str
    trials: int


def x_n_estimator(eta, n: int, w_trials: int, rng, variant: str = "tilde",
                  kill_radius: float | None = None, z: float = 3.0) -> XEstimate:
    """(log n)^{1/3} times a conditional escape probability, for ONE fixed eta.

    ``tilde``: P(W[1,inf) misses eta[0,n]), walks killed at ``kill_radius``
    (bracketed).  ``plain``: P(W[1,n] misses eta[0,N]) with N = len(eta) - 1
    standing in for eta[0,inf); eta should be much longer than n.
    """
    pts = eta.points if hasattr(eta, "points") else np.asarray(eta, dtype=np.int64)
    scale = _log_scale(n)
    if variant == "tilde":
        if len(pts) < n + 1:
            raise ValueError("eta is shorter than n")
        target = pts[: n + 1]
        minpos, hit0, K_r = escape_profile(target, w_trials, rng, kill_radius)
        ok = (minpos > n) & ~hit0
        p = ok.mean()
        t = _truncation(target, K_r)
    elif variant == "plain":
        index = build_index(pts)
        steps = K.horizon_batch(as_generator(rng), int(w_trials), pts[0].copy(), int(n), index.keys, index.vals,
                                index.order)
        p = float((steps < 0).mean())
        t = 0.0
    else:
        raise ValueError("variant must be 'tilde' or 'plain'")
    se = math.sqrt(p * (1 - p) / w_trials)
    mid = p * (1 - t / 2)
    return XEstimate(scale * mid, scale * se * (1 - t / 2), scale * max(0.0, (p - z * se) * (1 - t)),
                     scale * min(1.0, p + z * se), int(n), variant, int(w_trials))


def x_tilde_profile(eta, ns, w_trials: int, rng, kill_radius: float | None = None):
    """X~_n and X~+_n for every n in ``ns`` from one shared set of walks (monotone in n by construction)."""
    pts = eta.points if hasattr(eta, "points") else np.asarray(eta, dtype=np.int64)
    ns = [int(n) for n in ns]
    top = max(ns)
    minpos, hit0, _ = escape_profile(pts[: top + 1], w_trials, rng, kill_radius)
    plain = np.array([((minpos > n) & ~hit0).mean() for n in ns])
    plus = np.array([(minpos > n).mean() for n in ns])
    scale = np.array([_log_scale(n) for n in ns])
    return scale * plain, scale * plus


def x_hat_estimators(ts, n: int, w_trials: int, rng, kill_radius: float | None = None) -> tuple[float, float]:
    """(X^_n, X^+_n): rescaled probabilities that W[1,inf) misses eta^[0,n], resp. eta^[1,n].

    Accepts a TwoSidedPath (forward side used) or a WeightedSample (its path
    is eta^[0,inf) under the weighted law).  Both values come from the same
    walks, so X^_n <= X^+_n pathwise.
    """
    path = ts.forward if isinstance(ts, TwoSidedPath) else ts.path if isinstance(ts, WeightedSample) else ts
    pts = path.points if hasattr(path, "points") else np.asarray(path, dtype=np.int64)
    if len(pts) < n + 1:
        raise ValueError("side shorter than n")
    a, b = x_tilde_profile(pts, [n], w_trials, rng, kill_radius)
    return float(a[0]), float(b[0])


# d = 4 importance weighting ------------------------------------------------------------

def d4_weighted_two_sided(side_len: int, n_weight: int, horizon: float | None, rng, w_trials: int = 2000,
                          safety_factor: float = 3.0) -> WeightedSample:
    """Plain eta (d = 4) with weight X~_{n_weight}(eta), a finite-n stand-in for X_inf.

    ``horizon`` is the kill radius of the weighting walks (None: automatic).
    """
    if n_weight < 2:
        raise ValueError("n_weight must be at least 2")
    gen = as_generator(rng)
    length = max(side_len, n_weight)
    eta = lerw_sample(4, length, gen, safety_factor=safety_factor)
    w = x_n_estimator(eta, n_weight, w_trials, gen, variant="tilde", kill_radius=horizon)
    meta = {"n_weight": int(n_weight), "w_trials": int(w_trials), "weight_stderr": w.stderr,
            "law": "importance-weighted (finite-n proxy for X_inf)"}
    return WeightedSample(eta, w.value, meta)


@dataclass(frozen=True)
class WeightedMean:
    value: float
    stderr: float
    ess: float
    nominal: int
    flagged: bool


def normalized_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be nonnegative with positive sum")
    return w / w.sum()


def effective_sample_size(weights) -> float:
    w = normalized_weights(weights)
    return float(1.0 / np.sum(w * w))


def weighted_mean(values, weights, ess_floor: float = ESS_FLOOR) -> WeightedMean:
    """Self-normalised importance-sampling mean; flagged when ESS < ess_floor * nominal."""
    v = np.asarray(values, dtype=float)
    w = normalized_weights(weights)
    mean = float(np.sum(w * v))
    se = float(math.sqrt(np.sum(w * w * (v - mean) ** 2)))
    ess = float(1.0 / np.sum(w * w))
    return WeightedMean(mean, se, ess, len(v), ess < ess_floor * len(v))


# avoidance of the whole two-sided path (right-hand side in d >= 5) ----------------------

def avoidance_terms(ts: TwoSidedPath, w_trials: int, rng, kill_factor: float = 4.0) -> tuple[float, float, float]:
    """(avoidance fraction, tail bound, truncation) for one two-sided sample.

    Walks from 0 are checked against eta^[-M, M] (all sample points) and
    killed at ``kill_factor`` times its radius.  The tail bound is a union
    bound sum_{|k| > M} G(eta^(k)) for the unseen part, extrapolated from the
    outer half of each side assuming terms decay like k^{-(d-2)/2}.
    """
    gen = as_generator(rng)
    pts = ts.points()
    d = pts.shape[1]
    K_r = kill_factor * max(float(np.linalg.norm(pts, axis=1).max()), 4.0)
    index = build_index(pts)
    starts = np.zeros((int(w_trials), d), dtype=np.int64)
    hits = K.escape_batch(gen, starts, *index.args(), 0.0, 0, np.zeros(d), K_r**2, *exit_tables(d).args(), True,
                          np.full(int(w_trials), len(pts)))
    expo = (d - 2) / 2.0
    factor = 1.0 / (2.0 ** (expo - 1.0) - 1.0) if expo > 1 else float("inf")
    tail = 0.0
    for side in (ts.forward.points, ts.backward.points):
        outer = side[(len(side) - 1) // 2 + 1:]
        if len(outer):
            tail += factor * float(green_asymptotic(d, np.maximum(np.linalg.norm(outer, axis=1), 1.0)).sum())
    return float((hits < 0).mean()), tail, _truncation(pts, K_r)


def avoidance_bracket(terms, w_trials: int, z: float = 3.0) -> dict:
    """Combine per-sample avoidance terms into a bracket for P(W[1,inf) misses eta^(-inf,inf)).

    Upper end: mean fraction plus z standard errors (a finite window only
    makes avoidance easier).  Lower end: additionally shrunk by the kill
    truncation and the tail bound.
    """
    arr = np.asarray(terms, dtype=float).reshape(-1, 3)
    fr, tails, truncs = arr[:, 0], arr[:, 1], arr[:, 2]
    n = len(fr)
    p = float(fr.mean())
    se = float(fr.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    tail = float(tails.mean())
    t = float(truncs.max())
    return {"estimate": p, "stderr": se, "lower": max(0.0, (p - z * se) * (1 - t) - tail),
            "upper": min(1.0, p + z * se), "tail_bound": tail, "truncation": t, "samples": n,
            "w_trials": int(w_trials)}


def two_sided_avoidance(samples, w_trials: int, rng, kill_factor: float = 4.0, z: float = 3.0) -> dict:
    gen = as_generator(rng)
    return avoidance_bracket([avoidance_terms(ts, w_trials, gen, kill_factor) for ts in samples], w_trials, z)


# stationarity and ergodicity diagnostics --------------------------------------------------

def stationarity_diagnostic(samples, k_shifts, m: int = 2, min_samples: int = 10) -> dict:
    """Chi-square homogeneity test of the m-step cylinder law of eta^ vs T^k eta^.

    For k = 0 both arms are the same data (trivially p = 1).  For k > 0 the
    two arms use disjoint halves of the samples so they are independent.
    Only forward sides are used.
    """
    paths = [s.forward.points if isinstance(s, TwoSidedPath) else s.points for s in samples]
    if len(paths) < min_samples:
        raise ValueError(f"need at least {min_samples} samples")
    base = 2 * paths[0].shape[1]
    out = {}
    for k in k_shifts:
        k = int(k)
        if any(len(p) < k + m + 1 for p in paths):
            raise ValueError(f"sides too short for shift {k}")
        if k == 0:
            out[k] = {"statistic": 0.0, "p_value": 1.0, "dof": 0}
            continue
        half = len(paths) // 2
        a = np.zeros(base**m, dtype=np.int64)
        b = np.zeros(base**m, dtype=np.int64)
        for p in paths[:half]:
            a += cylinder_counts(p[: m + 1], m, 0)
        for p in paths[half:]:
            b += cylinder_counts(p[k: k + m + 1] - p[k], m, 0)
        keep = (a + b) > 0
        table = np.vstack([a[keep], b[keep]])
        if table.shape[1] < 2:
            out[k] = {"statistic": 0.0, "p_value": 1.0, "dof": 0}
            continue
        chi2, pval, dof, _ = stats.chi2_contingency(table, correction=False)
        out[k] = {"statistic": float(chi2), "p_value": float(pval), "dof": int(dof)}
    return out


def birkhoff_variance_slope(paths, xi, ns) -> dict:
    """Across-sample variance of H^n(xi) for each n, and the log-log slope."""
    ns = [int(n) for n in ns]
    var = []
    for n in ns:
        vals = [cylinder_frequency(p, xi, n) for p in paths]
        var.append(float(np.var(vals, ddof=1)))
    var = np.array(var)
    good = var > 0
    slope = float(np.polyfit(np.log(np.array(ns)[good]), np.log(var[good]), 1)[0]) if good.sum() >= 2 else float("nan")
    return {"n": ns, "variance": var.tolist(), "slope": slope}


def first_step_counts(paths) -> np.ndarray:
    """Counts of the first-step direction (order +e1, -e1, ...)."""
    pts = [p.forward.points if isinstance(p, TwoSidedPath) else (p.points if hasattr(p, "points") else p)
           for p in paths]
    d = pts[0].shape[1]
    counts = np.zeros(2 * d, dtype=np.int64)
    for p in pts:
        counts += cylinder_counts(p[:2], 1, 0)
    return counts


__all__ = [
    "TwoSidedPath", "WeightedSample", "two_sided_sample_highdim", "two_sided_batch", "exact_acceptance_probability",
    "acceptance_probability_dp", "x_n_estimator", "x_tilde_profile", "x_hat_estimators", "d4_weighted_two_sided",
    "weighted_mean", "effective_sample_size", "avoidance_terms", "avoidance_bracket", "two_sided_avoidance", "stationarity_diagnostic",
    "birkhoff_variance_slope", "first_step_counts",
]
