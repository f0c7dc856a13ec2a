"""Simple random walk, chronological loop erasure, cut times, shifts and cylinder statistics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from ._exits import exit_tables
from ._index import levels_for
from .lattice import as_points
from .rng import RngStream, as_generator

DEFAULT_SAFETY = 3.0


@dataclass(frozen=True, eq=False)
class NearestNeighborPath:
    """A finite nearest-neighbour path, stored as an ``(n+1, d)`` int64 array."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.int64)
        if pts.ndim != 2 or len(pts) == 0:
            raise ValueError("a path needs at least one point")
        if len(pts) > 1 and not np.all(np.abs(np.diff(pts, axis=0)).sum(axis=1) == 1):
            raise ValueError("consecutive points must be lattice neighbours")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def n_steps(self) -> int:
        return len(self.points) - 1

    def __len__(self) -> int:
        return len(self.points)

    def __eq__(self, other) -> bool:
        return isinstance(other, NearestNeighborPath) and np.array_equal(self.points, other.points)


@dataclass(frozen=True, eq=False)
class LoopErasedPath:
    """A self-avoiding path together with how it was cut out of its source walk.

    ``erasure_times[i]`` is the source index of ``points[i]`` (the times l_i).
    It is ``None`` when the sampler did not track time, e.g. when cube jumps
    were used to decide that the prefix is frozen.  ``source_length`` counts
    the source steps consumed.  ``complete`` is True when the points are the
    entire loop erasure of the source, False for a prefix of a longer one.
    """

    points: np.ndarray
    erasure_times: np.ndarray | None
    source_length: int
    complete: bool = True
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.int64)
        if pts.ndim != 2 or len(pts) == 0:
            raise ValueError("a loop-erased path needs at least one point")
        if len(pts) > 1 and np.any(np.abs(np.diff(pts, axis=0)).sum(axis=1) != 1):
            raise ValueError("consecutive points must be lattice neighbours")
        if len(np.unique(pts, axis=0)) != len(pts):
            raise ValueError("a loop-erased path must be self-avoiding")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.erasure_times is not None:
            t = np.ascontiguousarray(self.erasure_times, dtype=np.int64)
            if len(t) != len(pts):
                raise ValueError("one erasure time per point")
            if np.any(np.diff(t) <= 0):
                raise ValueError("erasure times must be strictly increasing")
            t.setflags(write=False)
            object.__setattr__(self, "erasure_times", t)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def n_steps(self) -> int:
        return len(self.points) - 1

    def __len__(self) -> int:
        return len(self.points)

    def as_path(self) -> NearestNeighborPath:
        return NearestNeighborPath(self.points)


def _points_of(path) -> np.ndarray:
    if isinstance(path, (NearestNeighborPath, LoopErasedPath)):
        return path.points
    return as_points(path)


# sampling -----------------------------------------------------------------

def srw_sample(d: int, n_steps: int, rng: RngStream | np.random.Generator | int | None) -> NearestNeighborPath:
    """SRW from the origin; exactly one uniform draw per step."""
    if d < 1 or n_steps < 0:
        raise ValueError("need d >= 1 and n_steps >= 0")
    return NearestNeighborPath(K.srw_path(as_generator(rng), int(d), int(n_steps)))


def lerw_sample(
    d: int,
    target_len: int,
    rng: RngStream | np.random.Generator | int | None,
    safety_factor: float = DEFAULT_SAFETY,
    track_times: bool = False,
    use_jumps: bool = True,
) -> LoopErasedPath:
    """The first ``target_len`` steps of the loop erasure of an infinite SRW.

    The online erasure runs until it holds ``target_len + 1`` points.  Those
    points are then frozen only after a continuation of the walk has left the
    ball of radius ``safety_factor`` times their largest norm without coming
    back to them; a return erases back to the point hit and growth resumes.
    The continuation is exact, so the only residual bias is a return from
    outside that ball.  ``safety_factor <= 0`` returns the raw finite-time
    prefix instead.

    With ``track_times`` every continuation step is simulated so the erasure
    times are exact; otherwise continuations use cube jumps and
    ``erasure_times`` is None.
    """
    if d < 3:
        raise ValueError("the infinite loop erasure needs a transient walk (d >= 3)")
    if target_len < 1:
        raise ValueError("target_len must be at least 1")
    tables = exit_tables(d)
    path, times, steps, attempts, times_ok = K.lerw_kernel(
        as_generator(rng), int(d), int(target_len), float(safety_factor), bool(track_times),
        *tables.args(), levels_for(d), bool(use_jumps) and not track_times,
    )
    exact_times = bool(track_times) or float(safety_factor) <= 0.0
    meta = {
        "sampler": "lerw_freeze",
        "safety_factor": float(safety_factor),
        "freeze_attempts": int(attempts),
        "track_times": exact_times,
        "srw_steps": int(steps),
    }
    return LoopErasedPath(path, times if exact_times else None, int(steps), complete=False, metadata=meta)


# loop erasure -------------------------------------------------------------

def loop_erase(omega) -> LoopErasedPath:
    """Chronological loop erasure of a finite path (online, expected linear time)."""
    pts = _points_of(omega)
    if len(pts) == 0:
        raise ValueError("cannot loop-erase an empty path")
    idx = K.loop_erase_times(np.ascontiguousarray(pts))
    return LoopErasedPath(pts[idx], idx, len(pts) - 1, complete=True)


def loop_erase_reference(omega) -> tuple[np.ndarray, np.ndarray]:
    """Literal evaluation of l_{i+1} = 1 + max{k : w_k = w_{l_i}}; quadratic time.

    Returns (points, erasure_times).
    """
    pts = _points_of(omega)
    if len(pts) == 0:
        raise ValueError("cannot loop-erase an empty path")
    _, codes = np.unique(pts, axis=0, return_inverse=True)
    codes = codes.ravel()
    n = len(codes) - 1
    ell = [0]
    while True:
        # max over ALL k with w_k = w_{l_i}, exactly as in the definition
        last = n - int(np.argmax(codes[::-1] == codes[ell[-1]]))
        if last == n:
            break
        ell.append(last + 1)
    ell_arr = np.array(ell, dtype=np.int64)
    return pts[ell_arr], ell_arr


def erasure_counts(lep: LoopErasedPath, j: int) -> int:
    """rho_j = max{i : l_i <= j}, the number of source points up to time j that survive."""
    if lep.erasure_times is None:
        raise ValueError("erasure times were not tracked for this path")
    hi = lep.source_length if lep.complete else int(lep.erasure_times[-1])
    if not 0 <= j <= hi:
        raise ValueError(f"j must lie in [0, {hi}]")
    return int(np.searchsorted(lep.erasure_times, j, side="right")) - 1


def cut_times(omega) -> np.ndarray:
    """All n with omega[0..n] disjoint from omega[n+1..end]."""
    pts = _points_of(omega)
    if len(pts) == 0:
        return np.zeros(0, dtype=np.int64)
    return np.flatnonzero(K.cut_time_mask(np.ascontiguousarray(pts)))


def shift(omega, k: int) -> NearestNeighborPath:
    """T^k: the path i -> omega(i + k) - omega(k)."""
    pts = _points_of(omega)
    if not 0 <= k < len(pts):
        raise ValueError("shift must be smaller than the path length")
    return NearestNeighborPath(pts[k:] - pts[k])


# cylinder statistics ------------------------------------------------------

def step_codes(points: np.ndarray) -> np.ndarray:
    """Direction index (0..2d-1, order +e1, -e1, +e2, ...) of each step."""
    diff = np.diff(points, axis=0)
    axis = np.argmax(diff != 0, axis=1)
    neg = diff[np.arange(len(diff)), axis] < 0
    return 2 * axis + neg


def cylinder_counts(eta, m: int, n: int) -> np.ndarray:
    """Counts of every m-step pattern among the windows starting at k = 0..n.

    Patterns are numbered in base 2d, first step most significant.
    """
    pts = _points_of(eta)
    if m < 0 or n < 0:
        raise ValueError("m and n must be nonnegative")
    if len(pts) < n + m + 1:
        raise ValueError(f"path too short: need {n + m + 1} points, have {len(pts)}")
    base = 2 * pts.shape[1]
    if m == 0:
        return np.array([n + 1], dtype=np.int64)
    codes = step_codes(pts[: n + m + 1])
    words = np.zeros(n + 1, dtype=np.int64)
    for i in range(m):
        words = words * base + codes[i : i + n + 1]
    return np.bincount(words, minlength=base**m)


def cylinder_code(xi) -> int:
    pts = _points_of(xi)
    if np.any(pts[0] != 0):
        raise ValueError("cylinder pattern must start at the origin")
    base = 2 * pts.shape[1]
    code = 0
    for c in step_codes(pts):
        code = code * base + int(c)
    return code


def cylinder_frequency(eta, xi, n: int) -> float:
    """H^n(xi): fraction of k in 0..n with eta[k..k+m] - eta(k) == xi.

    Normalised by the n+1 windows actually counted, so the frequencies of all
    m-step patterns sum to exactly one.
    """
    xi_pts = _points_of(xi)
    NearestNeighborPath(xi_pts)
    m = len(xi_pts) - 1
    counts = cylinder_counts(eta, m, n)
    return float(counts[cylinder_code(xi_pts)]) / (n + 1)
