"""Numba-side lookup structures for finite subsets of Z^d.

A ``SetIndex`` stores a point set at several resolutions.  Level 0 maps each
point to its position in the set; level k >= 1 maps each occupied cell of side
2**k to a slice of ``order[k]`` listing the points inside it.  The coarse levels
give cheap lower bounds on the sup-norm distance from a site to the set, which
is what the cube-jump walkers need, and the per-cell point lists answer
sausage-membership queries without materialising the sausage.

Hash tables use open addressing with linear probing; a slot is empty iff its
value is -1.  Keys are whole coordinate rows, so there is no range limit on
the coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

_C1 = np.uint64(0x9E3779B97F4A7C15)
_C2 = np.uint64(0xBF58476D1CE4E5B9)
_C3 = np.uint64(0x94D049BB133111EB)


@njit(cache=True, inline="always")
def hash_row(p, shift):
    h = np.uint64(0)
    for i in range(p.shape[0]):
        h = (h ^ np.uint64(p[i] >> shift)) + _C1
        h ^= h >> np.uint64(30)
        h *= _C2
        h ^= h >> np.uint64(27)
        h *= _C3
        h ^= h >> np.uint64(31)
    return h


@njit(cache=True)
def table_slot(keys, vals, p, shift):
    """Slot holding cell ``p >> shift`` (``p`` itself when shift == 0), or -1."""
    mask = np.uint64(keys.shape[0] - 1)
    d = p.shape[0]
    slot = np.int64(hash_row(p, shift) & mask)
    while True:
        if vals[slot] == -1:
            return -1
        same = True
        for i in range(d):
            if keys[slot, i] != (p[i] >> shift):
                same = False
                break
        if same:
            return slot
        slot = (slot + 1) & (keys.shape[0] - 1)


@njit(cache=True)
def table_get(keys, vals, p, shift):
    s = table_slot(keys, vals, p, shift)
    if s == -1:
        return -1
    return vals[s]


@njit(cache=True)
def table_put(keys, vals, p, shift, v):
    """Insert or overwrite; returns the slot used."""
    mask = np.uint64(keys.shape[0] - 1)
    d = p.shape[0]
    slot = np.int64(hash_row(p, shift) & mask)
    while True:
        if vals[slot] == -1:
            for i in range(d):
                keys[slot, i] = p[i] >> shift
            vals[slot] = v
            return slot
        same = True
        for i in range(d):
            if keys[slot, i] != (p[i] >> shift):
                same = False
                break
        if same:
            vals[slot] = v
            return slot
        slot = (slot + 1) & (keys.shape[0] - 1)


def table_capacity(n_items: int) -> int:
    cap = 16
    while cap < 2 * n_items + 2:
        cap *= 2
    return cap


@njit(cache=True)
def _build_levels(pts, keys, vals, cnts, order, n_levels):
    m, d = pts.shape
    cap = keys.shape[1]
    slots = np.empty(m, dtype=np.int64)
    for k in range(n_levels):
        for j in range(m):
            s = table_slot(keys[k], vals[k], pts[j], k)
            if s == -1:
                s = table_put(keys[k], vals[k], pts[j], k, 0)
            slots[j] = s
            cnts[k, s] += 1
        start = 0
        for s in range(cap):
            if vals[k, s] != -1:
                vals[k, s] = start
                start += cnts[k, s]
        fill = np.zeros(cap, dtype=np.int64)
        for j in range(m):
            s = slots[j]
            order[k, vals[k, s] + fill[s]] = j
            fill[s] += 1


@dataclass
class SetIndex:
    """Multi-resolution index of a finite point set (see module docstring)."""

    pts: np.ndarray  # (m, d) int64, duplicates removed, first occurrence kept
    keys: np.ndarray  # (K, cap, d) int64
    vals: np.ndarray  # (K, cap) int64; level 0: point index, level k: slice start
    cnts: np.ndarray  # (K, cap) int64; points per cell
    order: np.ndarray  # (K, m) int64
    lo: np.ndarray
    hi: np.ndarray
    center: np.ndarray  # float64 bounding-box centre
    radius: float  # max distance from centre to a point

    @property
    def d(self) -> int:
        return self.pts.shape[1]

    @property
    def n_levels(self) -> int:
        return self.keys.shape[0]

    def __len__(self) -> int:
        return self.pts.shape[0]

    def args(self):
        """Positional arrays in the order the kernels expect."""
        return (self.pts, self.keys, self.vals, self.cnts, self.order, self.lo, self.hi)


@njit(cache=True)
def index_arrays(pts, n_levels):
    """Allocate and fill the level tables for distinct points ``pts``."""
    m, d = pts.shape
    cap = 16
    while cap < 2 * m + 2:
        cap *= 2
    keys = np.zeros((n_levels, cap, d), dtype=np.int64)
    vals = np.full((n_levels, cap), -1, dtype=np.int64)
    cnts = np.zeros((n_levels, cap), dtype=np.int64)
    order = np.zeros((n_levels, m), dtype=np.int64)
    _build_levels(pts, keys, vals, cnts, order, n_levels)
    lo = np.empty(d, dtype=np.int64)
    hi = np.empty(d, dtype=np.int64)
    for i in range(d):
        lo[i] = pts[0, i]
        hi[i] = pts[0, i]
    for j in range(1, m):
        for i in range(d):
            if pts[j, i] < lo[i]:
                lo[i] = pts[j, i]
            if pts[j, i] > hi[i]:
                hi[i] = pts[j, i]
    return keys, vals, cnts, order, lo, hi


def levels_for(d: int, eps: float = 0.0) -> int:
    """Number of levels worth building: enough for the largest cube jump and the sausage cell."""
    from ._exits import max_table_half_width

    top = max_table_half_width(d)
    k = 1
    while (1 << (k - 1)) < top:
        k += 1
    return max(k, sausage_level(eps)) + 1


def sausage_level(eps: float) -> int:
    """Smallest level whose cells (side 2**level) are at least eps wide."""
    s = 0
    while (1 << s) < eps:
        s += 1
    return s


def build_index(points, n_levels: int | None = None, eps: float = 0.0) -> SetIndex:
    pts = np.ascontiguousarray(points, dtype=np.int64)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("index needs a nonempty (m, d) point array")
    _, first = np.unique(pts, axis=0, return_index=True)
    if len(first) != len(pts):
        pts = np.ascontiguousarray(pts[np.sort(first)])
    if n_levels is None:
        n_levels = levels_for(pts.shape[1], eps)
    keys, vals, cnts, order, lo, hi = index_arrays(pts, max(1, int(n_levels)))
    center = (lo + hi) / 2.0
    diff = pts - center
    radius = float(np.sqrt(np.einsum("ij,ij->i", diff, diff).max()))
    return SetIndex(pts, keys, vals, cnts, order, lo, hi, center, radius)


# queries ----------------------------------------------------------------

@njit(cache=True)
def point_lookup(keys, vals, order, x):
    """Index of ``x`` in the set, or -1."""
    s = table_slot(keys[0], vals[0], x, 0)
    if s == -1:
        return -1
    return order[0, vals[0, s]]


@njit(cache=True)
def sausage_lookup(pts, keys, vals, cnts, order, x, eps, level, cell_lo, cell_hi, cell):
    """Index of some set point within distance ``eps`` of ``x`` or -1.

    ``level`` must satisfy 2**level >= eps; scratch arrays have length d.
    """
    d = x.shape[0]
    e = np.int64(np.floor(eps))
    eps2 = eps * eps
    for i in range(d):
        cell_lo[i] = (x[i] - e) >> level
        cell_hi[i] = (x[i] + e) >> level
        cell[i] = cell_lo[i]
    while True:
        # visit cell
        s = table_slot(keys[level], vals[level], cell, 0)
        if s != -1:
            start = vals[level, s]
            for t in range(start, start + cnts[level, s]):
                j = order[level, t]
                acc = 0.0
                for i in range(d):
                    dx = float(pts[j, i] - x[i])
                    acc += dx * dx
                if acc <= eps2:
                    return j
        # odometer
        i = 0
        while i < d:
            cell[i] += 1
            if cell[i] <= cell_hi[i]:
                break
            cell[i] = cell_lo[i]
            i += 1
        if i == d:
            return -1


@njit(cache=True)
def linf_distance_bound(keys, vals, lo, hi, x, level_hint, cell_lo, cell_hi, cell):
    """Lower bound ``D`` on the sup-norm distance from ``x`` to the set, and the level used.

    Returns (D, level).  D == 0 means "possibly on the set".  A level-k test
    checks the (at most 2**d) cells of side 2**k meeting the cube of half-width
    2**(k-1) around ``x``; if all are empty then D >= 2**(k-1) + 1.
    """
    d = x.shape[0]
    n_levels = keys.shape[0]
    box = np.int64(0)
    for i in range(d):
        g = lo[i] - x[i]
        if x[i] - hi[i] > g:
            g = x[i] - hi[i]
        if g > box:
            box = g
    k = level_hint + 1
    if k > n_levels - 1:
        k = n_levels - 1
    best = np.int64(0)
    used = 0
    while k >= 1:
        h = np.int64(1) << (k - 1)
        for i in range(d):
            cell_lo[i] = (x[i] - h) >> k
            cell_hi[i] = (x[i] + h) >> k
            cell[i] = cell_lo[i]
        empty = True
        while True:
            if table_slot(keys[k], vals[k], cell, 0) != -1:
                empty = False
                break
            i = 0
            while i < d:
                cell[i] += 1
                if cell[i] <= cell_hi[i]:
                    break
                cell[i] = cell_lo[i]
                i += 1
            if i == d:
                break
        if empty:
            best = h + 1
            used = k
            break
        k -= 1
    if box > best:
        best = box
    return best, used
