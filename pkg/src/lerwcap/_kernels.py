"""Compiled inner loops: walks, loop erasure, cut times and target-seeking walkers.

All randomness comes from a ``np.random.Generator`` passed in by the caller;
one ``random()`` draw picks a unit step (direction ``floor(6u)`` in d=3, in
the order +e1, -e1, +e2, ...), two draws make a cube jump.

``run_to_target`` is the workhorse.  It moves a walker until it enters the
target (a point set or the eps-sausage of one) or leaves the ball
``|x - center|^2 > R2``.  Whenever the index certifies that the cube of
half-width L around the walker misses the target, the walker jumps straight
to an exit site of that cube drawn from the exact exit law; otherwise it
takes a single step.  Jumps change the time parametrisation but not the
sequence of sites where the target could be met, so hit/escape outcomes have
exactly the law of the step-by-step walk killed at the first observation
outside the ball.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ._index import (
    linf_distance_bound,
    point_lookup,
    sausage_lookup,
    table_put,
    table_slot,
)


@njit(cache=True, inline="always")
def _step(gen, x, two_d):
    f = np.int64(gen.random() * two_d)
    a = f >> 1
    if f & 1:
        x[a] -= 1
    else:
        x[a] += 1


@njit(cache=True)
def srw_path(gen, d, n):
    out = np.zeros((n + 1, d), dtype=np.int64)
    two_d = 2 * d
    for t in range(n):
        f = np.int64(gen.random() * two_d)
        for i in range(d):
            out[t + 1, i] = out[t, i]
        out[t + 1, f >> 1] += 1 - 2 * (f & 1)
    return out


@njit(cache=True)
def srw_endpoints(gen, d, n_walks, checkpoints):
    """Positions of independent walks at increasing times ``checkpoints``."""
    out = np.zeros((n_walks, checkpoints.shape[0], d), dtype=np.int64)
    x = np.zeros(d, dtype=np.int64)
    two_d = 2 * d
    for w in range(n_walks):
        x[:] = 0
        t = 0
        for c in range(checkpoints.shape[0]):
            while t < checkpoints[c]:
                _step(gen, x, two_d)
                t += 1
            out[w, c, :] = x
    return out


@njit(cache=True, inline="always")
def _pick_table(Ls, L):
    t = 0
    while t + 1 < Ls.shape[0] and Ls[t + 1] <= L:
        t += 1
    return t


@njit(cache=True)
def _jump(gen, x, t, Ls, cdf, offs):
    d = x.shape[0]
    L = Ls[t]
    N = 2 * L + 1
    f = np.int64(gen.random() * 2 * d)
    axis = f >> 1
    lo = offs[t]
    hi = offs[t + 1]
    u = gen.random()
    a = lo
    b = hi - 1
    while a < b:  # first k with cdf[k] > u
        mid = (a + b) >> 1
        if cdf[mid] > u:
            b = mid
        else:
            a = mid + 1
    k = a - lo
    if f & 1:
        x[axis] -= L + 1
    else:
        x[axis] += L + 1
    for i in range(d - 1, -1, -1):
        if i == axis:
            continue
        x[i] += (k % N) - L
        k //= N


@njit(cache=True)
def run_to_target(gen, x, pts, keys, vals, cnts, order, lo, hi, eps, slevel,
                  center, R2, Ls, cdf, offs, use_jumps, limit, floor=0):
    """Advance ``x`` in place; return the index of the target point met, or -1.

    In point mode only set points with ``floor <= index <= limit`` count as
    the target (so one index serves every window of an ordered set); distance
    bounds use the whole set, which keeps them valid.
    """
    d = x.shape[0]
    two_d = 2 * d
    cl = np.empty(d, dtype=np.int64)
    ch = np.empty(d, dtype=np.int64)
    cc = np.empty(d, dtype=np.int64)
    sausage = eps >= 1.0  # below 1 the sausage is the set itself
    hint = 0
    maxL = Ls[Ls.shape[0] - 1]
    while True:
        if sausage:
            j = sausage_lookup(pts, keys, vals, cnts, order, x, eps, slevel, cl, ch, cc)
        else:
            j = point_lookup(keys, vals, order, x)
            if j > limit or j < floor:
                j = -1
        if j >= 0:
            return j
        r2 = 0.0
        for i in range(d):
            dx = x[i] - center[i]
            r2 += dx * dx
        if r2 > R2:
            return -1
        L = np.int64(0)
        if use_jumps:
            D, hint = linf_distance_bound(keys, vals, lo, hi, x, hint, cl, ch, cc)
            if sausage:
                # the cube of half-width L must stay at Euclidean distance > eps
                L = np.int64(np.ceil(D - eps)) - 1
            else:
                L = D - 1
        if L >= 1:
            if L > maxL:
                L = maxL
            _jump(gen, x, _pick_table(Ls, L), Ls, cdf, offs)
        else:
            _step(gen, x, two_d)


@njit(cache=True)
def escape_batch(gen, starts, pts, keys, vals, cnts, order, lo, hi, eps, slevel,
                 center, R2, Ls, cdf, offs, use_jumps, limits):
    """Walks from each start: one forced step, then run to target (points with index <= limits[w]).

    Returns the hit index or -1 per walk.
    """
    n, d = starts.shape
    out = np.empty(n, dtype=np.int64)
    x = np.empty(d, dtype=np.int64)
    two_d = 2 * d
    for w in range(n):
        x[:] = starts[w]
        _step(gen, x, two_d)
        out[w] = run_to_target(gen, x, pts, keys, vals, cnts, order, lo, hi, eps, slevel,
                               center, R2, Ls, cdf, offs, use_jumps, limits[w])
    return out


@njit(cache=True)
def hit_batch(gen, starts, pts, keys, vals, cnts, order, lo, hi, eps, slevel,
              center, R2, Ls, cdf, offs, use_jumps):
    """Walks from each start (time 0 included).  Returns (hit index or -1, final distance to centre)."""
    n, d = starts.shape
    out = np.empty(n, dtype=np.int64)
    dist = np.empty(n, dtype=np.float64)
    x = np.empty(d, dtype=np.int64)
    big = pts.shape[0]
    for w in range(n):
        x[:] = starts[w]
        out[w] = run_to_target(gen, x, pts, keys, vals, cnts, order, lo, hi, eps, slevel,
                               center, R2, Ls, cdf, offs, use_jumps, big)
        r2 = 0.0
        for i in range(d):
            dx = x[i] - center[i]
            r2 += dx * dx
        dist[w] = np.sqrt(r2)
    return out, dist


@njit(cache=True)
def visit_batch(gen, n_walks, y, pts, keys, vals, cnts, order, lo, hi, R2, Ls, cdf, offs):
    """Visits to the single indexed site ``y`` by walks from 0 killed at |x|^2 > R2.

    Returns (visit counts, exit distance to y).
    """
    d = y.shape[0]
    two_d = 2 * d
    counts = np.zeros(n_walks, dtype=np.int64)
    dist = np.empty(n_walks, dtype=np.float64)
    x = np.empty(d, dtype=np.int64)
    center = np.zeros(d, dtype=np.float64)
    for w in range(n_walks):
        x[:] = 0
        while True:
            j = run_to_target(gen, x, pts, keys, vals, cnts, order, lo, hi, 0.0, 0,
                              center, R2, Ls, cdf, offs, True, 0)
            if j < 0:
                break
            counts[w] += 1
            _step(gen, x, two_d)
        r2 = 0.0
        for i in range(d):
            dx = float(x[i] - y[i])
            r2 += dx * dx
        dist[w] = np.sqrt(r2)
    return counts, dist


@njit(cache=True)
def horizon_batch(gen, n_walks, start, n_steps, keys, vals, order):
    """Walks of ``n_steps`` steps from ``start``; first step index (1-based) that meets the set, else -1."""
    d = start.shape[0]
    two_d = 2 * d
    out = np.empty(n_walks, dtype=np.int64)
    x = np.empty(d, dtype=np.int64)
    for w in range(n_walks):
        x[:] = start
        out[w] = -1
        for t in range(1, n_steps + 1):
            _step(gen, x, two_d)
            if point_lookup(keys, vals, order, x) >= 0:
                out[w] = t
                break
    return out


@njit(cache=True)
def escape_min_hits(gen, starts, pts, keys, vals, cnts, order, lo, hi, R2, Ls, cdf, offs, use_jumps):
    """Walks W[1,..) from each start, killed at |x|^2 > R2, watching an ordered set.

    Returns (smallest index >= 1 ever hit or ``len(pts)``, whether index 0 was hit).
    W avoids set[1..n] iff minpos > n, and avoids set[0..n] iff additionally
    index 0 was never hit, for every n at once.
    """
    n, d = starts.shape
    m = pts.shape[0]
    minpos = np.full(n, m, dtype=np.int64)
    hit0 = np.zeros(n, dtype=np.bool_)
    x = np.empty(d, dtype=np.int64)
    two_d = 2 * d
    center = np.zeros(d, dtype=np.float64)
    for w in range(n):
        x[:] = starts[w]
        _step(gen, x, two_d)
        while True:
            floor = 1 if hit0[w] else 0
            limit = minpos[w] - 1
            if floor > limit:
                break
            j = run_to_target(gen, x, pts, keys, vals, cnts, order, lo, hi, 0.0, 0,
                              center, R2, Ls, cdf, offs, use_jumps, limit, floor)
            if j < 0:
                break
            if j == 0:
                hit0[w] = True
            else:
                minpos[w] = j
            _step(gen, x, two_d)
    return minpos, hit0


# two-sided rejection sampling ---------------------------------------------

@njit(cache=True)
def point_table(pts, start, stop):
    """Hash table of pts[start:stop] (value = row index)."""
    d = pts.shape[1]
    cap = 16
    while cap < 2 * (stop - start) + 2:
        cap *= 2
    keys = np.zeros((cap, d), dtype=np.int64)
    vals = np.full(cap, -1, dtype=np.int64)
    for j in range(start, stop):
        table_put(keys, vals, pts[j], 0, j)
    return keys, vals


@njit(cache=True)
def pair_accepts(keys, vals, s2):
    """True iff no point of s2[1:] is in the table (the tail of LE(S1))."""
    for t in range(1, s2.shape[0]):
        if table_slot(keys, vals, s2[t], 0) != -1:
            return False
    return True


@njit(cache=True)
def _extend(gen, s, n_more):
    d = s.shape[1]
    more = srw_path(gen, d, n_more)
    out = np.empty((s.shape[0] + n_more, d), dtype=np.int64)
    out[: s.shape[0]] = s
    for t in range(1, n_more + 1):
        for i in range(d):
            out[s.shape[0] + t - 1, i] = s[s.shape[0] - 1, i] + more[t, i]
    return out


@njit(cache=True)
def two_sided_kernel(gen, d, side, horizon, max_attempts):
    """Rejection sampler: S1, S2 of ``horizon`` steps, accept iff LE(S1)[1:] misses S2[1:].

    A walk whose loop erasure is shorter than ``side`` + 1 is extended by
    further blocks of ``horizon`` steps first (the window only grows), so the
    acceptance test always sees both windows in full.  Returns
    (accepted, attempts, s1, le1_idx, s2, le2_idx).
    """
    attempts = 0
    while attempts < max_attempts:
        attempts += 1
        s1 = srw_path(gen, d, horizon)
        s2 = srw_path(gen, d, horizon)
        i1 = loop_erase_times(s1)
        while i1.shape[0] < side + 1:
            s1 = _extend(gen, s1, horizon)
            i1 = loop_erase_times(s1)
        i2 = loop_erase_times(s2)
        while i2.shape[0] < side + 1:
            s2 = _extend(gen, s2, horizon)
            i2 = loop_erase_times(s2)
        le1 = s1[i1]
        keys, vals = point_table(le1, 1, le1.shape[0])
        if pair_accepts(keys, vals, s2):
            return True, attempts, s1, i1, s2, i2
    empty = np.zeros((1, d), dtype=np.int64)
    return False, attempts, empty, np.zeros(1, dtype=np.int64), empty, np.zeros(1, dtype=np.int64)


@njit(cache=True)
def _odometer(word, base):
    i = word.shape[0] - 1
    while i >= 0:
        word[i] += 1
        if word[i] < base:
            return True
        word[i] = 0
        i -= 1
    return False


@njit(cache=True)
def _path_from_word(word, d, out):
    out[0, :] = 0
    for t in range(word.shape[0]):
        for i in range(d):
            out[t + 1, i] = out[t, i]
        f = word[t]
        out[t + 1, f >> 1] += 1 - 2 * (f & 1)


@njit(cache=True)
def acceptance_count_exact(d, h):
    """Number of (S1, S2) pairs of h-step walks accepted by the sampler's predicate."""
    base = 2 * d
    w1 = np.zeros(h, dtype=np.int64)
    w2 = np.zeros(h, dtype=np.int64)
    s1 = np.zeros((h + 1, d), dtype=np.int64)
    s2 = np.zeros((h + 1, d), dtype=np.int64)
    total = np.int64(0)
    more1 = True
    while more1:
        _path_from_word(w1, d, s1)
        le1 = s1[loop_erase_times(s1)]
        keys, vals = point_table(le1, 1, le1.shape[0])
        w2[:] = 0
        more2 = True
        while more2:
            _path_from_word(w2, d, s2)
            if pair_accepts(keys, vals, s2):
                total += 1
            more2 = _odometer(w2, base) if h > 0 else False
        more1 = _odometer(w1, base) if h > 0 else False
    return total


# loop erasure ----------------------------------------------------------

@njit(cache=True, inline="always")
def _same(a, b):
    for i in range(a.shape[0]):
        if a[i] != b[i]:
            return False
    return True


@njit(cache=True)
def _rehash(keys, vals, path, length):
    d = keys.shape[1]
    cnt = 0
    for s in range(keys.shape[0]):
        v = vals[s]
        if v != -1 and v < length and _same(path[v], keys[s]):
            cnt += 1
    cap = 16
    while cap < 4 * (cnt + 1):
        cap *= 2
    nk = np.zeros((cap, d), dtype=np.int64)
    nv = np.full(cap, -1, dtype=np.int64)
    for s in range(keys.shape[0]):
        v = vals[s]
        if v != -1 and v < length and _same(path[v], keys[s]):
            table_put(nk, nv, keys[s], 0, v)
    return nk, nv, cnt


@njit(cache=True)
def loop_erase_times(omega):
    """Chronological loop erasure of a finite path; returns the kept indices (erasure times)."""
    n, d = omega.shape
    path_idx = np.empty(n, dtype=np.int64)  # index into omega of each kept point
    cap = 16
    while cap < 2 * n + 2:
        cap *= 2
    keys = np.zeros((cap, d), dtype=np.int64)
    vals = np.full(cap, -1, dtype=np.int64)
    length = 0
    for k in range(n):
        s = table_slot(keys, vals, omega[k], 0)
        if s != -1:
            v = vals[s]
            if v < length and _same(omega[path_idx[v]], omega[k]):
                length = v + 1
                continue
            vals[s] = length
        else:
            table_put(keys, vals, omega[k], 0, length)
        path_idx[length] = k
        length += 1
    return path_idx[:length].copy()


@njit(cache=True)
def cut_time_mask(omega):
    """mask[n] is True iff omega[0..n] and omega[n+1..] are disjoint."""
    n, d = omega.shape
    cap = 16
    while cap < 2 * n + 2:
        cap *= 2
    keys = np.zeros((cap, d), dtype=np.int64)
    vals = np.full(cap, -1, dtype=np.int64)
    for k in range(n):
        table_put(keys, vals, omega[k], 0, k)  # overwrite: last occurrence
    mask = np.zeros(n, dtype=np.bool_)
    running = -1
    for k in range(n):
        last = vals[table_slot(keys, vals, omega[k], 0)]
        if last > running:
            running = last
        mask[k] = running <= k
    return mask


@njit(cache=True)
def _occ_new(n_levels, d, n_items):
    cap = 16
    while cap < 2 * n_items + 2:
        cap *= 2
    keys = np.zeros((n_levels, cap, d), dtype=np.int64)
    vals = np.full((n_levels, cap), -1, dtype=np.int64)
    return keys, vals


@njit(cache=True)
def _occ_insert(keys, vals, pts, a, b, lo, hi):
    """Mark the cells of pts[a:b] at every level >= 1 and widen the box."""
    d = pts.shape[1]
    for j in range(a, b):
        for k in range(1, keys.shape[0]):
            table_put(keys[k], vals[k], pts[j], k, 1)
        for i in range(d):
            if pts[j, i] < lo[i]:
                lo[i] = pts[j, i]
            if pts[j, i] > hi[i]:
                hi[i] = pts[j, i]


@njit(cache=True)
def _run_to_prefix(gen, y, path, length, lkeys, lvals, okeys, ovals, lo, hi, R2,
                   Ls, cdf, offs, use_jumps):
    """Walk from ``y`` until it meets path[:length] (returns the index) or |y|^2 > R2 (-1).

    Membership comes from the online erasure table; distance bounds come from
    the occupancy levels, which may cover a superset of the prefix (the bounds
    stay valid).
    """
    d = y.shape[0]
    two_d = 2 * d
    cl = np.empty(d, dtype=np.int64)
    ch = np.empty(d, dtype=np.int64)
    cc = np.empty(d, dtype=np.int64)
    hint = 0
    maxL = Ls[Ls.shape[0] - 1]
    while True:
        s = table_slot(lkeys, lvals, y, 0)
        if s != -1:
            v = lvals[s]
            if v < length and _same(path[v], y):
                return v
        r2 = 0.0
        for i in range(d):
            r2 += float(y[i]) * float(y[i])
        if r2 > R2:
            return -1
        L = np.int64(0)
        if use_jumps:
            D, hint = linf_distance_bound(okeys, ovals, lo, hi, y, hint, cl, ch, cc)
            L = D - 1
        if L >= 1:
            if L > maxL:
                L = maxL
            _jump(gen, y, _pick_table(Ls, L), Ls, cdf, offs)
        else:
            _step(gen, y, two_d)


@njit(cache=True)
def lerw_kernel(gen, d, target_len, safety, track_times, Ls, cdf, offs, n_levels, use_jumps):
    """Loop-erased walk prefix of ``target_len`` steps from an (effectively) infinite SRW.

    The online erasure runs until it holds ``target_len + 1`` points P.  P can
    only change later if the walk comes back to P, so the walk is then run
    until it either returns to P (erase back to the point hit and resume) or
    leaves the ball of radius ``safety * max|P|``, at which point P is frozen.
    ``safety <= 0`` skips the check and returns the finite-time prefix.

    With ``track_times`` the check walks step by step so the erasure times
    stay meaningful; otherwise it may jump, and the times are flagged invalid
    once a return is found that way.

    Returns (path, times, srw_steps, freeze_attempts, times_valid).
    """
    two_d = 2 * d
    n1 = target_len + 1
    path = np.zeros((n1, d), dtype=np.int64)
    times = np.zeros(n1, dtype=np.int64)
    keys = np.zeros((64, d), dtype=np.int64)
    vals = np.full(64, -1, dtype=np.int64)
    x = np.zeros(d, dtype=np.int64)
    table_put(keys, vals, x, 0, 0)
    used = 1
    length = 1
    t = 0
    attempts = 0
    times_valid = True
    y = np.empty(d, dtype=np.int64)
    okeys, ovals = _occ_new(n_levels, d, 2 * n1)
    olo = np.zeros(d, dtype=np.int64)
    ohi = np.zeros(d, dtype=np.int64)
    oin = 0  # path[:oin] is already marked in the occupancy levels
    ocount = 0
    while True:
        while length < n1:
            _step(gen, x, two_d)
            t += 1
            s = table_slot(keys, vals, x, 0)
            if s != -1:
                v = vals[s]
                if v < length and _same(path[v], x):
                    length = v + 1
                    continue
                vals[s] = length
            else:
                if 2 * (used + 1) >= keys.shape[0]:
                    keys, vals, used = _rehash(keys, vals, path, length)
                table_put(keys, vals, x, 0, length)
                used += 1
            path[length, :] = x
            times[length] = t
            length += 1
        if safety <= 0.0:
            break
        attempts += 1
        maxr2 = 0.0
        for j in range(n1):
            r2 = 0.0
            for i in range(d):
                r2 += float(path[j, i]) * float(path[j, i])
            if r2 > maxr2:
                maxr2 = r2
        R2 = safety * safety * max(maxr2, 1.0)
        y[:] = x
        hit = -1
        if track_times:
            while True:
                _step(gen, y, two_d)
                t += 1
                s = table_slot(keys, vals, y, 0)
                if s != -1:
                    v = vals[s]
                    if v < length and _same(path[v], y):
                        hit = v
                        break
                r2 = 0.0
                for i in range(d):
                    r2 += float(y[i]) * float(y[i])
                if r2 > R2:
                    break
        else:
            if use_jumps:
                if ocount + (n1 - oin) > 2 * n1:
                    okeys, ovals = _occ_new(n_levels, d, 2 * n1)
                    olo[:] = path[0]
                    ohi[:] = path[0]
                    oin = 0
                    ocount = 0
                _occ_insert(okeys, ovals, path, oin, n1, olo, ohi)
                ocount += n1 - oin
                oin = n1
            _step(gen, y, two_d)
            hit = _run_to_prefix(gen, y, path, length, keys, vals, okeys, ovals, olo, ohi,
                                 R2, Ls, cdf, offs, use_jumps)
            if hit >= 0:
                times_valid = False
        if hit < 0:
            break
        length = hit + 1
        if length < oin:
            oin = length
        x[:] = path[hit]
    return path, times, t, attempts, times_valid


@njit(cache=True)
def sausage_mask(cands, pts, keys, vals, cnts, order, eps, slevel):
    """Which candidate points lie within distance eps of the indexed set."""
    d = cands.shape[1]
    out = np.zeros(cands.shape[0], dtype=np.bool_)
    cl = np.empty(d, dtype=np.int64)
    ch = np.empty(d, dtype=np.int64)
    cc = np.empty(d, dtype=np.int64)
    for i in range(cands.shape[0]):
        out[i] = sausage_lookup(pts, keys, vals, cnts, order, cands[i], eps, slevel, cl, ch, cc) >= 0
    return out
