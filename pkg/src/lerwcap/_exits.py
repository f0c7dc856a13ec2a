"""Exact exit distributions of simple random walk from the centre of a cube.

For the cube Q_L = {z : |z_i| <= L} the walk started at 0 leaves through a
site (±(L+1), y) with y in [-L, L]^(d-1); by symmetry every face carries mass
1/(2d) with the same profile.  The profile is (1/2d) G_Q(0, (L, y)) where G_Q
is the Green's function killed outside Q.  G_Q is diagonal in the sine basis,

    G_Q(a, b) = sum_k prod_i phi_{k_i}(a_i) phi_{k_i}(b_i) / (1 - (1/d) sum_i cos theta_{k_i}),

so summing over the first mode explicitly and transforming the remaining
d-1 axes with an orthonormal DST-I gives the whole face in O(N^d) work and
O(N^(d-1)) memory, N = 2L+1.

Tables are cached in memory and, when possible, on disk.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.fft import dstn

# face tables are kept below this many entries
_MAX_FACE_SITES = 1_200_000
_LADDER = (1, 2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64, 96, 128, 192, 256)


def face_exit_profile(d: int, L: int) -> np.ndarray:
    """Probability of leaving Q_L through each site of the face x_1 = L+1.

    Shape ``(2L+1,) * (d-1)``; the array sums to 1/(2d).
    """
    if d < 2 or L < 0:
        raise ValueError("need d >= 2 and L >= 0")
    N = 2 * L + 1
    j = np.arange(N)
    k = np.arange(1, N + 1)
    phi = np.sqrt(2.0 / (N + 1)) * np.sin(np.pi * np.outer(k, j + 1) / (N + 1))
    c = np.cos(np.pi * k / (N + 1))
    centre = phi[:, L]
    first = phi[:, L] * phi[:, N - 1]

    shape = (N,) * (d - 1)
    s_rest = np.zeros(shape)
    weight = np.ones(shape)
    for axis in range(d - 1):
        bshape = [1] * (d - 1)
        bshape[axis] = N
        s_rest = s_rest + c.reshape(bshape)
        weight = weight * centre.reshape(bshape)
    F = np.zeros(shape)
    for k1 in range(N):
        F += first[k1] / (1.0 - (c[k1] + s_rest) / d)
    face = dstn(weight * F, type=1, norm="ortho") if d > 1 else weight * F
    face = np.clip(face, 0.0, None) / (2 * d)
    return face


def max_table_half_width(d: int) -> int:
    best = 1
    for L in _LADDER:
        if (2 * L + 1) ** (d - 1) <= _MAX_FACE_SITES:
            best = L
    return best


@dataclass(frozen=True)
class ExitTables:
    d: int
    Ls: np.ndarray  # increasing half-widths
    cdf: np.ndarray  # concatenated per-face CDFs (each ends at 1.0)
    offsets: np.ndarray  # cdf[offsets[t]:offsets[t+1]] belongs to Ls[t]

    @property
    def max_L(self) -> int:
        return int(self.Ls[-1])

    def args(self):
        return (self.Ls, self.cdf, self.offsets)


def _cache_dir() -> Path | None:
    root = os.environ.get("LERWCAP_CACHE")
    path = Path(root) if root else Path.home() / ".cache" / "lerwcap"
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError:
        return None
    return path


def _face_cdf(d: int, L: int) -> np.ndarray:
    cache = _cache_dir()
    fname = cache / f"exit_d{d}_L{L}.npy" if cache else None
    if fname is not None and fname.exists():
        try:
            return np.load(fname)
        except (OSError, ValueError):
            pass
    prof = face_exit_profile(d, L).ravel()
    cdf = np.cumsum(prof)
    cdf /= cdf[-1]
    cdf[-1] = 1.0
    if fname is not None:
        tmp = fname.with_suffix(f".{os.getpid()}.tmp.npy")
        try:
            np.save(tmp, cdf)
            os.replace(tmp, fname)
        except OSError:
            pass
    return cdf


@lru_cache(maxsize=None)
def exit_tables(d: int, max_L: int | None = None) -> ExitTables:
    top = max_table_half_width(d) if max_L is None else min(max_L, max_table_half_width(d))
    Ls = [L for L in _LADDER if L <= top]
    cdfs = [_face_cdf(d, L) for L in Ls]
    offsets = np.zeros(len(cdfs) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([len(c) for c in cdfs])
    return ExitTables(d, np.array(Ls, dtype=np.int64), np.concatenate(cdfs), offsets)
