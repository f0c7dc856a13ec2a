"""Geometry of Z^d: points, neighbours, norms, sausages and point sets.

Points are plain tuples of Python ints (exact, hashable, immutable).  Bulk
data (paths, large sets) travels as ``(n, d)`` int64 arrays.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Iterator, Sequence
from pathlib import Path

import numpy as np

LatticePoint = tuple[int, ...]


def origin(d: int) -> LatticePoint:
    return (0,) * d


def unit(d: int, i: int, sign: int = 1) -> LatticePoint:
    e = [0] * d
    e[i] = sign
    return tuple(e)


def step_vectors(d: int) -> np.ndarray:
    """The 2d unit steps in the fixed order +e1, -e1, +e2, -e2, ..."""
    steps = np.zeros((2 * d, d), dtype=np.int64)
    for i in range(d):
        steps[2 * i, i] = 1
        steps[2 * i + 1, i] = -1
    return steps


def neighbors(p: Sequence[int]) -> list[LatticePoint]:
    """Nearest neighbours of ``p`` in the order +e1, -e1, +e2, -e2, ..."""
    p = tuple(int(c) for c in p)
    out = []
    for i in range(len(p)):
        for s in (1, -1):
            q = list(p)
            q[i] += s
            out.append(tuple(q))
    return out


def euclidean_norm(p: Sequence[int]) -> float:
    return math.sqrt(sum(int(c) * int(c) for c in p))


def l1_norm(p: Sequence[int]) -> int:
    return sum(abs(int(c)) for c in p)


def as_points(points: Iterable[Sequence[int]] | np.ndarray, d: int | None = None) -> np.ndarray:
    """Coerce a collection of points (or a path object) to an ``(n, d)`` int64 array."""
    if hasattr(points, "points") and not isinstance(points, np.ndarray):
        points = points.points
    if isinstance(points, PointSet):
        points = points.to_array()
    arr = np.asarray(points if isinstance(points, np.ndarray) else list(points), dtype=np.int64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1) if arr.size else arr.reshape(0, d or 0)
    if d is not None and arr.shape[1] != d:
        raise ValueError(f"expected dimension {d}, got {arr.shape[1]}")
    return arr


class PointSet:
    """Finite set of lattice points with O(1) membership and insertion order kept."""

    def __init__(self, points: Iterable[Sequence[int]] = (), d: int | None = None):
        self._index: dict[LatticePoint, int] = {}
        self.d = d
        for p in points:
            self.add(p)

    def add(self, p: Sequence[int]) -> bool:
        p = tuple(int(c) for c in p)
        if self.d is None:
            self.d = len(p)
        elif len(p) != self.d:
            raise ValueError("all points of a PointSet share one dimension")
        if p in self._index:
            return False
        self._index[p] = len(self._index)
        return True

    def __contains__(self, p) -> bool:
        return tuple(int(c) for c in p) in self._index

    def __len__(self) -> int:
        return len(self._index)

    def __iter__(self) -> Iterator[LatticePoint]:
        return iter(self._index)

    def index(self, p: Sequence[int]) -> int:
        return self._index[tuple(int(c) for c in p)]

    def to_array(self) -> np.ndarray:
        if not self._index:
            return np.zeros((0, self.d or 0), dtype=np.int64)
        return np.array(list(self._index), dtype=np.int64)

    def __repr__(self) -> str:
        return f"PointSet(n={len(self)}, d={self.d})"


def sausage_contains(A, eps: float, z: Sequence[int]) -> bool:
    """True iff ``z`` lies within Euclidean distance ``eps`` of the set ``A``."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    arr = as_points(A)
    if len(arr) == 0:
        raise ValueError("sausage of the empty set is undefined")
    diff = arr - np.asarray(z, dtype=np.int64)
    return bool((np.einsum("ij,ij->i", diff, diff) <= eps * eps).any())


def set_radius(points: np.ndarray, center: np.ndarray | None = None) -> float:
    """Largest Euclidean distance from ``center`` (default: bounding-box centre)."""
    if center is None:
        center = bounding_center(points)
    diff = points - center
    return float(np.sqrt(np.einsum("ij,ij->i", diff, diff).max()))


def bounding_center(points: np.ndarray) -> np.ndarray:
    return (points.min(axis=0) + points.max(axis=0)) / 2.0


# serialization ------------------------------------------------------------

def format_point(p: Sequence[int]) -> str:
    return ",".join(str(int(c)) for c in p)


def parse_point(text: str) -> LatticePoint:
    return tuple(int(t) for t in text.strip().split(","))


def dump_path(points, target) -> None:
    """Write one comma-separated point per line to a path or file object."""
    lines = "".join(format_point(p) + "\n" for p in as_points(points))
    if hasattr(target, "write"):
        target.write(lines)
    else:
        Path(target).write_text(lines)


def load_path(source) -> np.ndarray:
    text = source.read() if hasattr(source, "read") else Path(source).read_text()
    rows = [parse_point(line) for line in text.splitlines() if line.strip() and not line.startswith("#")]
    if not rows:
        raise ValueError("no points found")
    return np.array(rows, dtype=np.int64)
