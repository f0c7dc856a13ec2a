import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lerwcap.lattice import (PointSet, dump_path, euclidean_norm, format_point, l1_norm, load_path, neighbors,
                             parse_point, sausage_contains, set_radius, step_vectors)

points3 = st.tuples(*[st.integers(-50, 50)] * 3)


def test_neighbors_order_d3():
    assert neighbors((0, 0, 0)) == [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]


def test_neighbors_d4():
    nb = neighbors((1, 1, 1, 1))
    assert len(nb) == 8 and len(set(nb)) == 8
    assert all(sum(abs(a - b) for a, b in zip(q, (1, 1, 1, 1))) == 1 for q in nb)


def test_step_vectors_match_neighbor_order():
    assert [tuple(v) for v in step_vectors(4)] == neighbors((0, 0, 0, 0))


@given(st.tuples(*[st.integers(-10**6, 10**6)] * 5))
def test_neighbors_symmetric_and_unit(p):
    for q in neighbors(p):
        assert l1_norm(np.subtract(q, p)) == 1
        assert p in neighbors(q)


@pytest.mark.parametrize("p,v", [((0, 0, 0), 0.0), ((3, 4, 0), 5.0), ((1, 1, 1, 1), 2.0)])
def test_euclidean_norm(p, v):
    assert euclidean_norm(p) == v


def test_sausage_examples():
    assert sausage_contains([(0, 0, 0)], 0, (0, 0, 0))
    assert sausage_contains([(0, 0, 0)], 1.5, (1, 1, 0))
    assert not sausage_contains([(0, 0, 0)], 1, (1, 1, 0))


def test_sausage_errors():
    with pytest.raises(ValueError):
        sausage_contains([], 1.0, (0, 0, 0))
    with pytest.raises(ValueError):
        sausage_contains([(0, 0, 0)], -0.5, (0, 0, 0))


@given(st.lists(points3, min_size=1, max_size=8), points3, st.floats(0, 40), st.floats(0, 40))
def test_sausage_monotone(A, z, e1, e2):
    lo, hi = sorted((e1, e2))
    if sausage_contains(A, lo, z):
        assert sausage_contains(A, hi, z)


@given(st.lists(points3, max_size=30))
def test_pointset_consistent(pts):
    s = PointSet(pts, d=3)
    assert len(s) == len(set(pts))
    assert all(p in s for p in pts)
    assert list(s) == list(dict.fromkeys(pts))
    assert len(np.unique(s.to_array(), axis=0)) == len(s)


def test_pointset_rejects_mixed_dimension():
    s = PointSet([(0, 0, 0)])
    with pytest.raises(ValueError):
        s.add((0, 0))


@given(st.lists(points3, min_size=1, max_size=20))
def test_path_roundtrip(pts):
    buf = io.StringIO()
    dump_path(pts, buf)
    buf.seek(0)
    assert load_path(buf).tolist() == [list(p) for p in pts]
    assert parse_point(format_point(pts[0])) == pts[0]


def test_set_radius():
    assert math.isclose(set_radius(np.array([[0, 0, 0], [2, 0, 0]])), 1.0)
