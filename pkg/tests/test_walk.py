import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from lerwcap.rng import RngStream
from lerwcap.walk import (LoopErasedPath, NearestNeighborPath, cut_times, cylinder_counts, cylinder_frequency,
                          erasure_counts, lerw_sample, loop_erase, loop_erase_reference, shift, srw_sample)

E1, E2 = (1, 0, 0), (0, 1, 0)


def path(*pts):
    return NearestNeighborPath(np.array(pts))


def random_path(d, n, seed):
    return srw_sample(d, n, RngStream(seed))


walks = st.builds(random_path, st.integers(3, 5), st.integers(0, 300), st.integers(0, 2**32))


def test_nearest_neighbor_validation():
    with pytest.raises(ValueError):
        path((0, 0, 0), (2, 0, 0))
    with pytest.raises(ValueError):
        NearestNeighborPath(np.zeros((0, 3), dtype=np.int64))


def test_srw_zero_steps():
    assert srw_sample(3, 0, RngStream(1)).points.tolist() == [[0, 0, 0]]


def test_srw_deterministic():
    assert srw_sample(4, 500, RngStream(9, 3)) == srw_sample(4, 500, RngStream(9, 3))
    assert srw_sample(4, 500, RngStream(9, 3)) != srw_sample(4, 500, RngStream(9, 4))


def test_srw_direction_frequencies_uniform():
    pts = srw_sample(3, 10**6, RngStream(5)).points
    counts = cylinder_counts(pts, 1, len(pts) - 2)
    assert stats.chisquare(counts).pvalue > 1e-4


def test_loop_erase_examples():
    le = loop_erase(path((0, 0, 0), E1, (1, 1, 0)))
    assert le.points.tolist() == [[0, 0, 0], [1, 0, 0], [1, 1, 0]]
    assert le.erasure_times.tolist() == [0, 1, 2]
    le = loop_erase(path((0, 0, 0), E1, (0, 0, 0), E2))
    assert le.points.tolist() == [[0, 0, 0], [0, 1, 0]]
    assert le.erasure_times.tolist() == [0, 3]


def test_loop_erase_empty_rejected():
    with pytest.raises(ValueError):
        loop_erase(np.zeros((0, 3), dtype=np.int64))


@given(walks)
def test_loop_erase_matches_reference(omega):
    le = loop_erase(omega)
    ref_pts, ref_ell = loop_erase_reference(omega)
    assert np.array_equal(le.points, ref_pts)
    assert np.array_equal(le.erasure_times, ref_ell)
    assert np.array_equal(omega.points[le.erasure_times], le.points)
    assert len(np.unique(le.points, axis=0)) == len(le.points)
    assert np.array_equal(loop_erase(le.points).points, le.points)


@given(walks)
def test_concatenation_at_cut_times(omega):
    le = loop_erase(omega).points
    pts = omega.points
    for c in cut_times(omega)[:5]:
        head = loop_erase(pts[: c + 1]).points
        tail = loop_erase(pts[c:] - pts[c]).points + pts[c]
        assert np.array_equal(np.concatenate([head, tail[1:]]), le)


def test_erasure_counts_example():
    le = loop_erase(path((0, 0, 0), E1, (0, 0, 0), E2))
    assert [erasure_counts(le, j) for j in range(4)] == [0, 0, 0, 1]
    with pytest.raises(ValueError):
        erasure_counts(le, 4)


@given(walks)
def test_erasure_counts_monotone(omega):
    le = loop_erase(omega)
    rho = [erasure_counts(le, j) for j in range(omega.n_steps + 1)]
    assert all(a <= b for a, b in zip(rho, rho[1:]))
    assert rho[-1] == len(le.points) - 1


def test_cut_times_examples():
    assert cut_times(path((0, 0, 0), E1, (0, 0, 0), E2)).tolist() == [2, 3]
    straight = path(*[(k, 0, 0) for k in range(6)])
    assert cut_times(straight).tolist() == list(range(6))


@given(walks)
def test_cut_times_bruteforce(omega):
    pts = [tuple(p) for p in omega.points]
    expected = [n for n in range(len(pts)) if not set(pts[: n + 1]) & set(pts[n + 1:])]
    assert cut_times(omega).tolist() == expected


def test_shift_examples():
    assert shift(path((0, 0, 0), E1, (1, 1, 0)), 1).points.tolist() == [[0, 0, 0], [0, 1, 0]]
    with pytest.raises(ValueError):
        shift(path((0, 0, 0), E1), 2)


@given(walks)
def test_shift_semigroup(omega):
    if omega.n_steps >= 2:
        assert shift(shift(omega, 1), 1) == shift(omega, 2)
    assert shift(omega, 0) == omega


def test_cylinder_frequency_trivial():
    eta = lerw_sample(4, 500, RngStream(2))
    assert cylinder_frequency(eta, np.zeros((1, 4), dtype=np.int64), 100) == 1.0
    steps = np.vstack([np.zeros((1, 4), dtype=np.int64), np.eye(4, dtype=np.int64)])
    xis = [np.array([np.zeros(4, dtype=np.int64), s]) for s in np.vstack([np.eye(4), -np.eye(4)]).astype(np.int64)]
    total = sum(cylinder_frequency(eta, xi, 400) for xi in xis)
    assert abs(total - 1.0) < 1e-12
    del steps
    with pytest.raises(ValueError):
        cylinder_frequency(eta, xis[0], 500)


def test_lerw_target_len_one_uniform():
    first = [tuple(lerw_sample(3, 1, RngStream(11, i)).points[1]) for i in range(3000)]
    vals, counts = np.unique(np.array(first), axis=0, return_counts=True)
    assert len(vals) == 6
    assert stats.chisquare(counts).pvalue > 1e-4


@pytest.mark.parametrize("d", [3, 4, 5])
def test_lerw_self_avoiding_and_metadata(d):
    eta = lerw_sample(d, 2000, RngStream(d))
    assert len(eta.points) == 2001
    assert len(np.unique(eta.points, axis=0)) == 2001
    assert eta.metadata["safety_factor"] == 3.0
    assert eta.erasure_times is None


@pytest.mark.parametrize("d", [3, 4, 5])
def test_lerw_tracked_times_replay(d):
    for s in range(5):
        eta = lerw_sample(d, 300, RngStream(40 + s), track_times=True)
        omega = srw_sample(d, eta.source_length, RngStream(40 + s))
        le = loop_erase(omega)
        assert np.array_equal(le.points[:301], eta.points)
        assert np.array_equal(le.erasure_times[:301], eta.erasure_times)


def test_lerw_superdiffusive_d3():
    ns = [2**8, 2**10, 2**12]
    norms = np.array([[np.linalg.norm(lerw_sample(3, ns[-1], RngStream(7, i)).points[n]) for n in ns]
                      for i in range(40)]).mean(axis=0)
    ratios = norms / np.sqrt(ns)
    assert ratios[0] < ratios[1] < ratios[2]


def test_loop_erased_path_validation():
    with pytest.raises(ValueError):
        LoopErasedPath(np.array([[0, 0, 0], [1, 0, 0], [0, 0, 0]]), None, 2)


def test_cylinder_counts_self_consistency_d4():
    # two independent samples agree on a two-step pattern frequency within 6 joint standard errors
    xi = np.array([[0, 0, 0, 0], [1, 0, 0, 0], [1, 1, 0, 0]])
    n = 20000
    vals = [[cylinder_frequency(lerw_sample(4, n + 2, RngStream(s, i)), xi, n) for i in range(10)] for s in (1, 2)]
    a, b = np.array(vals)
    joint = np.sqrt(a.var(ddof=1) / len(a) + b.var(ddof=1) / len(b))
    assert abs(a.mean() - b.mean()) < 6 * joint + 1e-12
