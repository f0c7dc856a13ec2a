import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lerwcap.capacity import (EstimateRecord, capacity_decomposition_mc, capacity_mc, capacity_via_hitting,
                              escape_probability_mc, harmonic_measure_counts, harmonic_measure_sample,
                              hit_probabilities, sausage_capacity_mc, shell_starts)
from lerwcap.green import capacity_from_green
from lerwcap.rng import RngStream
from lerwcap.walk import lerw_sample

CAP0 = 0.659462670449  # 1 / G(0,0)
CAP01 = 0.983878115009  # 2 / (G(0,0) + G(0,e1))
O3, E1 = (0, 0, 0), (1, 0, 0)


def joint(*ses):
    return math.sqrt(sum(s * s for s in ses))


def test_escape_bracket_singleton():
    est = escape_probability_mc([O3], O3, 200, 200_000, RngStream(1))
    assert 0 <= est.lower <= est.upper <= 1
    assert est.lower <= CAP0 <= est.upper
    assert est.truncation < 0.01


def test_escape_bracket_shrinks_with_radius():
    ests = [escape_probability_mc([O3], O3, R, 1000, RngStream(2)) for R in (20, 50, 200)]
    assert ests[0].truncation > ests[1].truncation > ests[2].truncation


def test_escape_from_closed_unit_ball_is_zero():
    ball = [O3] + [tuple(int(c) for c in v) for v in np.vstack([np.eye(3), -np.eye(3)]).astype(int)]
    est = escape_probability_mc(ball, O3, 50, 2000, RngStream(3))
    assert est.successes == 0 and est.upper == 0.0


def test_escape_errors():
    with pytest.raises(ValueError):
        escape_probability_mc([O3], O3, 200, 0, RngStream(1))
    with pytest.raises(ValueError):
        escape_probability_mc([O3, (5, 0, 0)], O3, 8, 10, RngStream(1))
    with pytest.raises(ValueError):
        escape_probability_mc([O3], E1, 200, 10, RngStream(1))


@settings(max_examples=15)
@given(st.integers(0, 2**32))
def test_escape_pathwise_monotone_in_set(seed):
    # stepwise walks consume one draw per step, so a shared stream gives the same paths for both sets
    A = [O3, (2, 0, 0)]
    B = A + [(0, 2, 0), (1, 1, 0)]
    a = escape_probability_mc(A, O3, 30, 300, RngStream(seed), use_jumps=False)
    b = escape_probability_mc(B, O3, 30, 300, RngStream(seed), use_jumps=False)
    assert b.successes <= a.successes


def test_capacity_pair_and_singleton():
    rec = capacity_mc([O3, E1], 100, 100_000, RngStream(4))
    assert abs(rec.value - CAP01) < 4 * rec.stderr + 0.01
    lo, hi = rec.bracket
    assert lo <= rec.value <= hi


def test_capacity_matches_green_oracle_random_sets():
    gen = np.random.default_rng(5)
    for i in range(3):
        A = np.unique(gen.integers(-2, 3, size=(5, 3)), axis=0)
        rec = capacity_mc(A, 60, 20_000, RngStream(5, i))
        assert abs(rec.value - capacity_from_green(A)) < 4 * rec.stderr + 0.01


def test_capacity_bounds():
    A = [O3, E1, (2, 0, 0), (0, 3, 0)]
    rec = capacity_mc(A, 60, 2000, RngStream(6))
    assert 0 <= rec.value <= len(A)


def test_subadditivity_mc():
    A, B = [O3, E1], [(0, 1, 0), (1, 1, 0)]
    ca = capacity_mc(A, 60, 20_000, RngStream(7))
    cb = capacity_mc(B, 60, 20_000, RngStream(8))
    cu = capacity_mc(A + B, 60, 20_000, RngStream(9))
    assert cu.value <= ca.value + cb.value + 3 * joint(ca.stderr, cb.stderr, cu.stderr)


def test_decomposition_singleton_and_reversal():
    s1 = capacity_decomposition_mc([O3], 100, 50_000, RngStream(10))
    s2 = capacity_mc([O3], 100, 50_000, RngStream(11))
    assert abs(s1.value - s2.value) < 3 * joint(s1.stderr, s2.stderr)
    A = [O3, E1, (1, 1, 0), (1, 1, 1), (2, 1, 1)]
    f = capacity_decomposition_mc(A, 60, 20_000, RngStream(12))
    r = capacity_decomposition_mc(A[::-1], 60, 20_000, RngStream(13))
    assert abs(f.value - r.value) < 3 * joint(f.stderr, r.stderr)
    with pytest.raises(ValueError):
        capacity_decomposition_mc([O3, O3], 60, 10, RngStream(1))


def test_subsample_estimate_unbiased_scale():
    eta = lerw_sample(5, 200, RngStream(14)).points
    full = capacity_mc(eta, 150, 200, RngStream(15))
    sub = capacity_mc(eta, 150, 200, RngStream(16), subsample=60)
    assert sub.params["simulated_points"] == 60
    assert abs(full.value - sub.value) < 3 * joint(full.stderr, sub.stderr)


def test_hitting_singleton_pair_and_radius_stability():
    a = capacity_via_hitting([O3], 10, 100_000, RngStream(17))
    assert abs(a.value - CAP0) < 4 * a.stderr
    b = capacity_via_hitting([O3, E1], 10, 100_000, RngStream(18))
    assert abs(b.value - CAP01) < 4 * b.stderr
    c = capacity_via_hitting([O3, E1], 20, 100_000, RngStream(19))
    assert abs(b.value - c.value) < 3 * joint(b.stderr, c.stderr)
    with pytest.raises(ValueError):
        capacity_via_hitting([O3, (4, 0, 0)], 3, 100, RngStream(1))


def test_shell_starts_on_shell():
    gen = np.random.default_rng(0)
    pts = shell_starts(3, np.zeros(3), 20.0, 5000, gen)
    r = np.linalg.norm(pts, axis=1)
    assert np.all(np.abs(r - 20) <= 1)
    # roughly isotropic
    assert np.all(np.abs(np.sign(pts).mean(axis=0)) < 0.1)


def test_hit_probabilities_time_zero():
    starts = np.array([[0, 0, 0], [0, 0, 0]])
    assert hit_probabilities([O3], starts, 10, RngStream(1)).all()


def test_harmonic_measure_examples():
    assert harmonic_measure_sample([O3], 6, RngStream(20)) in (O3, None)
    counts, misses = harmonic_measure_counts([O3, E1], 6, 20000, RngStream(21))
    n = counts.sum()
    assert abs(counts[0] - counts[1]) < 4 * math.sqrt(n)  # 4 sigma of a fair split
    assert misses + n == 20000


def test_harmonic_measure_factorization():
    # cap(A) = cap(B) * P_{h(B)}(hit A) for A inside B
    B = np.array([O3, E1, (0, 1, 0), (1, 1, 0)])
    A = np.array([O3])
    counts, _ = harmonic_measure_counts(B, 8, 40000, RngStream(22))
    starts = np.repeat(B, counts, axis=0)
    p = hit_probabilities(A, starts, 80, RngStream(23)).mean()
    se = math.sqrt(p * (1 - p) / len(starts))
    capB = capacity_from_green(B)
    assert abs(capB * p - CAP0) < 3 * capB * se + 0.01


def test_sausage_capacity():
    eta = lerw_sample(3, 64, RngStream(24)).points
    s0 = sausage_capacity_mc(eta, 0.0, 60, 20000, RngStream(25))
    h0 = capacity_via_hitting(eta, 60, 20000, RngStream(25))
    assert s0.value == h0.value
    s2 = sausage_capacity_mc(eta, 2.0, 60, 20000, RngStream(26))
    s4 = sausage_capacity_mc(eta, 4.0, 60, 20000, RngStream(27))
    assert s0.value < s2.value + 3 * joint(s0.stderr, s2.stderr)
    assert s2.value < s4.value + 3 * joint(s2.stderr, s4.stderr)
    with pytest.raises(ValueError):
        sausage_capacity_mc(eta, -1.0, 60, 100, RngStream(1))


def test_estimate_record_serialization():
    rec = capacity_mc([O3], 50, 100, RngStream(3, 4))
    d = json.loads(rec.to_json())
    assert d["method"] == "escape_sum" and d["provenance"]["seed"] == 3
    row = rec.csv_row()
    assert len(row) == len(EstimateRecord.CSV_COLUMNS) and row[0] == "escape_sum"


def test_hitting_without_hits_warns_and_has_no_stderr():
    # hit chance from radius 200 in d=5 is about 1e-8 per walk
    with pytest.warns(RuntimeWarning):
        rec = capacity_via_hitting([[0, 0, 0, 0, 0]], 200.0, 2, RngStream(0))
    assert rec.value == 0 and math.isnan(rec.stderr)
