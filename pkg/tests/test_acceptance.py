"""Exit criteria at full tolerance; each test records one PASS/FAIL line.

Run alone with ``pytest -m acceptance -s``.  Ladders are sized for a single
core; see README for wall times.
"""

import csv
import math
import time

import numpy as np
import pytest

from lerwcap.capacity import capacity_decomposition_mc, capacity_mc, capacity_via_hitting
from lerwcap.chain_oracle import decomposition_suite
from lerwcap.experiments import ExperimentConfig, run_experiment
from lerwcap.lattice import bounding_center
from lerwcap.rng import RngStream
from lerwcap.walk import loop_erase, loop_erase_reference, srw_sample, lerw_sample

pytestmark = pytest.mark.acceptance


def _line(k, ok, detail):
    return f"C{k} {'PASS' if ok else 'FAIL'}: {detail}"


@pytest.fixture(scope="session")
def beta_report():
    cfg = ExperimentConfig("beta_estimate", 3, [2**k for k in range(8, 17)], 100, 7007)
    return run_experiment(cfg)


def test_c1_decomposition_identity_exact(record):
    t0 = time.perf_counter()
    rep = decomposition_suite(n_chains=1000, max_states=50, max_set=8, orderings=3, seed=1)
    wall = time.perf_counter() - t0
    ok = rep.max_deviation <= 1e-10 and rep.checks >= 3000 and wall <= 60
    record(_line(1, ok, f"max |cap - decomposition| = {rep.max_deviation:.2e} over {rep.checks} orderings "
                        f"on {rep.chains} chains, {wall:.1f}s"))
    assert ok


def test_c2_loop_erasure_matches_reference(record):
    t0 = time.perf_counter()
    gen = RngStream(2).generator()
    mismatches = non_sa = non_idem = 0
    for i in range(10_000):
        omega = srw_sample(3 + i % 3, int(gen.integers(0, 1001)), gen)
        fast = loop_erase(omega)
        ref_pts, ref_times = loop_erase_reference(omega)
        mismatches += not (np.array_equal(fast.points, ref_pts) and np.array_equal(fast.erasure_times, ref_times))
        non_sa += len(np.unique(fast.points, axis=0)) != len(fast.points)
        non_idem += not np.array_equal(loop_erase(fast.points).points, fast.points)
    wall = time.perf_counter() - t0
    ok = mismatches == non_sa == non_idem == 0 and wall <= 60
    record(_line(2, ok, f"10^4 paths: {mismatches} mismatches, {non_sa} non-self-avoiding, "
                        f"{non_idem} non-idempotent, {wall:.1f}s"))
    assert ok


def test_c3_capacity_golden_values(record):
    t0 = time.perf_counter()
    single = capacity_mc([[0, 0, 0]], 200, 10**6, RngStream(3, 1))
    pair = capacity_mc([[0, 0, 0], [1, 0, 0]], 200, 10**6, RngStream(3, 2))
    wall = time.perf_counter() - t0
    ok = abs(single.value - 0.659463) <= 0.005 and abs(pair.value - 0.983879) <= 0.007 and wall <= 300
    record(_line(3, ok, f"cap{{0}} = {single.value:.5f} (target 0.659463 +- 0.005), "
                        f"cap{{0,e1}} = {pair.value:.5f} (target 0.983879 +- 0.007), {wall:.1f}s"))
    assert ok


def _three_way(pts, R, trials, hit_trials, stream):
    c = np.rint(bounding_center(pts))
    rho = float(np.linalg.norm(pts - c, axis=1).max())
    ests = [capacity_mc(pts, R, trials, stream.child("mc")),
            capacity_decomposition_mc(pts, R, trials, stream.child("dec")),
            capacity_via_hitting(pts, max(2.5 * rho, 6.0), hit_trials, stream.child("hit"))]
    worst = 0.0
    for i in range(3):
        for j in range(i + 1, 3):
            a, b = ests[i], ests[j]
            worst = max(worst, abs(a.value - b.value) / math.hypot(a.stderr, b.stderr))
    return worst


def test_c4_estimators_agree(record):
    t0 = time.perf_counter()
    root = RngStream(4)
    gen = root.child("sets").generator()
    zs = []
    for k in range(20):
        size = int(gen.integers(1, 11))
        pts = np.unique(gen.integers(-3, 4, size=(size, 3)), axis=0)
        zs.append(_three_way(pts, 100, 10_000, 20_000, root.child("d3", k)))
    for k in range(5):
        pts = lerw_sample(5, 20, root.child("eta", k)).points[:21]
        zs.append(_three_way(pts, 100, 10_000, 20_000, root.child("d5", k)))
    wall = time.perf_counter() - t0
    worst = max(zs)
    ok = worst <= 3 and wall <= 600
    record(_line(4, ok, f"worst pairwise gap {worst:.2f} joint stderr over 20 sets (d=3) "
                        f"and 5 eta[0,20] (d=5), {wall:.1f}s"))
    assert ok


def test_c5_highdim_density_witness(record):
    cfg = ExperimentConfig("slln_highdim", 5, [2**k for k in range(8, 15)], 32, 5005,
                           params={"side_len": 1024, "horizon": 2048, "rhs_samples": 400, "rhs_w_trials": 400})
    s = run_experiment(cfg).summary
    ok = bool(s["passed"]) and s["wall_time"] <= 3600
    record(_line(5, ok, f"top gap {s['top_gap']:.4f} vs 3*joint {3 * s['top_joint_stderr']:.4f}; final CI "
                        f"[{s['final_ci'][0]:.4f}, {s['final_ci'][1]:.4f}] vs bracket "
                        f"[{s['rhs']['lower']:.4f}, {s['rhs']['upper']:.4f}], {s['wall_time']:.0f}s"))
    assert ok


def test_c6_d4_trend_witness(record):
    cfg = ExperimentConfig("slln_d4", 4, [2**k for k in range(8, 15)], 128, 6006,
                           params={"rhs_samples": 40, "n_weight": 1024, "w_trials": 300, "rhs_n": 1024})
    s = run_experiment(cfg).summary
    ok = bool(s["passed"]) and s["wall_time"] <= 3600
    zs = ", ".join(f"{z:.1f}" for z in s["decrease_z"])
    record(_line(6, ok, f"decrease z per step [{zs}] (need > 2); top-3 relative spread scaled "
                        f"{s['spread_scaled']:.4f} vs unscaled {s['spread_unscaled']:.4f}, {s['wall_time']:.0f}s"))
    assert ok


def test_c7_growth_exponent(record, beta_report):
    s = beta_report.summary
    ok = bool(s["passed"]) and s["wall_time"] <= 1800
    record(_line(7, ok, f"beta = {s['beta']:.4f}, CI [{s['ci'][0]:.4f}, {s['ci'][1]:.4f}] width "
                        f"{s['ci_width']:.4f}; SRW slope {s['srw_slope']:.4f}, {s['wall_time']:.0f}s"))
    assert ok


def test_c8_d3_limit_law(record, beta_report):
    beta = beta_report.summary["beta"]
    cfg = ExperimentConfig("d3_limit_law", 3, [2**k for k in range(7, 12)], 600, 8008,
                           params={"beta": beta, "hit_trials": 1000, "probe_radii": []})
    s = run_experiment(cfg).summary
    ok = bool(s["passed"]) and s["wall_time"] <= 7200
    ks = ", ".join(f"{v:.3f}" for v in s["ks"]["ks"])
    record(_line(8, ok, f"beta {beta:.4f}; CV at top rung {s['cv_top']:.3f} (>= 0.05); KS [{ks}] slope "
                        f"{s['ks']['slope']:.4f}, final {s['ks']['final']:.3f} (<= 0.08), 600 samples/rung, "
                        f"{s['wall_time']:.0f}s"))
    assert ok


def test_c9_sausage_avoidance_trend(record):
    cfg = ExperimentConfig("hitting_estimate_check", 3, [2**12], 100, 9009)
    s = run_experiment(cfg).summary
    ok = bool(s["passed"]) and s["wall_time"] <= 1800
    freq = ", ".join(f"{r['delta']}: {r['frequency']:.2f}" for r in s["table"]["0.1"])
    vz = ", ".join(f"{v:.2f}" for v in s["violation_z"])
    record(_line(9, ok, f"eps=0.1 frequency by delta [{freq}]; violation z [{vz}] (<= 3), {s['wall_time']:.0f}s"))
    assert ok


SMALL = [
    ("slln_highdim", 5, [32, 64], 3, {"side_len": 64, "horizon": 128, "rhs_samples": 4, "rhs_batch": 2,
                                      "rhs_w_trials": 20, "points": 16}),
    ("slln_d4", 4, [32, 64, 128], 3, {"rhs_samples": 3, "n_weight": 64, "w_trials": 20, "points": 16}),
    ("beta_estimate", 3, [16, 32, 64, 128], 4, {"bootstrap": 50, "srw_walks": 64}),
    ("hitting_estimate_check", 3, [128], 3, {"z_points": 4, "walks_per_z": 10}),
    ("d3_limit_law", 3, [32, 64], 4, {"beta": 1.6, "hit_trials": 50, "probe_radii": []}),
    ("ergodic_average_experiment", 5, [16, 32, 64], 4, {}),
]


def _csv_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _cells_close(a, b, rel=1e-12):
    try:
        x, y = float(a), float(b)
    except ValueError:
        return a == b
    if math.isnan(x) or math.isnan(y):
        return math.isnan(x) and math.isnan(y)
    return x == y or abs(x - y) <= rel * max(abs(x), abs(y))


def test_c10_reproducible_across_threads(record, tmp_path):
    bad = []
    for name, d, ladder, trials, params in SMALL:
        outs = []
        for threads in (1, 2, 1):
            cfg = ExperimentConfig(name, d, ladder, trials, 1010, params=dict(params))
            out = tmp_path / f"{name}_{len(outs)}"
            outs.append(_csv_rows(run_experiment(cfg, threads=threads, outdir=out).summary["outputs"]["csv"]))
        ref = outs[0]
        for other in outs[1:]:
            same = len(other) == len(ref) and all(
                len(r) == len(o) and all(_cells_close(a, b) for a, b in zip(r, o)) for r, o in zip(ref, other))
            if not same:
                bad.append(name)
    ok = not bad
    record(_line(10, ok, f"{len(SMALL)} experiments rerun with threads 1, 2, 1: "
                         f"{'all CSV cells equal within 1e-12' if ok else 'differ: ' + ', '.join(bad)}"))
    assert ok
