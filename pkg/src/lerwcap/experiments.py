"""Desk-scale experiments: laws of large numbers for the capacity of LERW,
the growth exponent, the hitting estimate, the d = 3 limit law and ergodic
averages.

Every experiment is a list of independent tasks (rung, replicate, ...), each
with its own RNG stream derived from (seed, experiment, task labels).  Tasks
run serially or in a process pool; results are merged in task order, so the
output does not depend on the worker count.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import _kernels as K
from .capacity import capacity_mc, capacity_via_hitting, hit_probabilities
from .green import green_constant, green_exact
from .lattice import bounding_center
from .rng import RngStream, stream_id_for
from .twosided import (avoidance_bracket, avoidance_terms, d4_weighted_two_sided, two_sided_sample_highdim,
                       weighted_mean, x_hat_estimators)
from .walk import cylinder_frequency, lerw_sample

EXPERIMENTS = ("slln_highdim", "slln_d4", "beta_estimate", "hitting_estimate_check", "d3_limit_law",
               "ergodic_average_experiment")

DEFAULT_LADDERS = {3: [2**k for k in range(8, 17)], 4: [2**k for k in range(8, 17)], 5: [2**k for k in range(8, 16)]}

# defaults per experiment; anything here can be overridden by param.<name>
DEFAULT_PARAMS = {
    "slln_highdim": {"R_factor": 4.0, "points": 1024, "trials_per_point": 1, "side_len": 256, "horizon": 512,
                     "rhs_samples": 200, "rhs_batch": 20, "rhs_w_trials": 200, "rhs_kill_factor": 4.0, "z": 3.0},
    "slln_d4": {"R_factor": 4.0, "points": 1024, "trials_per_point": 1, "n_weight": 4096, "w_trials": 500,
                "rhs_samples": 100, "rhs_n": 0, "weight_horizon": 0.0},
    "beta_estimate": {"bootstrap": 2000, "srw_walks": 4000, "ci_level": 0.95},
    "hitting_estimate_check": {"deltas": [0.05, 0.025, 0.0125], "eps_list": [0.1, 0.2, 0.3], "z_points": 16,
                               "walks_per_z": 200, "kill_factor": 4.0, "beta": 1.62},
    "d3_limit_law": {"beta": 0.0, "hit_trials": 2000, "y_factor": 2.5, "beta_halfwidth": 0.05,
                     "probe_radii": [4, 8, 16], "probe_trials": 4000},
    "ergodic_average_experiment": {"xi": "1"},
}
DEFAULT_THRESHOLDS = {
    "slln_highdim": {"z_gap": 3.0},
    "slln_d4": {"z_step": 2.0},
    "beta_estimate": {"ci_width": 0.15, "srw_tol": 0.1},
    "hitting_estimate_check": {"z_violation": 3.0, "eps": 0.1},
    "d3_limit_law": {"cv_min": 0.05, "ks_final": 0.08},
    "ergodic_average_experiment": {"slope_low": -1.3, "slope_high": -0.7},
}


# configuration ----------------------------------------------------------------

@dataclass
class ExperimentConfig:
    experiment: str
    d: int
    ladder: list[int]
    trials: int  # replicates per rung
    seed: int
    params: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)
    output: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        self.ladder = [int(n) for n in self.ladder]
        if not self.ladder or any(b <= a for a, b in zip(self.ladder, self.ladder[1:])):
            raise ValueError("size ladder must be nonempty and strictly increasing")
        if self.ladder[0] < 1:
            raise ValueError("ladder entries must be positive")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.params = {**DEFAULT_PARAMS[self.experiment], **self.params}
        self.thresholds = {**DEFAULT_THRESHOLDS[self.experiment], **self.thresholds}

    def param(self, name):
        return self.params[name]

    def to_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        lines = [f"experiment = {self.experiment}", f"d = {self.d}",
                 f"ladder = {','.join(map(str, self.ladder))}", f"trials = {self.trials}", f"seed = {self.seed}"]
        if self.output:
            lines.append(f"output = {self.output}")
        for prefix, table in (("param", self.params), ("threshold", self.thresholds)):
            for k in sorted(table):
                v = table[k]
                lines.append(f"{prefix}.{k} = {','.join(map(str, v)) if isinstance(v, list) else v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        """Parse the flat ``key = value`` format (``#`` comments, ``param.``/``threshold.`` prefixes)."""
        top, params, thresholds = {}, {}, {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key.startswith("param."):
                params[key[6:]] = _parse_value(value)
            elif key.startswith("threshold."):
                thresholds[key[10:]] = _parse_value(value)
            elif key in ("experiment", "output"):
                top[key] = value
            elif key in ("d", "trials", "seed"):
                top[key] = int(value)
            elif key == "ladder":
                top[key] = [int(v) for v in value.split(",") if v.strip()]
            else:
                raise ValueError(f"line {lineno}: unknown key {key!r}")
        for key in ("experiment", "d", "seed"):
            if key not in top:
                raise ValueError(f"missing required key {key!r}")
        top.setdefault("ladder", DEFAULT_LADDERS.get(top["d"], [256]))
        top.setdefault("trials", 16)
        return cls(params=params, thresholds=thresholds, **top)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text())


def _parse_value(value: str):
    if "," in value:
        return [_parse_value(v.strip()) for v in value.split(",") if v.strip()]
    for conv in (int, float):
        try:
            return conv(value)
        except ValueError:
            pass
    if value.lower() in ("true", "false"):
        return value.lower() == "true"
    return value


# runner -----------------------------------------------------------------------------

def task_stream(cfg: ExperimentConfig, *labels) -> RngStream:
    return RngStream(cfg.seed, stream_id_for(cfg.experiment, cfg.d, *labels))


def resolve_threads(flag: int | None = None) -> int:
    """Explicit flag first, then LERW_THREADS, then 1."""
    if flag is not None:
        n = int(flag)
    else:
        n = int(os.environ.get("LERW_THREADS", "1") or 1)
    if n < 1:
        raise ValueError("thread count must be positive")
    return n


class _Timed:
    """Picklable wrapper stamping each result row with the task's wall time under "_wall"."""

    def __init__(self, fn):
        self.fn = fn

    def __call__(self, task):
        t0 = time.perf_counter()
        out = self.fn(task)
        dt = time.perf_counter() - t0
        rows = out if isinstance(out, list) else [out]
        for r in rows:
            if isinstance(r, dict):
                r["_wall"] = dt / len(rows)
        return out


def run_tasks(fn, tasks: list, threads: int = 1) -> list:
    """Apply fn to each task; results come back in task order whatever the worker count."""
    fn = _Timed(fn)
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * threads))))


@dataclass
class DistributionSample:
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float))
        if len(v) < 2:
            raise ValueError("a distribution sample needs at least 2 observations")
        self.values = v

    @property
    def cv(self) -> float:
        return float(self.values.std(ddof=1) / self.values.mean())

    def ks(self, other: "DistributionSample") -> float:
        return float(stats.ks_2samp(self.values, other.values).statistic)


@dataclass
class Report:
    config: ExperimentConfig
    rows: list  # one dict per replicate
    summary: dict
    plots: dict = field(default_factory=dict)  # name -> (x label, y label, xs, ys)

    CSV_BASE = ("experiment", "d", "n", "replicate", "stream_id", "estimate", "stderr", "trials")

    @property
    def passed(self) -> bool | None:
        return self.summary.get("passed")

    def csv_columns(self) -> list[str]:
        # keys starting with "_" (task wall times) stay out of the CSV so reruns compare equal
        extra = sorted({k for r in self.rows for k in r if not k.startswith("_")} - set(self.CSV_BASE))
        return list(self.CSV_BASE) + extra

    def write(self, outdir) -> dict:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        name = self.config.experiment
        paths = {"csv": out / f"{name}.csv", "json": out / f"{name}.json"}
        cols = self.csv_columns()
        with open(paths["csv"], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for r in self.rows:
                w.writerow([_fmt(r.get(c, "")) for c in cols])
        paths["json"].write_text(json.dumps({"config": self.config.to_dict(), "summary": self.summary},
                                            sort_keys=True, default=_jsonable) + "\n", encoding="utf-8")
        for key, (xl, yl, xs, ys) in self.plots.items():
            p = out / f"{name}_{key}.dat"
            with open(p, "w", encoding="utf-8") as fh:
                fh.write(f"# {xl} {yl}\n")
                for x, y in zip(xs, ys):
                    fh.write(f"{_fmt(x)} {_fmt(y)}\n")
            paths[key] = p
        return paths


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _jsonable(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return str(obj)


def _row(cfg, n, rep, stream, estimate, stderr, trials, **extra) -> dict:
    return {"experiment": cfg.experiment, "d": cfg.d, "n": int(n), "replicate": int(rep),
            "stream_id": stream.stream_id, "estimate": float(estimate), "stderr": float(stderr),
            "trials": int(trials), **extra}


def _rung_stats(rows, key="estimate"):
    by = {}
    for r in rows:
        by.setdefault(r["n"], []).append(r[key])
    out = []
    for n in sorted(by):
        v = np.array(by[n], dtype=float)
        se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else float("nan")
        wall = sum(r.get("_wall", 0.0) for r in rows if r["n"] == n)
        out.append({"n": n, "mean": float(v.mean()), "stderr": se, "replicates": len(v), "wall_time": wall})
    return out


def _timed(fn):
    def wrapper(cfg, threads=1):
        t0 = time.perf_counter()
        rep = fn(cfg, threads)
        rep.summary["wall_time"] = time.perf_counter() - t0
        rep.summary["seed"] = cfg.seed
        return rep
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# capacity density (laws of large numbers) -----------------------------------------------

def _capacity_density_task(args):
    cfg, n, rep = args
    stream = task_stream(cfg, "cap", n, rep)
    gen = stream.generator()
    eta = lerw_sample(cfg.d, n, gen)
    pts = eta.points[: n + 1]
    R = float(cfg.param("R_factor")) * max(float(np.linalg.norm(pts, axis=1).max()), 4.0)
    m = int(cfg.param("points"))
    rec = capacity_mc(pts, R, int(cfg.param("trials_per_point")), gen, subsample=m if m < n + 1 else None)
    return _row(cfg, n, rep, stream, rec.value / n, rec.stderr / n, rec.trials, capacity=rec.value, R=R,
                truncation=rec.params["truncation"])


def _rhs5_task(args):
    cfg, b = args
    stream = task_stream(cfg, "rhs", b)
    gen = stream.generator()
    out = []
    for _ in range(int(cfg.param("rhs_batch"))):
        ts = two_sided_sample_highdim(cfg.d, int(cfg.param("side_len")), int(cfg.param("horizon")), gen)
        out.append((*avoidance_terms(ts, int(cfg.param("rhs_w_trials")), gen, float(cfg.param("rhs_kill_factor"))),
                    ts.metadata["attempts"]))
    return out


def _joint(a, b):
    return math.sqrt(a["stderr"] ** 2 + b["stderr"] ** 2)


@_timed
def slln_highdim(cfg: ExperimentConfig, threads: int = 1) -> Report:
    """E[C(eta[0,n])]/n per rung against a two-sided avoidance bracket (d >= 5)."""
    if cfg.d < 5:
        raise ValueError("slln_highdim needs d >= 5")
    tasks = [(cfg, n, r) for n in cfg.ladder for r in range(cfg.trials)]
    n_batches = max(1, int(cfg.param("rhs_samples")) // int(cfg.param("rhs_batch")))
    rows = run_tasks(_capacity_density_task, tasks, threads)
    rhs_terms = [t for chunk in run_tasks(_rhs5_task, [(cfg, b) for b in range(n_batches)], threads) for t in chunk]
    z = float(cfg.param("z"))
    bracket = avoidance_bracket([t[:3] for t in rhs_terms], int(cfg.param("rhs_w_trials")), z)
    attempts = sum(t[3] for t in rhs_terms)
    bracket["acceptance_rate"] = len(rhs_terms) / attempts
    rungs = _rung_stats(rows)
    summary = {"rungs": rungs, "rhs": bracket}
    if len(rungs) >= 2:
        a, b = rungs[-2], rungs[-1]
        gap = abs(a["mean"] - b["mean"])
        joint = _joint(a, b)
        lo, hi = b["mean"] - z * b["stderr"], b["mean"] + z * b["stderr"]
        overlap = lo <= bracket["upper"] and hi >= bracket["lower"]
        summary.update({"top_gap": gap, "top_joint_stderr": joint, "final_ci": [lo, hi], "overlap": overlap,
                        "passed": bool(gap < float(cfg.thresholds["z_gap"]) * joint and overlap)})
    xs = [r["n"] for r in rungs]
    return Report(cfg, rows, summary, {"density": ("n", "C_over_n", xs, [r["mean"] for r in rungs])})


def _rhs4_task(args):
    cfg, i = args
    stream = task_stream(cfg, "rhs4", i)
    gen = stream.generator()
    n = int(cfg.param("rhs_n")) or cfg.ladder[-1]
    n_w = int(cfg.param("n_weight"))
    horizon = float(cfg.param("weight_horizon")) or None
    ws = d4_weighted_two_sided(max(n, n_w), n_w, horizon, gen, w_trials=int(cfg.param("w_trials")))
    xh, xp = x_hat_estimators(ws, n, int(cfg.param("w_trials")), gen)
    return ws.weight, xh, xp


@_timed
def slln_d4(cfg: ExperimentConfig, threads: int = 1) -> Report:
    """(log n)^{2/3} E[C(eta[0,n])]/n per rung and a weighted estimate of E[X^ X^+] (d = 4).

    Logarithmic convergence is far beyond desk scale: the pass rule is a
    trend test (strict decrease of C/n, smaller relative spread after
    scaling), not an equality test.
    """
    if cfg.d != 4:
        raise ValueError("slln_d4 needs d = 4")
    tasks = [(cfg, n, r) for n in cfg.ladder for r in range(cfg.trials)]
    rows = run_tasks(_capacity_density_task, tasks, threads)
    rungs = _rung_stats(rows)
    for r in rungs:
        s = math.log(r["n"]) ** (2 / 3)
        r["scaled_mean"], r["scaled_stderr"] = s * r["mean"], s * r["stderr"]
    summary = {"rungs": rungs, "caveat": "log-scale convergence: trend consistency only, not a limit estimate"}
    n_rhs = int(cfg.param("rhs_samples"))
    if n_rhs > 0:
        res = run_tasks(_rhs4_task, [(cfg, i) for i in range(n_rhs)], threads)
        w = np.array([r[0] for r in res])
        prod = np.array([r[1] * r[2] for r in res])
        if w.sum() > 0:
            wm = weighted_mean(prod, w)
            summary["rhs"] = {"estimate": wm.value, "stderr": wm.stderr, "ess": wm.ess, "nominal": wm.nominal,
                              "ess_flagged": wm.flagged, "unweighted": float(prod.mean()),
                              "n_weight": int(cfg.param("n_weight")),
                              "law": "importance-weighted finite-n proxy for X_inf"}
    steps = [(a["mean"] - b["mean"]) / _joint(a, b) for a, b in zip(rungs, rungs[1:])]
    summary["decrease_z"] = steps
    decreasing = all(s > float(cfg.thresholds["z_step"]) for s in steps)
    if len(rungs) >= 3:
        top = rungs[-3:]
        spread = lambda v: (max(v) - min(v)) / float(np.mean(v))  # noqa: E731
        su, ss = spread([r["mean"] for r in top]), spread([r["scaled_mean"] for r in top])
        summary.update({"spread_unscaled": su, "spread_scaled": ss, "passed": bool(decreasing and ss < su)})
    summary["all_positive_finite"] = all(r["mean"] > 0 and math.isfinite(r["mean"]) for r in rungs)
    xs = [r["n"] for r in rungs]
    return Report(cfg, rows, summary, {"density": ("n", "C_over_n", xs, [r["mean"] for r in rungs]),
                                       "scaled": ("n", "log_n_23_C_over_n", xs, [r["scaled_mean"] for r in rungs])})


# growth exponent ----------------------------------------------------------------------------

SRW_CHUNKS = 8


def _beta_task(args):
    cfg, rep = args
    stream = task_stream(cfg, "beta", rep)
    eta = lerw_sample(cfg.d, cfg.ladder[-1], stream.generator())
    norms = np.linalg.norm(eta.points[cfg.ladder].astype(float), axis=1)
    return [_row(cfg, n, rep, stream, v, 0.0, 1) for n, v in zip(cfg.ladder, norms)]


def _srw_task(args):
    cfg, rep, walks = args
    stream = task_stream(cfg, "srw", rep)
    ends = K.srw_endpoints(stream.generator(), cfg.d, int(walks), np.asarray(cfg.ladder, dtype=np.int64))
    return np.linalg.norm(ends.astype(float), axis=2).mean(axis=0)


def growth_slope(ns, mean_norms) -> float:
    """Slope of log n against log E||.||."""
    return float(np.polyfit(np.log(mean_norms), np.log(ns), 1)[0])


@_timed
def beta_estimate(cfg: ExperimentConfig, threads: int = 1) -> Report:
    """beta^ from the regression of log n on log mean ||eta(n)||, with a replicate bootstrap CI.

    Each replicate is one LERW sample of the top length; its prefixes give
    every rung, and the bootstrap resamples whole replicates.
    """
    if cfg.d != 3:
        raise ValueError("beta_estimate needs d = 3")
    if len(cfg.ladder) < 4:
        raise ValueError("beta regression needs at least 4 rungs")
    rows = [r for chunk in run_tasks(_beta_task, [(cfg, i) for i in range(cfg.trials)], threads) for r in chunk]
    ns = np.array(cfg.ladder, dtype=float)
    mat = np.array([r["estimate"] for r in rows]).reshape(cfg.trials, len(cfg.ladder))
    beta = growth_slope(ns, mat.mean(axis=0))
    gen = task_stream(cfg, "bootstrap").generator()
    B = int(cfg.param("bootstrap"))
    boots = np.array([growth_slope(ns, mat[gen.integers(0, cfg.trials, cfg.trials)].mean(axis=0)) for _ in range(B)])
    level = float(cfg.param("ci_level"))
    lo, hi = (float(q) for q in np.quantile(boots, [(1 - level) / 2, (1 + level) / 2]))
    walks = int(cfg.param("srw_walks"))
    chunks = SRW_CHUNKS  # fixed, so the control walks do not depend on the thread count
    srw = np.mean(run_tasks(_srw_task, [(cfg, i, walks // chunks) for i in range(chunks)], threads), axis=0)
    srw_slope = growth_slope(ns, srw)
    summary = {"beta": beta, "ci": [lo, hi], "ci_width": hi - lo, "srw_slope": srw_slope,
               "mean_norms": mat.mean(axis=0).tolist(), "ladder": cfg.ladder,
               "in_range": bool(1 < beta <= 5 / 3),
               "passed": bool(1 < beta <= 5 / 3 and hi - lo <= float(cfg.thresholds["ci_width"])
                              and abs(srw_slope - 2) <= float(cfg.thresholds["srw_tol"]))}
    return Report(cfg, rows, summary, {"growth": ("log_n", "log_mean_norm", np.log(ns).tolist(),
                                                  np.log(mat.mean(axis=0)).tolist())})


# hitting estimate ------------------------------------------------------------------------------

def sausage_points(pts: np.ndarray, radius: float, count: int, gen) -> np.ndarray:
    """``count`` lattice points uniform in B(pts, radius), by rejection from the bounding box."""
    from ._index import build_index, levels_for, sausage_level

    d = pts.shape[1]
    lo = pts.min(axis=0) - int(math.ceil(radius))
    hi = pts.max(axis=0) + int(math.ceil(radius))
    index = build_index(pts, n_levels=levels_for(d, radius), eps=radius)
    chunks, got = [], 0
    while got < count:
        cand = gen.integers(lo, hi + 1, size=(4 * count, d))
        keep = cand[K.sausage_mask(cand, index.pts, index.keys, index.vals, index.cnts, index.order, float(radius),
                                   sausage_level(radius))]
        chunks.append(keep)
        got += len(keep)
    out = np.concatenate(chunks)[:count]
    return out


def _hitting_task(args):
    cfg, rep = args
    stream = task_stream(cfg, "hit", rep)
    gen = stream.generator()
    n = cfg.ladder[-1]
    pts = lerw_sample(3, n, gen).points[: n + 1]
    scale = n ** (1.0 / float(cfg.param("beta")))
    c = bounding_center(pts)
    rho = float(np.linalg.norm(pts - c, axis=1).max())
    rows = []
    for delta in cfg.param("deltas"):
        r = float(delta) * scale
        zs = sausage_points(pts, r, int(cfg.param("z_points")), gen)
        W = int(cfg.param("walks_per_z"))
        kill = float(cfg.param("kill_factor")) * (rho + r)
        hits = hit_probabilities(pts, np.repeat(zs, W, axis=0), kill, gen, center=c).reshape(len(zs), W)
        avoid = 1.0 - hits.mean(axis=1)
        mx = float(avoid.max())
        extra = {f"exceeds_{e}": int(mx > float(e)) for e in cfg.param("eps_list")}
        rows.append(_row(cfg, n, rep, stream, mx, 0.0, len(zs) * W, delta=float(delta), radius=r, **extra))
    return rows


@_timed
def hitting_estimate_check(cfg: ExperimentConfig, threads: int = 1) -> Report:
    """Frequency of {max over sausage points of the avoidance probability > eps} along a delta ladder.

    Rows carry max avoidance per (replicate, delta); the same eta is used
    for every delta of a replicate.  Walks outside ``kill_factor`` times the
    sausage radius count as avoiding, which can only raise the frequencies.
    """
    if cfg.d != 3:
        raise ValueError("hitting_estimate_check needs d = 3")
    rows = [r for chunk in run_tasks(_hitting_task, [(cfg, i) for i in range(cfg.trials)], threads) for r in chunk]
    deltas = [float(x) for x in cfg.param("deltas")]
    table = {}
    for e in cfg.param("eps_list"):
        col = []
        for dl in deltas:
            v = np.array([r[f"exceeds_{e}"] for r in rows if r["delta"] == dl], dtype=float)
            col.append({"delta": dl, "frequency": float(v.mean()),
                        "stderr": float(math.sqrt(v.mean() * (1 - v.mean()) / len(v)))})
        table[str(e)] = col
    eps = str(cfg.thresholds["eps"])
    zt = float(cfg.thresholds["z_violation"])
    order = sorted(table[eps], key=lambda r: -r["delta"])
    violations = [max(0.0, b["frequency"] - a["frequency"]) / max(_joint(a, b), 1e-12)
                  for a, b in zip(order, order[1:])]
    eps_sorted = sorted(table, key=float)
    monotone_eps = all(table[a][i]["frequency"] >= table[b][i]["frequency"]
                       for a, b in zip(eps_sorted, eps_sorted[1:]) for i in range(len(deltas)))
    summary = {"table": table, "violation_z": violations, "monotone_in_eps": monotone_eps,
               "passed": bool(all(v <= zt for v in violations))}
    return Report(cfg, rows, summary, {"frequency": ("delta", "frequency", [r["delta"] for r in order],
                                                     [r["frequency"] for r in order])})


# d = 3 limit law --------------------------------------------------------------------------------

def _limit_task(args):
    cfg, n, rep = args
    stream = task_stream(cfg, "limit", n, rep)
    gen = stream.generator()
    pts = lerw_sample(3, n, gen).points[: n + 1]
    c = np.rint(bounding_center(pts))
    rho = float(np.linalg.norm(pts - c, axis=1).max())
    y = float(cfg.param("y_factor")) * max(rho, 2.0)
    rec = capacity_via_hitting(pts, y, int(cfg.param("hit_trials")), gen)
    return _row(cfg, n, rep, stream, rec.value, rec.stderr, rec.trials, y_radius=y)


def green_ratio_probe(radii, trials: int, rng) -> dict:
    """Measure the discrete/continuum capacity ratio on lattice balls.

    cap_{Z^3}(B(0,r)) / r is estimated by far-field hitting and compared
    with 1/a_3, the value implied by G_{Z^3} ~ a_3/|y|.  A standard Brownian
    motion has G = 1/(2 pi |y|) and ball capacity 2 pi r, so the measured
    lattice-to-BM Green ratio is 2 pi a_3 (= 3) and the capacity ratio its
    inverse.
    """
    gen = rng.generator() if isinstance(rng, RngStream) else np.random.default_rng(rng)
    out = []
    for r in radii:
        r = int(r)
        g = np.arange(-r, r + 1)
        grid = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
        ball = grid[(grid**2).sum(axis=1) <= r * r]
        rec = capacity_via_hitting(ball, 2.5 * r + 2, int(trials), gen)
        out.append({"r": r, "cap": rec.value, "stderr": rec.stderr, "cap_over_r": rec.value / r})
    a3 = green_constant(3)
    far = np.array([40, 0, 0])
    measured_green_ratio = green_exact(3, far) * 40 * 2 * math.pi
    return {"balls": out, "predicted_cap_over_r": 1 / a3, "lattice_over_bm_green": measured_green_ratio,
            "conventions": {"G_Z ~ 3 G_R (standard BM)": abs(measured_green_ratio - 3.0),
                            "G_R ~ 3 G_Z": abs(measured_green_ratio - 1 / 3)},
            "operative": "G_Z ~ 3 G_R" if abs(measured_green_ratio - 3) < abs(measured_green_ratio - 1 / 3)
            else "G_R ~ 3 G_Z"}


def rescaled_samples(caps_by_n: dict, beta: float) -> dict:
    return {n: DistributionSample(np.asarray(v) / (3 * n ** (1 / beta)), {"n": n, "beta": beta})
            for n, v in caps_by_n.items()}


def ks_trend(samples: dict) -> dict:
    ns = sorted(samples)
    ks = [samples[a].ks(samples[b]) for a, b in zip(ns, ns[1:])]
    slope = float(np.polyfit(np.arange(len(ks)), ks, 1)[0]) if len(ks) >= 2 else float("nan")
    return {"ks": ks, "slope": slope, "final": ks[-1] if ks else float("nan")}


@_timed
def d3_limit_law(cfg: ExperimentConfig, threads: int = 1) -> Report:
    """Law of C(eta[0,n]) / (3 n^{1/beta}) across rungs (d = 3).

    beta comes from param.beta (0: run beta_estimate on this ladder first).
    "KS decreases along the ladder" is read as a negative least-squares slope
    of the consecutive-rung KS distances, together with the final-value bound.
    """
    if cfg.d != 3:
        raise ValueError("d3_limit_law needs d = 3")
    beta = float(cfg.param("beta"))
    beta_info = None
    if beta <= 0:
        bcfg = ExperimentConfig("beta_estimate", 3, cfg.ladder if len(cfg.ladder) >= 4 else
                                [2**k for k in range(6, 11)], max(cfg.trials, 50), cfg.seed)
        brep = beta_estimate(bcfg, threads)
        beta, beta_info = brep.summary["beta"], {"ci": brep.summary["ci"]}
    tasks = [(cfg, n, r) for n in cfg.ladder for r in range(cfg.trials)]
    rows = run_tasks(_limit_task, tasks, threads)
    caps = {}
    for r in rows:
        caps.setdefault(r["n"], []).append(r["estimate"])
    samples = rescaled_samples(caps, beta)
    for r in rows:
        r["rescaled"] = r["estimate"] / (3 * r["n"] ** (1 / beta))
    trend = ks_trend(samples)
    ns = sorted(samples)
    cv = samples[ns[-1]].cv
    hw = float(cfg.param("beta_halfwidth"))
    sensitivity = []
    for b in (beta - hw, beta, beta + hw):
        s = rescaled_samples(caps, b)
        t = ks_trend(s)
        sensitivity.append({"beta": b, "mean_top": float(s[ns[-1]].values.mean()), "cv_top": s[ns[-1]].cv,
                            "ks": t["ks"], "ks_slope": t["slope"]})
    summary = {"beta": beta, "beta_source": beta_info or "config",
               "means": {n: float(samples[n].values.mean()) for n in ns}, "cv_top": cv, "ks": trend,
               "all_positive": bool(all(float(s.values.min()) > 0 for s in samples.values())),
               "beta_sensitivity": sensitivity}
    radii = cfg.param("probe_radii")
    if radii:
        summary["green_ratio_probe"] = green_ratio_probe(radii if isinstance(radii, list) else [radii],
                                                         int(cfg.param("probe_trials")), task_stream(cfg, "probe"))
    ks_ok = trend["slope"] < 0 if len(trend["ks"]) >= 2 else True
    summary["passed"] = bool(cv >= float(cfg.thresholds["cv_min"]) and ks_ok
                             and trend["final"] <= float(cfg.thresholds["ks_final"]))
    plots = {"ks": ("n", "ks_distance", ns[1:], trend["ks"]),
             "mean": ("n", "mean_rescaled", ns, [summary["means"][n] for n in ns])}
    return Report(cfg, rows, summary, plots)


# ergodic averages ------------------------------------------------------------------------------

def parse_xi(text: str, d: int) -> np.ndarray:
    """Cylinder path from signed axis steps, e.g. "1;-1;2" = +e1, -e1, +e2 (1-based axes)."""
    pts = [np.zeros(d, dtype=np.int64)]
    for tok in str(text).replace(" ", "").split(";"):
        if not tok:
            continue
        k = int(tok)
        if k == 0 or abs(k) > d:
            raise ValueError(f"bad step {tok!r} for d={d}")
        step = np.zeros(d, dtype=np.int64)
        step[abs(k) - 1] = 1 if k > 0 else -1
        pts.append(pts[-1] + step)
    return np.array(pts)


def _ergodic_task(args):
    cfg, rep = args
    stream = task_stream(cfg, "ergodic", rep)
    xi = parse_xi(cfg.param("xi"), cfg.d)
    m = len(xi) - 1
    eta = lerw_sample(cfg.d, cfg.ladder[-1] + m, stream.generator())
    return [_row(cfg, n, rep, stream, cylinder_frequency(eta, xi, n), 0.0, n + 1) for n in cfg.ladder]


@_timed
def ergodic_average_experiment(cfg: ExperimentConfig, threads: int = 1) -> Report:
    """Cross-sample variance of H^n(xi) along the ladder and its log-log slope."""
    if cfg.d not in (4, 5):
        raise ValueError("ergodic_average_experiment needs d in {4, 5}")
    rows = [r for chunk in run_tasks(_ergodic_task, [(cfg, i) for i in range(cfg.trials)], threads) for r in chunk]
    ns = np.array(cfg.ladder, dtype=float)
    var = np.array([np.var([r["estimate"] for r in rows if r["n"] == n], ddof=1) for n in cfg.ladder])
    good = var > 0
    slope = float(np.polyfit(np.log(ns[good]), np.log(var[good]), 1)[0]) if good.sum() >= 2 else float("nan")
    summary = {"xi": cfg.param("xi"), "variance": var.tolist(), "slope": slope,
               "means": [float(np.mean([r["estimate"] for r in rows if r["n"] == n])) for n in cfg.ladder],
               "passed": bool(float(cfg.thresholds["slope_low"]) <= slope <= float(cfg.thresholds["slope_high"]))}
    return Report(cfg, rows, summary, {"variance": ("n", "var_H", ns.tolist(), var.tolist())})


RUNNERS = {f.__name__: f for f in (slln_highdim, slln_d4, beta_estimate, hitting_estimate_check, d3_limit_law,
                                   ergodic_average_experiment)}


def run_experiment(cfg: ExperimentConfig, threads: int = 1, outdir=None) -> Report:
    rep = RUNNERS[cfg.experiment](cfg, threads)
    target = outdir or cfg.output
    if target:
        rep.summary["outputs"] = {k: str(v) for k, v in rep.write(target).items()}
    return rep
