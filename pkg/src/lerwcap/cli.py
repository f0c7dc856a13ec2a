"""Command-line entry point: ``lerwcap <walk|capacity|oracle|twosided|experiment> ...``.

Exit codes: 0 success, 1 usage error, 2 runtime error.  Every run echoes its
resolved configuration (including the seed, drawn from entropy when
``--seed`` is absent) as one JSON line on stderr before doing any work.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .rng import RngStream, entropy_seed


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _formatter(prog):
    return argparse.ArgumentDefaultsHelpFormatter(prog, max_help_position=32, width=100)


def _positive(conv):
    def check(text):
        v = conv(text)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    check.__name__ = conv.__name__
    return check


def _common(p):
    p.add_argument("--seed", type=int, default=None, help="master seed (int); drawn from entropy and printed if omitted")
    p.add_argument("--threads", type=_positive(int), default=None,
                   help="worker processes (int); overrides LERW_THREADS; default LERW_THREADS or 1")
    p.add_argument("--output", type=str, default=None, help="output file (walk, capacity, twosided) or directory "
                   "(experiment); stdout when omitted")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lerwcap", description="Loop-erased random walk capacity toolkit.", formatter_class=_formatter)
    sub = parser.add_subparsers(dest="command", metavar="{walk,capacity,oracle,twosided,experiment}", parser_class=_Parser)
    sub.required = True

    w = sub.add_parser("walk", help="sample SRW / LERW paths", formatter_class=_formatter,
                       description="Sample a simple random walk, its loop erasure, or the infinite LERW. "
                                   "Output: one comma-separated point per line.")
    w.add_argument("--d", type=_positive(int), required=True, help="dimension (int)")
    w.add_argument("--steps", type=_positive(int), required=True, help="number of steps (int)")
    mode = w.add_mutually_exclusive_group()
    mode.add_argument("--loop-erase", action="store_true", help="loop-erase the sampled SRW path")
    mode.add_argument("--lerw", action="store_true", help="first STEPS steps of the infinite LERW (d >= 3)")
    w.add_argument("--cut-times", action="store_true", help="also print the SRW cut times after a '# cut-times' line")
    _common(w)

    c = sub.add_parser("capacity", help="estimate the capacity of a finite set", formatter_class=_formatter,
                       description="Estimate cap(A) in Z^d.",
                       epilog="Output: one JSON object per line (EstimateRecord); with --csv a CSV row with "
                              "columns method,value,stderr,trials,R,seed,wall_time.")
    src = c.add_mutually_exclusive_group(required=True)
    src.add_argument("--points", type=str, choices=["single-origin", "pair"],
                     help="built-in set: {0} or {0, e1}")
    src.add_argument("--points-file", type=str, help="file with one comma-separated point per line")
    src.add_argument("--lerw", type=_positive(int), metavar="N", help="use eta[0,N] of a fresh LERW sample")
    c.add_argument("--d", type=_positive(int), default=3, help="dimension (int)")
    c.add_argument("--method", choices=["escape", "decomposition", "hitting", "sausage"], default="escape",
                   help="estimator")
    c.add_argument("--R", type=_positive(float), default=None,
                   help="kill radius for escape/decomposition (float); default 4 x set radius, at least 50")
    c.add_argument("--y-radius", type=_positive(float), default=None,
                   help="start-shell radius for hitting/sausage (float); default 2.5 x set radius + 2")
    c.add_argument("--eps", type=float, default=0.0, help="sausage radius (float)")
    c.add_argument("--trials", type=_positive(int), default=100000,
                   help="walks per point (escape/decomposition) or in total (hitting/sausage) (int)")
    c.add_argument("--subsample", type=_positive(int), default=None, help="simulate only this many points (int)")
    c.add_argument("--csv", action="store_true", help="also print the CSV header and row")
    _common(c)

    o = sub.add_parser("oracle", help="exact identities on finite chains", formatter_class=_formatter,
                       description="Check the ordered capacity decomposition exactly. Exit 0 iff the maximal "
                                   "deviation is within --tol.")
    o.add_argument("--suite", choices=["decomposition"], default=None, help="run the random-chain suite")
    o.add_argument("--chains", type=_positive(int), default=1000, help="number of random chains (int)")
    o.add_argument("--max-states", type=_positive(int), default=50, help="largest chain (int)")
    o.add_argument("--max-set", type=_positive(int), default=8, help="largest subset (int)")
    o.add_argument("--orderings", type=_positive(int), default=3, help="orderings per subset (int)")
    o.add_argument("--chain-file", type=str, default=None,
                   help="chain file: first line n_states, then lines 'i j p'")
    o.add_argument("--set", type=str, default=None, help="ordered states for --chain-file, e.g. 0,3,1")
    o.add_argument("--tol", type=float, default=1e-10, help="pass tolerance (float)")
    _common(o)

    t = sub.add_parser("twosided", help="two-sided LERW samples and diagnostics", formatter_class=_formatter,
                       description="d >= 5: rejection sampler; d = 4: importance-weighted one-sided paths. "
                                   "Reports are JSON lines.")
    t.add_argument("--d", type=_positive(int), default=5, help="dimension (int)")
    t.add_argument("--side", type=_positive(int), default=64, help="side length n (int)")
    t.add_argument("--horizon", type=_positive(int), default=None, help="walk horizon, d >= 5 (int); default 2 x side")
    t.add_argument("--samples", type=_positive(int), default=100, help="number of samples (int)")
    t.add_argument("--report", choices=["acceptance", "stationarity", "avoidance", "xhat"], default="acceptance",
                   help="diagnostic to compute")
    t.add_argument("--shifts", type=str, default="0,1,5,25", help="shifts k for the stationarity test")
    t.add_argument("--w-trials", type=_positive(int), default=500, help="walks per sample for escape estimates (int)")
    t.add_argument("--n-weight", type=_positive(int), default=4096, help="d = 4 weight order n_weight (int)")
    t.add_argument("--dump", type=str, default=None, help="write samples (points from -n to n) to this file")
    _common(t)

    e = sub.add_parser("experiment", help="run an experiment", formatter_class=_formatter,
                       description="Run an experiment from a flat 'key = value' config file or from flags.",
                       epilog="Config keys: experiment, d, ladder (comma list), trials, seed, output, param.<name>, "
                              "threshold.<name>. Writes <name>.csv (one row per replicate; columns experiment,d,n,"
                              "replicate,stream_id,estimate,stderr,trials, then experiment-specific extras), "
                              "<name>.json (config and summary) and <name>_<plot>.dat (two columns with header).")
    e.add_argument("--config", type=str, default=None, help="config file")
    e.add_argument("--name", type=str, default=None, help="experiment name when no config file is given")
    e.add_argument("--d", type=_positive(int), default=None, help="dimension (int)")
    e.add_argument("--ladder", type=str, default=None, help="comma-separated sizes")
    e.add_argument("--trials", type=_positive(int), default=None, help="replicates per rung (int)")
    e.add_argument("--set", type=str, action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key (repeatable)")
    _common(e)
    return parser


# handlers -------------------------------------------------------------------------

def _resolve(args) -> dict:
    from .experiments import resolve_threads

    seed = args.seed if args.seed is not None else entropy_seed()
    if not 0 <= seed < 2**64:
        raise UsageError("--seed must be an unsigned 64-bit integer")
    cfg = {k: v for k, v in vars(args).items() if k != "set"}
    cfg["seed"] = seed
    cfg["seed_source"] = "flag" if args.seed is not None else "entropy"
    cfg["threads"] = resolve_threads(args.threads)
    return cfg


def _echo(cfg: dict) -> None:
    print(json.dumps({"config": cfg}, sort_keys=True, default=str), file=sys.stderr, flush=True)


def _open_out(path):
    return open(path, "w", encoding="utf-8") if path else sys.stdout


def _walk(args, cfg) -> int:
    from .lattice import dump_path
    from .walk import cut_times, lerw_sample, loop_erase, srw_sample

    rng = RngStream(cfg["seed"], 0)
    if args.lerw:
        if args.d < 3:
            raise UsageError("--lerw needs d >= 3")
        omega, path = None, lerw_sample(args.d, args.steps, rng).points
    else:
        omega = srw_sample(args.d, args.steps, rng)
        path = loop_erase(omega).points if args.loop_erase else omega.points
    out = _open_out(args.output)
    try:
        dump_path(path, out)
        if args.cut_times:
            if omega is None:
                raise UsageError("--cut-times needs an SRW path (drop --lerw)")
            out.write("# cut-times\n")
            out.write("".join(f"{int(t)}\n" for t in cut_times(omega)))
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _capacity(args, cfg) -> int:
    from .capacity import (EstimateRecord, capacity_decomposition_mc, capacity_mc, capacity_via_hitting,
                           sausage_capacity_mc)
    from .lattice import load_path
    from .walk import lerw_sample

    rng = RngStream(cfg["seed"], 0)
    if args.points == "single-origin":
        pts = np.zeros((1, args.d), dtype=np.int64)
    elif args.points == "pair":
        pts = np.zeros((2, args.d), dtype=np.int64)
        pts[1, 0] = 1
    elif args.points_file:
        pts = load_path(args.points_file)
    else:
        pts = lerw_sample(args.d, args.lerw, rng.child("eta")).points
    if pts.shape[1] < 3:
        raise UsageError("capacity needs d >= 3")
    radius = float(np.sqrt((pts.astype(float) ** 2).sum(axis=1).max()))
    c = (pts.min(axis=0) + pts.max(axis=0)) / 2
    set_r = float(np.sqrt(((pts - c) ** 2).sum(axis=1).max())) + max(args.eps, 0.0)
    R = args.R or max(50.0, 4 * radius)
    y = args.y_radius or 2.5 * set_r + 2
    if args.method == "escape":
        rec = capacity_mc(pts, R, args.trials, rng, subsample=args.subsample)
    elif args.method == "decomposition":
        rec = capacity_decomposition_mc(pts, R, args.trials, rng, subsample=args.subsample)
    elif args.method == "hitting":
        rec = capacity_via_hitting(pts, y, args.trials, rng)
    else:
        rec = sausage_capacity_mc(pts, args.eps, y, args.trials, rng)
    rec.provenance["seed"] = cfg["seed"]
    out = _open_out(args.output)
    try:
        out.write(rec.to_json() + "\n")
        if args.csv:
            out.write(",".join(EstimateRecord.CSV_COLUMNS) + "\n")
            out.write(",".join(str(v) for v in rec.csv_row()) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _oracle(args, cfg) -> int:
    from .chain_oracle import decomposition_suite, exact_capacity, exact_decomposition, read_chain

    if args.chain_file:
        chain = read_chain(args.chain_file)
        if not args.set:
            raise UsageError("--chain-file needs --set")
        order = [int(s) for s in args.set.split(",")]
        cap, dec = exact_capacity(chain, order), exact_decomposition(chain, order)
        dev = abs(cap - dec)
        print(json.dumps({"capacity": cap, "decomposition": dec, "deviation": dev, "passed": dev <= args.tol}))
        return 0 if dev <= args.tol else 2
    if args.suite is None:
        raise UsageError("give --suite or --chain-file")
    rep = decomposition_suite(n_chains=args.chains, max_states=args.max_states, max_set=args.max_set,
                              orderings=args.orderings, seed=cfg["seed"])
    ok = rep.passed(args.tol)
    print(json.dumps({"max_deviation": rep.max_deviation, "chains": rep.chains, "checks": rep.checks,
                      "max_permutation_spread": rep.max_permutation_spread,
                      "max_equilibrium_gap": rep.max_equilibrium_gap,
                      "nonsymmetric_max_deviation": rep.nonsymmetric_max_deviation, "passed": ok}))
    print(f"max |cap - decomposition| = {rep.max_deviation:.3e}")
    return 0 if ok else 2


def _twosided(args, cfg) -> int:
    from . import twosided as T
    from .lattice import format_point

    rng = RngStream(cfg["seed"], 0)
    gen = rng.generator()
    report: dict = {"d": args.d, "side": args.side, "samples": args.samples}
    if args.d >= 5:
        horizon = args.horizon or 2 * args.side
        batch = T.two_sided_batch(args.d, args.side, horizon, args.samples, gen, check_violation=True)
        samples = batch.samples
        lo, hi = batch.acceptance_ci()
        report.update({"horizon": horizon, "acceptance_rate": batch.acceptance_rate, "acceptance_ci": [lo, hi],
                       "attempts": batch.attempts, "later_violation_fraction": batch.violation_rate})
        paths = [s.points() for s in samples]
    elif args.d == 4:
        samples = [T.d4_weighted_two_sided(args.side, args.n_weight, None, gen, w_trials=args.w_trials)
                   for _ in range(args.samples)]
        w = np.array([s.weight for s in samples])
        report.update({"law": "importance-weighted (finite-n proxy for X_inf)", "n_weight": args.n_weight,
                       "ess": T.effective_sample_size(w) if w.sum() > 0 else 0.0,
                       "ess_flagged": bool(w.sum() <= 0 or T.effective_sample_size(w) < T.ESS_FLOOR * len(w))})
        paths = [s.path.points[: args.side + 1] for s in samples]
    else:
        raise UsageError("two-sided samples need d >= 4")
    if args.report == "stationarity":
        if args.d < 5:
            raise UsageError("the stationarity report needs exact samples (d >= 5)")
        shifts = [int(k) for k in args.shifts.split(",")]
        report["stationarity"] = {str(k): v for k, v in T.stationarity_diagnostic(samples, shifts).items()}
    elif args.report == "avoidance":
        if args.d < 5:
            raise UsageError("the avoidance report needs d >= 5")
        report["avoidance"] = T.two_sided_avoidance(samples, args.w_trials, gen)
    elif args.report == "xhat":
        vals = np.array([T.x_hat_estimators(s, args.side, args.w_trials, gen) for s in samples])
        prod = vals[:, 0] * vals[:, 1]
        if args.d == 4:
            wm = T.weighted_mean(prod, [s.weight for s in samples])
            report["xhat_product"] = {"estimate": wm.value, "stderr": wm.stderr, "ess": wm.ess, "flagged": wm.flagged}
        else:
            report["xhat_product"] = {"estimate": float(prod.mean()),
                                      "stderr": float(prod.std(ddof=1) / np.sqrt(len(prod)))}
    if args.dump:
        with open(args.dump, "w", encoding="utf-8") as fh:
            for i, p in enumerate(paths):
                fh.write(f"# sample {i}\n")
                fh.write("".join(format_point(x) + "\n" for x in p))
    out = _open_out(args.output)
    try:
        out.write(json.dumps(report, sort_keys=True, default=float) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _experiment(args, cfg) -> int:
    from .experiments import ExperimentConfig, run_experiment

    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    else:
        if not args.name or args.d is None:
            raise UsageError("give --config, or --name and --d")
        text = f"experiment = {args.name}\nd = {args.d}\n"
    lines = [text]
    if args.ladder:
        lines.append(f"ladder = {args.ladder}")
    if args.trials:
        lines.append(f"trials = {args.trials}")
    lines.extend(args.set)
    # precedence: --seed, then a seed in the config, then the entropy seed already echoed
    has_seed = any(ln.split("#", 1)[0].split("=", 1)[0].strip() == "seed" for ln in "\n".join(lines).splitlines())
    if args.seed is not None or not has_seed:
        lines.append(f"seed = {cfg['seed']}")
    try:
        ec = ExperimentConfig.from_text("\n".join(lines))
    except ValueError as err:
        raise UsageError(str(err)) from err
    _echo({"experiment_config": ec.to_dict(), "threads": cfg["threads"]})
    rep = run_experiment(ec, cfg["threads"], args.output)
    print(json.dumps({"summary": rep.summary}, sort_keys=True, default=str))
    return 0


HANDLERS = {"walk": _walk, "capacity": _capacity, "oracle": _oracle, "twosided": _twosided,
            "experiment": _experiment}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _resolve(args)
        _echo(cfg)
        return HANDLERS[args.command](args, cfg)
    except UsageError as err:
        print(str(err), file=sys.stderr)
        return 1
    except SystemExit as err:  # --help
        return int(err.code or 0)
    except Exception as err:  # noqa: BLE001 - runtime failures map to exit code 2
        print(f"lerwcap: {type(err).__name__}: {err}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
