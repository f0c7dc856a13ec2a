"""Run every experiment config in a directory and print a pass/fail table.

    python3 scripts/run_config.py scripts/configs --out results --threads 4
"""

import argparse
import json
from pathlib import Path

from lerwcap.experiments import ExperimentConfig, run_experiment


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description="run experiment configs")
    ap.add_argument("paths", nargs="+", type=Path, help="config files or directories of *.cfg")
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args(argv)
    files = [f for p in args.paths for f in (sorted(p.glob("*.cfg")) if p.is_dir() else [p])]
    failed = 0
    for f in files:
        cfg = ExperimentConfig.load(f)
        rep = run_experiment(cfg, threads=args.threads, outdir=args.out / f.stem)
        s = rep.summary
        failed += s.get("passed") is False
        print(f"{f.stem:<24} passed={s.get('passed')} wall={s.get('wall_time', 0):.1f}s")
        (args.out / f.stem / "summary.txt").write_text(json.dumps(s, indent=2, default=str) + "\n")
    return 1 if failed else 0


if __name__ == "__main__":
    raise SystemExit(main())
