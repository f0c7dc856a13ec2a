"""Recompute the bounds on G(0,z)|z|^{d-2} shipped in lerwcap.green.

The sup is the truncation constant of the escape brackets, so it must stay
at or above every computed value; the inf must stay at or below.  Prints
the fresh extremes next to the shipped constants and exits 1 if either
shipped bound is violated.
"""

import argparse
import sys

from lerwcap.green import GREEN_RATIO_INF, GREEN_RATIO_SUP, green_constant, green_ratio_extremes


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dims", type=int, nargs="+", default=sorted(GREEN_RATIO_SUP))
    ap.add_argument("--box", type=int, default=None, help="half-width of the scanned box (default 8, or 4 for d > 5)")
    args = ap.parse_args(argv)
    bad = False
    print(f"{'d':>2} {'min':>8} {'max':>8} {'a_d':>8} {'ship_inf':>9} {'ship_sup':>9} {'suggest_inf':>11} {'suggest_sup':>11}")
    for d in args.dims:
        box = args.box or (8 if d <= 5 else 4)
        lo, hi = green_ratio_extremes(d, box)
        a = green_constant(d)
        lo, hi = min(lo, a), max(hi, a)
        inf, sup = GREEN_RATIO_INF.get(d, float("nan")), GREEN_RATIO_SUP.get(d, float("nan"))
        bad |= not (inf <= lo and sup >= hi)
        print(f"{d:>2} {lo:8.4f} {hi:8.4f} {a:8.4f} {inf:9.4f} {sup:9.4f} {0.99 * lo:11.4f} {1.01 * hi:11.4f}")
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
