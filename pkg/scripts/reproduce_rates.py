"""Observed vs predicted strong error rates over a range of Gauss orders.

    python scripts/reproduce_rates.py --H 0.1 --m 2,3,5,8,10
"""

import argparse
import warnings

from markovfbm.analysis import error_sweep, fit_rate, predicted_rate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--H", type=float, default=0.1)
    ap.add_argument("--T", type=float, default=1.0)
    ap.add_argument("--m", default="2,3,4,5,6,8,10")
    ap.add_argument("--n", default="4,8,16,32,64,128,256")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    ns = [int(v) for v in args.n.split(",")]

    print(f"{'m':>3} {'predicted':>10} {'observed':>10} {'resid':>8}  rel error at n={ns[0]} .. n={ns[-1]}")
    for m in (int(v) for v in args.m.split(",")):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            recs = error_sweep(args.H, m, ns, args.T, workers=args.workers)
        fit = fit_rate(recs)
        print(f"{m:>3} {predicted_rate(args.H, m):>10.4f} {fit.slope:>10.4f} {fit.residual:>8.4f}  "
              f"{recs[0].rel_error:.3e} .. {recs[-1].rel_error:.3e}")


if __name__ == "__main__":
    main()
