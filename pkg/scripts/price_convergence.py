"""Put prices as the number of OU factors grows, against the exact-vol oracle.

All runs share the driving noise, so differences between rows are not
Monte Carlo noise of independent samples.

    python scripts/price_convergence.py --N 20000 --k 128
"""

import argparse
import time

from markovfbm.bergomi import PricingConfig, price


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--H", type=float, default=0.1)
    ap.add_argument("--m", type=int, default=5)
    ap.add_argument("--K", type=float, default=1.0)
    ap.add_argument("--k", type=int, default=256)
    ap.add_argument("--N", type=int, default=20_000)
    ap.add_argument("--rho", type=float, default=0.0)
    ap.add_argument("--n", default="2,4,8,16,32,64")
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--no-exact", action="store_true", help="skip the O(k^3) exact-vol reference")
    args = ap.parse_args()

    base = dict(K=args.K, k=args.k, N=args.N, rho=args.rho, H=args.H, m=args.m, seed=args.seed)
    rows = []
    for n in (int(v) for v in args.n.split(",")):
        t0 = time.perf_counter()
        r = price(PricingConfig(n=n, **base), workers=args.workers)
        rows.append((f"n={n}", r, time.perf_counter() - t0))
    if not args.no_exact:
        t0 = time.perf_counter()
        r = price(PricingConfig(vol_source="exact", **base), workers=args.workers)
        rows.append(("exact", r, time.perf_counter() - t0))

    ref = rows[-1][1].price
    print(f"{'source':>8} {'put':>9} {'stderr':>8} {'|gap|':>8} {'clamped':>7} {'sec':>6}")
    for name, r, secs in rows:
        print(f"{name:>8} {r.price:>9.5f} {r.stderr:>8.5f} {abs(r.price - ref):>8.5f} {r.clamped:>7} {secs:>6.1f}")


if __name__ == "__main__":
    main()
