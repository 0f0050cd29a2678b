"""Why the profile is centred on the flow: two-sided ratios for b(x) = x.

For each start x the target is y = theta_{s,t}(x).  The flow-centred ratio
p / ((t-s) phi(0)) stays bounded while the naive ratio, which measures the
distance as |x - y|, grows like |x|^{1+alpha}.

    python scripts/flow_recentering.py --xs 0 1 2 5 10
"""
from __future__ import annotations

import argparse

from stableheat.coeffs import Scenario
from stableheat.verify import naive_centre_comparison


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--xs", type=float, nargs="+", default=[0.0, 1.0, 2.0, 5.0, 10.0])
    ap.add_argument("--span", type=float, default=0.5)
    ap.add_argument("--alpha", type=float, default=1.0)
    args = ap.parse_args()
    sc = Scenario(d=1, alpha=args.alpha, beta=1.0, gamma=1.0, drift_id="linear", drift_params=(1.0, 0.0))
    out = naive_centre_comparison(sc, 1.0 - args.span, 1.0, args.xs)
    print(f"{'x':>6s} {'y':>9s} {'p':>10s} {'flow ratio':>11s} {'naive ratio':>12s} {'naive/flow':>11s}")
    for r in out["rows"]:
        print(f"{r['x']:6.2f} {r['y']:9.4f} {r['p']:10.5f} {r['flow_ratio']:11.4f} {r['naive_ratio']:12.4f} "
              f"{r['naive_over_flow']:11.2f}")


if __name__ == "__main__":
    main()
