"""Error of p_N against the closed-form b(x) = x, Cauchy kernel as N grows.

    python scripts/series_convergence.py --max-order 3
"""
from __future__ import annotations

import argparse
import math
import time

import numpy as np

from stableheat.coeffs import Scenario
from stableheat.parametrix import truncated_density


def ou_cauchy(span, x, y=0.0):
    scale = math.expm1(span)
    return scale / (math.pi * (scale ** 2 + (math.exp(span) * np.asarray(x) - y) ** 2))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--max-order", type=int, default=3)
    ap.add_argument("--span", type=float, default=0.5)
    ap.add_argument("--xs", type=float, nargs="+", default=[0.0, 1.0, 3.0])
    args = ap.parse_args()
    sc = Scenario(d=1, alpha=1.0, beta=1.0, gamma=1.0, drift_id="linear", drift_params=(1.0, 0.0))
    x = np.asarray(args.xs)
    ref = ou_cauchy(args.span, x)
    print(f"{'N':>2s} {'max rel error':>14s} {'seconds':>8s}")
    for N in range(args.max_order + 1):
        t0 = time.perf_counter()
        p = truncated_density(sc, 1.0 - args.span, x, 1.0, 0.0, N=N).value
        print(f"{N:2d} {np.max(np.abs(p / ref - 1)):14.3e} {time.perf_counter() - t0:8.1f}")


if __name__ == "__main__":
    main()
