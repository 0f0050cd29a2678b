"""Euler Monte Carlo KDE against the truncated parametrix density at fixed (s, x, t).

    python scripts/mc_vs_parametrix.py --config scripts/configs/trig_exp_sin.json --paths 1000000
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from stableheat.cli import load_config, parametrix_config, validate_config
from stableheat.mc import kde_density, simulate_paths
from stableheat.parametrix import ParametrixEngine


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True)
    ap.add_argument("--paths", type=int, default=None)
    ap.add_argument("--points", type=int, default=31, help="lattice size around the sample median")
    ap.add_argument("--halfwidth", type=float, default=3.0)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    cfg = load_config(args.config)
    sc = validate_config(cfg)
    m = cfg.get("mc", {})
    s, t, x = float(m.get("s", 0.5)), float(m.get("t", 1.0)), float(m.get("x", 0.0))
    n = args.paths or int(m.get("paths", 100_000))

    t0 = time.perf_counter()
    ens = simulate_paths(sc, s, [x], t, steps=int(m.get("steps", 200)), n_paths=n, seed=int(m.get("seed", 0)),
                         threads=args.threads)
    med = float(np.median(ens.terminal[:, 0]))
    lattice = np.linspace(med - args.halfwidth, med + args.halfwidth, args.points)
    kde = kde_density(ens, lattice, n_boot=20)
    t1 = time.perf_counter()
    pcfg = parametrix_config(cfg)
    pN = np.array([ParametrixEngine(sc, t, y, pcfg, s_min=s).evaluate(s, np.array([x])).value[0] for y in lattice])
    t2 = time.perf_counter()

    print(f"{'y':>8s} {'kde':>10s} {'stderr':>9s} {'p_N':>10s} {'rel':>7s}")
    for y, k, e, p in zip(lattice, kde.values, kde.stderr, pN):
        print(f"{y:8.3f} {k:10.5f} {e:9.5f} {p:10.5f} {abs(k - p) / p:7.4f}")
    mask = pN > 1e-3
    print(f"max rel error where p_N > 1e-3: {np.max(np.abs(kde.values - pN)[mask] / pN[mask]):.4f}")
    print(f"simulation + KDE {t1 - t0:.1f}s, parametrix {t2 - t1:.1f}s, bandwidth {kde.bandwidth[0]:.4f}")


if __name__ == "__main__":
    main()
