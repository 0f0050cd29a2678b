"""Command line front end: ``stableheat <command> --config cfg.json --seed N --threads N --out DIR``.

Commands: validate, flow, density, mc, verify, report.  Every run writes
``manifest.json`` (input hash, seed, versions) and ``report.json`` into the
output directory; lattice-valued results go to CSV files.  Exit codes: 0 ok,
1 a bound or check failed, 2 invalid configuration, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import platform
import sys
from dataclasses import fields, replace
from importlib import metadata
from pathlib import Path

import jsonschema
import numpy as np
import scipy

from .coeffs import CATALOG_DISPERSIONS, CATALOG_DRIFTS, EllipticityError, Scenario, validate_hypotheses
from .flow import FlowIntegrationError, FlowMap, flow_suite
from .kernels import convolution_hypothesis_ok
from .mc import kde_density, simulate_paths
from .parametrix import ParametrixConfig, ParametrixEngine, ResolutionError
from .verify import DEFAULT_CEILINGS, DEFAULT_ZETAS, VerifyGrid, _profile, verify_all

COMMANDS = ("validate", "flow", "density", "mc", "verify", "report")
EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_count = {"type": "integer", "minimum": 1}
_coeff = {
    "type": "object",
    "required": ["id"],
    "additionalProperties": False,
    "properties": {"id": {"type": "string"}, "params": {"type": "array", "items": _num}},
}
_PARAMETRIX_KEYS = {f.name for f in fields(ParametrixConfig)} - {"scout_flow", "polar"}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["d", "alpha", "beta", "gamma"],
    "additionalProperties": False,
    "properties": {
        "d": {"type": "integer", "minimum": 1},
        "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 2},
        "beta": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "gamma": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "kappa0": {"type": "number", "minimum": 1},
        "kappa1": {"type": "number", "minimum": 1},
        "T": _pos,
        "drift": dict(_coeff, properties={**_coeff["properties"], "id": {"enum": list(CATALOG_DRIFTS)}}),
        "dispersion": dict(_coeff, properties={**_coeff["properties"], "id": {"enum": list(CATALOG_DISPERSIONS)}}),
        "quadrature": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: _num for k in sorted(_PARAMETRIX_KEYS)},
        },
        "mc": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "paths": _count, "steps": _count, "seed": {"type": "integer", "minimum": 0},
                "s": _num, "t": _num, "x": _num, "lattice": {"type": "array", "items": _num, "minItems": 2},
                "n_boot": {"type": "integer", "minimum": 0},
            },
        },
        "verify": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "ceilings": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {k: _pos for k in DEFAULT_CEILINGS},
                },
                "t": _num, "y": _num, "N": {"type": "integer", "minimum": 0},
                "spans": {"type": "array", "items": _pos, "minItems": 1},
                "zetas": {"type": "array", "items": _num, "minItems": 1},
            },
        },
        "flow": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"x": {"type": "array", "items": _num, "minItems": 1},
                           "spans": {"type": "array", "items": _pos, "minItems": 2}},
        },
    },
}


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(message)
        self.path = path


# ---------------------------------------------------------------- config


def load_config(path: str | Path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> Scenario:
    """Schema check followed by the scenario's own range checks."""
    validator = jsonschema.Draft7Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)
        raise ConfigError(path, err.message)
    try:
        return Scenario.from_dict(cfg)
    except ValueError as exc:
        msg = str(exc)
        name = next((k for k in ("beta", "gamma", "alpha", "kappa0", "kappa1", "T", "d") if msg.startswith(k)), None)
        raise ConfigError(f"$.{name}" if name else "$", msg) from exc


def parametrix_config(cfg: dict, N: int | None = None) -> ParametrixConfig:
    q = dict(cfg.get("quadrature", {}))
    ints = {f.name for f in fields(ParametrixConfig) if f.type in ("int", int)}
    q = {k: (int(v) if k in ints else float(v)) for k, v in q.items()}
    base = ParametrixConfig(**q)
    return replace(base, N=N) if N is not None else base


def verify_grid(cfg: dict) -> VerifyGrid:
    v = cfg.get("verify", {})
    return VerifyGrid(t=float(v.get("t", 1.0)), y=float(v.get("y", 0.0)),
                      spans=tuple(float(s) for s in v.get("spans", (0.4, 0.2, 0.1))),
                      zetas=tuple(float(z) for z in v.get("zetas", DEFAULT_ZETAS)))


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n", newline="\n")


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format(float(v), ".12g") for v in row])


def _versions() -> dict:
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "jsonschema": metadata.version("jsonschema"), "artifact": pkg}


# ---------------------------------------------------------------- commands


def cmd_validate(sc: Scenario, cfg: dict, args, out: Path) -> tuple[dict, bool]:
    rep = validate_hypotheses(sc.field(), sc, seed=args.seed)
    body = rep.to_dict()
    # informational: the series is still evaluated when this is false
    body["convolution_hypothesis"] = {"gamma0": sc.gamma0, "limit": sc.alpha / 4,
                                      "holds": convolution_hypothesis_ok(sc.alpha, sc.gamma0)}
    return {"validate": body}, rep.passed


def cmd_flow(sc: Scenario, cfg: dict, args, out: Path) -> tuple[dict, bool]:
    fc = cfg.get("flow", {})
    xs = fc.get("x", [0.0, 1.0, -2.0])
    spans = fc.get("spans")
    fm = FlowMap.from_scenario(sc)
    rows, per_x = [], []
    for x in xs:
        res = flow_suite(fm, np.full(sc.d, float(x)), spans)
        per_x.append({"x": x, **res})
        for h, dfc, dd in zip(res["spans"], res["defects"], res["det_deviations"]):
            theta = fm.solve_flow(0.0, h, np.full(sc.d, float(x)))
            rows.append([x, h, float(np.ravel(theta)[0]), dfc, dd])
    write_csv(out / "flow.csv", ["x", "span", "theta", "defect", "det_deviation"], rows)
    ok = all(r["inverse_error"] <= 1e-6 and r["defect_exponent"] >= r["defect_exponent_target"]
             and r["det_exponent"] >= r["det_exponent_target"] for r in per_x)
    return {"flow": {"grid_id": "flow", "points": per_x, "passed": ok}}, ok


def cmd_density(sc: Scenario, cfg: dict, args, out: Path) -> tuple[dict, bool]:
    grid = verify_grid(cfg)
    N = int(cfg.get("verify", {}).get("N", 2))
    pc = parametrix_config(cfg, N)
    eng = ParametrixEngine(sc, grid.t, grid.y, pc, s_min=max(grid.t - max(grid.spans), 0.0))
    fm = FlowMap.from_scenario(sc)
    rows = []
    for span in grid.spans:
        s = grid.t - span
        c, _ = eng.centre(s)
        x = c + np.asarray(grid.zetas) * span ** (1 / sc.alpha)
        ev = eng.evaluate(s, x)
        dist = fm.solve_flow(s, grid.t, x[:, None])[:, 0] - grid.y
        phi = span * _profile(sc.alpha, sc.d, span, dist)
        for xi, p0, pn, ph in zip(x, ev.p0, ev.value, phi):
            rows.append([s, xi, grid.t, grid.y, p0, pn, ph, pn / ph])
    write_csv(out / "density.csv", ["s", "x", "t", "y", "p0", "pN", "phi", "ratio"], rows)
    ratios = np.array([r[-1] for r in rows])
    summary = {"grid_id": grid.grid_id, "N": N, "rows": len(rows), "ratio_min": ratios.min(),
               "ratio_max": ratios.max(), "positive": bool(np.all(ratios > 0))}
    return {"density": summary}, summary["positive"]


def cmd_mc(sc: Scenario, cfg: dict, args, out: Path) -> tuple[dict, bool]:
    m = cfg.get("mc", {})
    s, t, x = float(m.get("s", 0.5)), float(m.get("t", 1.0)), float(m.get("x", 0.0))
    lattice = np.asarray(m.get("lattice", np.linspace(-4, 4, 33)), dtype=float)
    ens = simulate_paths(sc, s, [x], t, steps=int(m.get("steps", 400)), n_paths=int(m.get("paths", 100_000)),
                         seed=args.seed, threads=args.threads)
    kde = kde_density(ens, lattice, n_boot=int(m.get("n_boot", 50)), seed=args.seed)
    pN = np.array([ParametrixEngine(sc, t, float(y), parametrix_config(cfg), s_min=s).evaluate(s, [x]).value[0]
                   for y in lattice])
    rel = np.abs(kde.values - pN) / pN
    mask = pN > 1e-3
    write_csv(out / "mc.csv", ["y", "kde", "stderr", "pN", "rel_error"],
              zip(lattice, kde.values, kde.stderr, pN, rel))
    worst = float(rel[mask].max()) if mask.any() else float("nan")
    summary = {"grid_id": "mc_lattice", "seed": args.seed, "paths": ens.n_paths, "steps": ens.steps,
               "flagged": int(ens.flagged), "bandwidth": kde.bandwidth, "max_rel_error": worst,
               "lattice_mass": kde.lattice_mass()}
    return {"mc": summary}, bool(worst < 0.1)


def cmd_verify(sc: Scenario, cfg: dict, args, out: Path) -> tuple[dict, bool]:
    grid = verify_grid(cfg)
    v = cfg.get("verify", {})
    N = int(v.get("N", 2))
    reps = verify_all(sc, grid, N, v.get("ceilings"), parametrix_config(cfg, N))
    body = {k: r.to_dict() for k, r in reps.items()}
    return {"verify": body}, all(r.passed for r in reps.values())


def cmd_report(sc: Scenario, cfg: dict, args, out: Path) -> tuple[dict, bool]:
    body, ok = {}, True
    steps = [cmd_validate, cmd_flow, cmd_verify] + ([cmd_mc] if "mc" in cfg else [])
    for fn in steps:
        part, passed = fn(sc, cfg, args, out)
        body.update(part)
        ok = ok and passed
    return body, ok


HANDLERS = {"validate": cmd_validate, "flow": cmd_flow, "density": cmd_density, "mc": cmd_mc,
            "verify": cmd_verify, "report": cmd_report}


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stableheat", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="scenario JSON file")
        p.add_argument("--seed", type=int, default=None, help="64-bit seed (overrides mc.seed)")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out", default="out", help="output directory")
        if name == "density":
            p.add_argument("--grid", action="store_true", help="emit the lattice CSV (always on)")
    return ap


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        sc = validate_config(cfg)
        if args.seed is None:
            args.seed = int(cfg.get("mc", {}).get("seed", 0))
        if not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--seed", "seed must be an unsigned 64-bit integer")
        if args.threads < 1:
            raise ConfigError("--threads", "threads must be positive")
    except ConfigError as exc:
        print(f"config error at {exc.path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error at $: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    inputs_hash = hashlib.sha256(_canonical({"config": cfg, "command": args.command}).encode()).hexdigest()
    provenance = {"command": args.command, "seed": args.seed, "threads": args.threads, "inputs_sha256": inputs_hash}
    try:
        with np.errstate(over="ignore", under="ignore"):
            body, ok = HANDLERS[args.command](sc, cfg, args, out)
    except (ResolutionError, FlowIntegrationError, EllipticityError, FloatingPointError,
            np.linalg.LinAlgError, NotImplementedError) as exc:
        module = type(exc).__module__.rsplit(".", 1)[-1]
        print(f"numerical failure in {module}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    write_json(out / "report.json", {"provenance": provenance, "scenario": sc.to_dict(), "results": body,
                                     "passed": ok})
    outputs = sorted(p.name for p in out.iterdir() if p.is_file() and p.name != "manifest.json")
    write_json(out / "manifest.json", {
        **provenance, "versions": _versions(),
        "outputs": {name: hashlib.sha256((out / name).read_bytes()).hexdigest() for name in outputs},
    })
    return EXIT_OK if ok else EXIT_FAILED


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
