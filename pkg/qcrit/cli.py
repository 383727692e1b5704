"""Command-line front door.

Exit codes: 0 ok, 1 usage or model error, 2 invariant failure, 3 physics flag
(unstable or singular steady state, degenerate kernel, degenerate fit).
"""
import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .criticality import (
    correlation_length, exponent_fit, find_poles, parallel_map, slowing_down_check,
)
from .entanglement import area_law_scan, is_dark_state
from .errors import (
    DegenerateKernelError, FitDegenerateError, ModelError, NoPolesError, NotPositiveError, QcritError,
    SingularSymbolError, TailTooFatError, UnstableSteadyStateError,
)
from .io import RunManifest, manifest_timestamp, write_csv, write_json
from .log import configure_logging
from .model import DEFAULT_NOISE, PRESET_DEFAULTS, PRESET_NOISE, ModelSpec, build_preset, validate
from .oracle import FiniteRing, compare, dense_lyapunov, exact_master_equation
from .settings import Settings, load_settings
from .steady import correlations, covariance_symbol, evolve_symbol, initial_symbol, physicality

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INVARIANT = 2
EXIT_PHYSICS = 3
RESIDUAL_TOL = 1e-10


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --- 1. Argument helpers ---

def parse_overrides(items: Optional[Sequence[str]]) -> Tuple[Dict[str, float], Optional[str]]:
    """``k=v,k=v`` pairs (repeatable); ``noise=`` selects a preset channel and is returned apart."""
    values: Dict[str, float] = {}
    noise = None
    for item in items or []:
        for pair in filter(None, (p.strip() for p in item.split(","))):
            key, sep, raw = pair.partition("=")
            if not sep or not key:
                raise UsageError(f"Malformed override '{pair}', expected k=v")
            if key == "noise":
                noise = raw
                continue
            try:
                values[key] = float(raw)
            except ValueError:
                raise UsageError(f"Override {key}={raw} is not a number") from None
    return values, noise


def parse_range(text: str) -> np.ndarray:
    try:
        lo, hi, n = text.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise UsageError(f"Malformed range '{text}', expected lo:hi:n") from None
    if n < 1 or (n > 1 and lo == hi):
        raise UsageError(f"Range '{text}' is empty")
    return np.linspace(lo, hi, n)


def parse_block(text: str) -> List[int]:
    try:
        lo, hi = (int(v) for v in text.split(".."))
    except ValueError:
        raise UsageError(f"Malformed block range '{text}', expected lo..hi") from None
    if lo < 1 or hi < lo:
        raise UsageError(f"Block range '{text}' is empty")
    return list(range(lo, hi + 1))


def load_model(args) -> Tuple[ModelSpec, Dict[str, Any]]:
    values, noise = parse_overrides(args.set)
    if args.config:
        if noise is not None:
            raise UsageError("noise= selects a preset channel and cannot be used with --config")
        try:
            spec = ModelSpec.from_json(Path(args.config).read_text())
        except OSError as e:
            raise UsageError(f"Cannot read config {args.config}: {e}") from e
        unknown = sorted(set(values) - set(spec.params))
        if unknown:
            raise UsageError(f"Config {args.config} has no parameters {unknown}")
        spec = spec.with_params(**values)
        return spec, {"config": str(args.config), "params": spec.params}
    if args.preset:
        spec = build_preset(args.preset, noise, values)
        return spec, {"preset": args.preset, "noise": noise or DEFAULT_NOISE[args.preset], "params": spec.params}
    raise UsageError("One of --preset or --config is required")


def _manifest(args, settings: Settings, source: Dict[str, Any], spec: ModelSpec) -> RunManifest:
    options = {k: v for k, v in vars(args).items() if k not in ("func", "set", "verbose")}
    return RunManifest(
        command=args.command,
        timestamp=manifest_timestamp(settings),
        model={"source": source, "spec": spec.model_dump(mode="json")},
        options=json.loads(json.dumps(options, default=str)),
    )


def _out(args, name: str) -> Path:
    return Path(args.out) / f"{args.command}_{name}"


# --- 2. Commands ---

def cmd_steady(args, settings: Settings) -> int:
    spec, source = load_model(args)
    manifest = _manifest(args, settings, source, spec)
    try:
        sym = covariance_symbol(spec, args.grid)
        cov = correlations(sym, args.rmax)
    except (UnstableSteadyStateError, SingularSymbolError) as e:
        write_json(_out(args, "summary.json"),
                   {"flag": type(e).__name__, "message": str(e), "momenta": e.momenta}, manifest)
        raise

    symbol_rows = []
    for phi, value in zip(sym.phi, sym.values):
        parts = [float(v) for entry in value.ravel() for v in (entry.real, entry.imag)]
        symbol_rows.append([float(phi)] + parts)
    components = [f"{part}{i}{j}" for i in range(2) for j in range(2) for part in ("re", "im")]
    write_csv(_out(args, "symbol.csv"), ["phi"] + components, symbol_rows, manifest,
              ["rad"] + [""] * len(components))
    write_csv(_out(args, "correlations.csv"), ["r", "g00", "g01", "g10", "g11"],
              [[r] + [float(v) for v in cov.blocks[r].ravel()] for r in sorted(cov.blocks)], manifest,
              ["sites", "", "", "", ""])

    physical, margin = physicality(cov)
    pure, purity_deviation = is_dark_state(cov)
    checks = {"residual": sym.residual <= RESIDUAL_TOL, "physical": physical}
    write_json(_out(args, "summary.json"), {
        "checks": checks, "residual": sym.residual, "physicality_margin": margin,
        "singular_momenta": int(sym.singular.sum()), "refined": cov.refined,
        "imaginary_residue": cov.imaginary_residue, "pure": pure, "purity_deviation": purity_deviation,
    }, manifest)
    return EXIT_OK if all(checks.values()) else EXIT_INVARIANT


def cmd_sweep(args, settings: Settings) -> int:
    spec, source = load_model(args)
    if args.param not in spec.params:
        raise UsageError(f"Unsupported sweep parameter: {args.param}")
    grid = parse_range(args.range)
    jobs = args.jobs or settings.jobs
    manifest = _manifest(args, settings, source, spec)

    def point(value: float) -> Dict[str, Any]:
        model = spec.with_params(**{args.param: float(value)})
        row = {"value": float(value), "xi_inv_pole": math.nan, "xi_inv_tail": math.nan,
               "tau": math.nan, "flags": ""}
        try:
            result = correlation_length(model, args.grid, args.rmax, args.im_cap, with_tail=not args.no_tail)
            row["xi_inv_pole"] = result.xi_inv_pole if result.xi_inv_pole is not None else math.nan
            row["xi_inv_tail"] = result.xi_inv_tail if result.xi_inv_tail is not None else math.nan
        except QcritError as e:
            row["flags"] = type(e).__name__
            logger.warning(f"{args.param}={value:.6g}: {e}")
        return row

    rows = parallel_map(point, list(grid), jobs)
    ok = [r for r in rows if not r["flags"] and np.isfinite(r["xi_inv_pole"])]
    values = [r["value"] for r in ok]
    payload: Dict[str, Any] = {"points": len(rows), "flagged": len(rows) - len(ok)}
    status = EXIT_OK if ok else EXIT_PHYSICS

    if ok:
        try:
            report = slowing_down_check(spec, args.param, values, args.grid, jobs, args.im_cap)
            for row, tau in zip(ok, report.relaxation_time):
                row["tau"] = tau
            payload["slowing_down"] = {"inf_tau_over_xi": report.infimum, "band": report.band,
                                       "bounded_below": bool(report.bounded_below)}
        except QcritError as e:
            payload["slowing_down"] = {"flag": type(e).__name__, "message": str(e)}
            status = EXIT_PHYSICS
    write_csv(_out(args, "points.csv"), [args.param, "xi_inv_pole", "xi_inv_tail", "tau", "flags"],
              [[r["value"], r["xi_inv_pole"], r["xi_inv_tail"], r["tau"], r["flags"]] for r in rows],
              manifest, ["", "1/sites", "1/sites", "time", ""])

    if args.gc_hint is not None:
        try:
            fit = exponent_fit(spec, args.param, values, args.gc_hint, jobs, args.im_cap,
                               args.reference_exponent)
            payload["fit"] = fit.__dict__
        except FitDegenerateError as e:
            payload["fit"] = {"flag": "FitDegenerateError", "message": str(e)}
            status = EXIT_PHYSICS
    write_json(_out(args, "fit.json"), payload, manifest)
    return status


def cmd_poles(args, settings: Settings) -> int:
    spec, source = load_model(args)
    manifest = _manifest(args, settings, source, spec)
    try:
        poles = find_poles(spec, args.im_cap)
    except NoPolesError as e:
        write_json(_out(args, "report.json"), {"no_poles": True, "im_cap": e.im_cap, "poles": []}, manifest)
        return EXIT_OK
    write_csv(_out(args, "list.csv"),
              ["re_phi", "im_phi", "im_abs", "condition", "residual", "removable", "critical", "ambiguous"],
              [[p.phi_star.real, p.phi_star.imag, p.im_abs, p.condition.value, p.residual,
                int(p.removable), int(p.critical), int(p.ambiguous)] for p in poles],
              manifest, ["rad", "1/sites", "1/sites", "", "", "", "", ""])
    write_json(_out(args, "report.json"), {"no_poles": False, "poles": [p.__dict__ for p in poles]}, manifest)
    return EXIT_OK


def cmd_negativity(args, settings: Settings) -> int:
    spec, source = load_model(args)
    sizes = parse_block(args.block)
    if sizes[-1] >= args.chain_length:
        raise UsageError(f"Blocks up to {sizes[-1]} do not fit a {args.chain_length}-site chain")
    manifest = _manifest(args, settings, source, spec)
    table = area_law_scan(spec, args.chain_length, sizes, args.grid)
    write_csv(_out(args, "table.csv"), ["block_size", "E_N", "l1_bound"],
              [[row.size, row.e_n, row.l1_bound] for row in table.rows], manifest, ["sites", "bits", ""])
    chain = all(row.chain_holds for row in table.rows)
    write_json(_out(args, "summary.json"), {
        "rows": [row.__dict__ for row in table.rows], "plateau": table.plateau,
        "saturated": table.saturated(), "bound_chain_holds": chain,
    }, manifest)
    return EXIT_OK if chain else EXIT_INVARIANT


def cmd_oracle(args, settings: Settings) -> int:
    spec, source = load_model(args)
    manifest = _manifest(args, settings, source, spec)
    if args.exact:
        solution = exact_master_equation(spec, args.L)
        ok = solution.deviation <= 1e-9
        payload = {"mode": "exact", "L": args.L, "kernel_dimension": solution.kernel_dimension,
                   "max_deviation": solution.deviation, "ok": ok,
                   "covariance": solution.covariance, "lyapunov_physical": solution.lyapunov.physical}
    else:
        dense = dense_lyapunov(FiniteRing.from_spec(spec, args.L))
        field = correlations(covariance_symbol(spec, args.L), args.L // 4)
        report = compare(field, dense)
        ok = report.ok and dense.physical
        payload = {"mode": "compare", "L": args.L, "max_deviation": report.max_deviation,
                   "r_range": report.r_range, "ok": ok, "physical": dense.physical, "message": report.message}
    write_json(_out(args, "report.json"), payload, manifest)
    return EXIT_OK if ok else EXIT_INVARIANT


def cmd_evolve(args, settings: Settings) -> int:
    spec, source = load_model(args)
    manifest = _manifest(args, settings, source, spec)
    steady = covariance_symbol(spec, args.grid)
    evolved = evolve_symbol(spec, initial_symbol(spec, args.grid), args.time, args.steps)
    distance = np.linalg.norm(evolved.values - steady.values, axis=(1, 2))
    write_csv(_out(args, "distance.csv"), ["phi", "distance"],
              [[float(p), float(d)] for p, d, s in zip(steady.phi, distance, steady.singular) if not s],
              manifest, ["rad", ""])
    regular = distance[~steady.singular]
    write_json(_out(args, "summary.json"), {
        "time": args.time, "steps": args.steps,
        "max_distance": float(regular.max()) if regular.size else None,
        "fixed_point_residual": evolved.residual,
    }, manifest)
    return EXIT_OK


def cmd_model(args, settings: Settings) -> int:
    if args.action == "list":
        for name, defaults in sorted(PRESET_DEFAULTS.items()):
            channels = ", ".join(sorted(PRESET_NOISE[name]))
            print(f"{name}: params {defaults}; noise {channels} (default {DEFAULT_NOISE[name]})")
        return EXIT_OK
    spec, _ = load_model(args)
    if args.action == "validate":
        report = validate(spec)
        print(report.model_dump_json(indent=2))
        return EXIT_OK if report.passed else EXIT_INVARIANT
    text = spec.to_json()
    if args.output:
        Path(args.output).write_text(text + "\n")
        logger.info(f"Wrote {args.output}")
    else:
        print(text)
    return EXIT_OK


# --- 3. Parser and dispatch ---

def build_parser() -> argparse.ArgumentParser:
    model_source = _Parser(add_help=False)
    model_source.add_argument("--preset", choices=sorted(PRESET_DEFAULTS), help="Named model preset.")
    model_source.add_argument("--config", help="JSON model description.")
    model_source.add_argument("--set", action="append", metavar="K=V,...",
                              help="Parameter overrides; beat config-file values.")

    common = _Parser(add_help=False, parents=[model_source])
    common.add_argument("--grid", type=int, default=1024, help="Momentum grid size N.")
    common.add_argument("--rmax", type=int, default=64, help="Largest real-space offset.")
    common.add_argument("--im-cap", type=float, default=3.0, help="Pole search strip half-height.")
    common.add_argument("--out", default="results", help="Output directory.")

    parser = _Parser(prog="qcrit", description="Steady states and dissipative criticality of quasi-free chains.")
    parser.add_argument("--verbose", action="store_true", help="DEBUG logging.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("steady", parents=[common], help="Steady-state symbol and correlations.")
    p.set_defaults(func=cmd_steady)

    p = sub.add_parser("sweep", parents=[common], help="Correlation length over a parameter range.")
    p.add_argument("--param", default="g")
    p.add_argument("--range", required=True, help="lo:hi:n")
    p.add_argument("--gc-hint", type=float, default=None)
    p.add_argument("--reference-exponent", type=float, default=None)
    p.add_argument("--no-tail", action="store_true", help="Skip the tail-fit cross-check.")
    p.add_argument("--jobs", type=int, default=None, help="Worker threads (default QCRIT_JOBS).")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("poles", parents=[common], help="Poles of the covariance symbol.")
    p.set_defaults(func=cmd_poles)

    p = sub.add_parser("negativity", parents=[common], help="Area-law scan of the logarithmic negativity.")
    p.add_argument("--chain-length", type=int, default=40)
    p.add_argument("--block", default="2..10", help="lo..hi block sizes")
    p.set_defaults(func=cmd_negativity)

    p = sub.add_parser("oracle", parents=[common], help="Finite-ring cross-checks.")
    p.add_argument("--L", type=int, default=32)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--compare", action="store_true", help="Symbol route against the dense ring (default).")
    mode.add_argument("--exact", action="store_true", help="Exact fermionic master equation.")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("evolve", parents=[common], help="Relax the symbol from zero and report the distance.")
    p.add_argument("--time", type=float, default=5.0)
    p.add_argument("--steps", type=int, default=2000)
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("model", parents=[model_source], help="List, validate or dump models.")
    p.add_argument("action", choices=["list", "validate", "dump"])
    p.add_argument("--output", help="File for 'dump' (default stdout).")
    p.set_defaults(func=cmd_model)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        settings = load_settings()
        args = build_parser().parse_args(argv)
        configure_logging("DEBUG" if args.verbose else settings.log_level)
        if not getattr(args, "func", None):
            raise UsageError("A command is required")
        return args.func(args, settings)
    except (UsageError, ModelError, ValueError) as e:
        print(f"qcrit: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (UnstableSteadyStateError, SingularSymbolError) as e:
        shown = ", ".join(f"{p:.4f}" for p in e.momenta[:8]) + (" ..." if len(e.momenta) > 8 else "")
        logger.error(f"{type(e).__name__}: {e} [momenta: {shown}]")
        return EXIT_PHYSICS
    except (DegenerateKernelError, FitDegenerateError, NoPolesError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_PHYSICS
    except (TailTooFatError, NotPositiveError) as e:
        logger.error(f"Invariant failure: {e}")
        return EXIT_INVARIANT
