"""Command-line interface: convergence experiments, error surfaces, domain
robustness studies and Monte Carlo validation reports.

Subcommands
-----------
run           Solve across refinement levels and write a convergence table.
error-surface Compare the numeric surface against the closed form, node by node.
domain-study  Re-solve with scaled domain widths (same spacing) and compare.

Configuration comes from an optional file (flat ``key = value`` lines or a
JSON object) overridden by command-line flags.  Prices are printed with 8
decimals and errors with 2 significant digits.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from .model import (ModelSpec, Objective, CallOnMax, Butterfly,
                    ConfigurationError, build_control_set)
from .domain import RefinementLevel, build_grid, truncation_half_width
from .solver import solve, price_at, export_policy
from .reference import McConfig, mc_validate, stulz_call_on_max

__all__ = ["main", "load_config", "run_experiment", "emit_error_surface",
           "domain_robustness_study"]

DEFAULTS = {
    "r": 0.05, "T": 0.25, "X0": 40.0, "Y0": 40.0,
    "sigma_x_min": 0.3, "sigma_x_max": 0.5,
    "sigma_y_min": 0.3, "sigma_y_max": 0.5,
    "rho_min": 0.3, "rho_max": 0.5,
    "objective": "worst", "payoff": "call_on_max",
    "K": 40.0, "K1": 34.0, "K2": 46.0,
    "levels": "0,1", "quadrature": "trapezoid", "engine": "fast",
    "half_width": 1.2, "epsilon": 1e-10,
    "mc_paths": 100000, "seed": 0,
    "output_dir": ".",
}


def load_config(path):
    """Parse a config file: JSON object, or flat ``key = value`` lines."""
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ConfigurationError("JSON config must be an object")
        return {str(k): v for k, v in data.items()}
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            cfg[key] = json.loads(value)
        except json.JSONDecodeError:
            cfg[key] = value
    return cfg


def _settings(args):
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        file_cfg = load_config(args.config)
        unknown = set(file_cfg) - set(DEFAULTS)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    for key in DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            cfg[key] = flag
    return cfg


def _model_spec(cfg):
    return ModelSpec(
        r=float(cfg["r"]), T=float(cfg["T"]),
        X0=float(cfg["X0"]), Y0=float(cfg["Y0"]),
        sigma_x_range=(float(cfg["sigma_x_min"]), float(cfg["sigma_x_max"])),
        sigma_y_range=(float(cfg["sigma_y_min"]), float(cfg["sigma_y_max"])),
        rho_range=(float(cfg["rho_min"]), float(cfg["rho_max"])),
        objective=Objective.parse(cfg["objective"]),
    )


def _payoff(cfg):
    name = str(cfg["payoff"]).strip().lower()
    if name == "call_on_max":
        return CallOnMax(K=float(cfg["K"]))
    if name == "butterfly":
        return Butterfly(K1=float(cfg["K1"]), K2=float(cfg["K2"]))
    raise ConfigurationError(f"unknown payoff {cfg['payoff']!r}; "
                             "use 'call_on_max' or 'butterfly'")


def _levels(cfg, allow_large):
    if isinstance(cfg["levels"], (list, tuple)):
        levels = [int(v) for v in cfg["levels"]]
    else:
        levels = [int(v) for v in str(cfg["levels"]).split(",") if v.strip()]
    for lev in levels:
        if lev < 0:
            raise ConfigurationError(f"level must be >= 0, got {lev}")
        if lev > 2 and not allow_large:
            raise ConfigurationError(
                f"level {lev} exceeds the desk-scale budget (levels 0-2); "
                "pass --allow-large to run it anyway")
    return levels


def _reference_price(spec, payoff):
    """Closed-form price at the optimizer's corner control, when known.

    For the call on the maximum the optimal control is constant: both
    volatilities at the interval top with correlation at the bottom for the
    worst case, and the reverse for the best case.  Other payoffs have no
    closed form here; convergence is then reported via successive changes.
    """
    if not isinstance(payoff, CallOnMax):
        return None
    if spec.objective is Objective.WORST_CASE:
        sx, sy = spec.sigma_x_range[1], spec.sigma_y_range[1]
        rho = spec.rho_range[0]
    else:
        sx, sy = spec.sigma_x_range[0], spec.sigma_y_range[0]
        rho = spec.rho_range[1]
    return stulz_call_on_max(spec.X0, spec.Y0, payoff.K, spec.r, spec.T,
                             sx, sy, rho)


def _grid_for_level(spec, cfg, level, width_multiplier=1.0):
    ladder = RefinementLevel(level)
    if cfg["half_width"] is None or str(cfg["half_width"]).lower() == "auto":
        width = truncation_half_width(float(cfg["epsilon"]), spec, spec.T / ladder.M)
    else:
        width = float(cfg["half_width"])
    width *= width_multiplier
    n_scale = round(ladder.N * width_multiplier)
    if n_scale % 2 or n_scale < 4:
        raise ConfigurationError(
            f"width multiplier {width_multiplier} gives odd/tiny N={n_scale}")
    grid = build_grid(spec, width, n_scale, n_scale, ladder.M)
    return grid, ladder


def _fmt_price(p):
    return f"{p:.8f}"


def _fmt_err(e):
    return f"{e:.2e}" if e is not None else ""


def run_experiment(cfg, allow_large=False, record_policy=False, out_dir=None):
    """Solve at each refinement level; return convergence table rows."""
    spec = _model_spec(cfg)
    payoff = _payoff(cfg)
    levels = _levels(cfg, allow_large)
    reference = _reference_price(spec, payoff)
    rows = []
    prev_price = prev_err = prev_change = None
    results = {}
    for level in levels:
        grid, ladder = _grid_for_level(spec, cfg, level)
        controls = build_control_set(spec, ladder.Qx, ladder.Qy)
        t0 = time.perf_counter()
        result = solve(spec, payoff, grid, controls,
                       quadrature=str(cfg["quadrature"]),
                       engine=str(cfg["engine"]),
                       record_policy=record_policy)
        seconds = time.perf_counter() - t0
        price = price_at(result, spec.X0, spec.Y0)
        err = abs(price - reference) if reference is not None else None
        change = abs(price - prev_price) if prev_price is not None else None
        if err is not None and prev_err not in (None, 0.0):
            ratio = prev_err / err if err else math.inf
        elif change is not None and prev_change not in (None, 0.0):
            ratio = prev_change / change if change else math.inf
        else:
            ratio = None
        rows.append({
            "level": level, "N": grid.N, "J": grid.J, "M": grid.M,
            "controls": len(controls),
            "price": price, "error": err, "change": change,
            "ratio": ratio, "seconds": seconds,
        })
        prev_price, prev_err, prev_change = price, err, change
        results[level] = result
    report = {"rows": rows, "reference": reference, "results": results,
              "spec": spec, "payoff": payoff}
    if out_dir is not None:
        _write_convergence(report, Path(out_dir) / "convergence.csv")
    return report


def _write_convergence(report, path):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["level", "N", "J", "M", "controls", "price",
                         "error", "change", "ratio", "seconds"])
        for row in report["rows"]:
            writer.writerow([
                row["level"], row["N"], row["J"], row["M"], row["controls"],
                _fmt_price(row["price"]), _fmt_err(row["error"]),
                _fmt_err(row["change"]),
                f"{row['ratio']:.2f}" if row["ratio"] is not None else "",
                f"{row['seconds']:.2f}",
            ])


def emit_error_surface(cfg, level, out_dir, allow_large=False):
    """Write per-node |numeric - closed form| over the inner box to CSV."""
    spec = _model_spec(cfg)
    payoff = _payoff(cfg)
    if not isinstance(payoff, CallOnMax):
        raise ConfigurationError("error surfaces need the closed-form payoff "
                                 "('call_on_max')")
    _levels({**cfg, "levels": str(level)}, allow_large)
    grid, ladder = _grid_for_level(spec, cfg, level)
    controls = build_control_set(spec, ladder.Qx, ladder.Qy)
    result = solve(spec, payoff, grid, controls,
                   quadrature=str(cfg["quadrature"]), engine=str(cfg["engine"]),
                   record_policy=False)
    if spec.objective is Objective.WORST_CASE:
        sx, sy = spec.sigma_x_range[1], spec.sigma_y_range[1]
        rho = spec.rho_range[0]
    else:
        sx, sy = spec.sigma_x_range[0], spec.sigma_y_range[0]
        rho = spec.rho_range[1]
    path = Path(out_dir) / f"error_surface_level{level}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    xs = grid.x_hat0 + grid.interior_index_x * grid.dx
    ys = grid.y_hat0 + grid.interior_index_y * grid.dy
    interior = result.surface.interior()
    max_err = 0.0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "X", "Y", "numeric", "reference", "abs_error"])
        for i, x in enumerate(xs):
            X = math.exp(x)
            for k, y in enumerate(ys):
                Y = math.exp(y)
                ref = stulz_call_on_max(X, Y, payoff.K, spec.r, spec.T, sx, sy, rho)
                err = abs(interior[i, k] - ref)
                max_err = max(max_err, err)
                writer.writerow([f"{x:.10f}", f"{y:.10f}", f"{X:.10f}",
                                 f"{Y:.10f}", _fmt_price(interior[i, k]),
                                 _fmt_price(ref), _fmt_err(err)])
    return path, max_err


def domain_robustness_study(cfg, level, multipliers=(0.75, 1.0, 2.0),
                            out_dir=None, allow_large=False):
    """Re-solve with the domain half-width scaled, keeping the node spacing.

    The interval count N scales with the width so dx is unchanged; reported
    prices should be insensitive to the widening and only mildly sensitive to
    the narrowing if the baseline domain is adequate.
    """
    spec = _model_spec(cfg)
    payoff = _payoff(cfg)
    _levels({**cfg, "levels": str(level)}, allow_large)
    rows = []
    base_price = None
    for mult in multipliers:
        grid, ladder = _grid_for_level(spec, cfg, level, width_multiplier=mult)
        controls = build_control_set(spec, ladder.Qx, ladder.Qy)
        t0 = time.perf_counter()
        result = solve(spec, payoff, grid, controls,
                       quadrature=str(cfg["quadrature"]),
                       engine=str(cfg["engine"]), record_policy=False)
        seconds = time.perf_counter() - t0
        price = price_at(result, spec.X0, spec.Y0)
        if mult == 1.0:
            base_price = price
        rows.append({"multiplier": mult, "half_width": grid.half_width_x,
                     "N": grid.N, "price": price, "seconds": seconds})
    for row in rows:
        row["diff_vs_base"] = (abs(row["price"] - base_price)
                               if base_price is not None else None)
    if out_dir is not None:
        path = Path(out_dir) / f"domain_study_level{level}.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["multiplier", "half_width", "N", "price",
                             "diff_vs_base", "seconds"])
            for row in rows:
                writer.writerow([row["multiplier"], f"{row['half_width']:.4f}",
                                 row["N"], _fmt_price(row["price"]),
                                 _fmt_err(row["diff_vs_base"]),
                                 f"{row['seconds']:.2f}"])
    return rows


def _add_common(parser):
    parser.add_argument("--config", help="config file (key=value lines or JSON)")
    parser.add_argument("--output-dir", dest="output_dir", help="directory for output files")
    parser.add_argument("--objective", choices=["worst", "best"])
    parser.add_argument("--payoff", choices=["call_on_max", "butterfly"])
    parser.add_argument("--quadrature", choices=["trapezoid", "simpson"])
    parser.add_argument("--engine", choices=["fast", "exact"])
    parser.add_argument("--half-width", dest="half_width", type=float)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--allow-large", action="store_true",
                        help="permit refinement levels above 2")


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="uvpricer",
        description="Two-asset option pricing under uncertain volatility "
                    "and correlation")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="convergence experiment across levels")
    _add_common(p_run)
    p_run.add_argument("--levels", help="comma-separated refinement levels")
    p_run.add_argument("--with-mc", action="store_true",
                       help="validate the finest level with Monte Carlo")
    p_run.add_argument("--mc-paths", dest="mc_paths", type=int)
    p_run.add_argument("--export-policy", action="store_true",
                       help="save the finest level's policy (.npz)")

    p_surf = sub.add_parser("error-surface",
                            help="per-node error against the closed form")
    _add_common(p_surf)
    p_surf.add_argument("--level", type=int, default=0)

    p_dom = sub.add_parser("domain-study",
                           help="sensitivity to the domain truncation width")
    _add_common(p_dom)
    p_dom.add_argument("--level", type=int, default=0)
    p_dom.add_argument("--multipliers", default="0.75,1.0,2.0")

    args = parser.parse_args(argv)
    cfg = _settings(args)
    out_dir = Path(cfg["output_dir"])

    if args.command == "run":
        need_policy = bool(args.with_mc or args.export_policy)
        report = run_experiment(cfg, allow_large=args.allow_large,
                                record_policy=need_policy, out_dir=out_dir)
        ref = report["reference"]
        if ref is not None:
            print(f"reference price: {_fmt_price(ref)}")
        print("level  N      M    controls  price         error      ratio   seconds")
        for row in report["rows"]:
            err = _fmt_err(row["error"]) if row["error"] is not None else _fmt_err(row["change"])
            ratio = f"{row['ratio']:.2f}" if row["ratio"] is not None else "-"
            print(f"{row['level']:<6d} {row['N']:<6d} {row['M']:<4d} "
                  f"{row['controls']:<9d} {_fmt_price(row['price']):<13s} "
                  f"{err:<10s} {ratio:<7s} {row['seconds']:.2f}")
        print(f"wrote {out_dir / 'convergence.csv'}")
        finest = max(report["results"])
        result = report["results"][finest]
        if args.export_policy:
            pol_path = out_dir / f"policy_level{finest}.npz"
            export_policy(result, pol_path)
            print(f"wrote {pol_path}")
        if args.with_mc:
            spec, payoff = report["spec"], report["payoff"]
            mc = McConfig(n_paths=int(cfg["mc_paths"]), seed=int(cfg["seed"]))
            mc_result = mc_validate(result.policy, spec, payoff,
                                    result.surface.grid, mc)
            pde_price = price_at(result, spec.X0, spec.Y0)
            mc_report = dict(mc_result.report())
            mc_report["pde_price"] = pde_price
            mc_report["pde_in_ci"] = mc_result.contains(pde_price)
            path = out_dir / "mc_report.json"
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(mc_report, indent=2) + "\n")
            print(f"MC mean {mc_result.mean:.6f} "
                  f"CI [{mc_result.ci_low:.6f}, {mc_result.ci_high:.6f}] "
                  f"PDE {pde_price:.6f} "
                  f"({'inside' if mc_report['pde_in_ci'] else 'OUTSIDE'})")
            print(f"wrote {path}")
        return 0

    if args.command == "error-surface":
        path, max_err = emit_error_surface(cfg, args.level, out_dir,
                                           allow_large=args.allow_large)
        print(f"max |error| over the inner box: {_fmt_err(max_err)}")
        print(f"wrote {path}")
        return 0

    if args.command == "domain-study":
        multipliers = [float(v) for v in str(args.multipliers).split(",")]
        rows = domain_robustness_study(cfg, args.level, multipliers,
                                       out_dir=out_dir,
                                       allow_large=args.allow_large)
        print("multiplier  half_width  N      price         diff_vs_base")
        for row in rows:
            diff = _fmt_err(row["diff_vs_base"])
            print(f"{row['multiplier']:<11g} {row['half_width']:<11.4f} "
                  f"{row['N']:<6d} {_fmt_price(row['price']):<13s} {diff}")
        print(f"wrote {out_dir / f'domain_study_level{args.level}.csv'}")
        return 0

    parser.error(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
