"""Command-line front end.

Frequencies on the command line and in data files are plain Hz; they are
converted to rad/s internally.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from ..coop import cooperativities
from ..ensemble import convergence_scan
from ..noise import (bose_occupation, bottleneck_coefficient, direct_process_rate, fit_hemt,
                     noise_budget, pl_count_rate, read_thermometry_csv)
from ..params import TWO_PI, ParameterError
from ..scattering import added_noise_rti, single_atom_result
from .context import RunContext, load_context
from .fits import FitResult, fit_cascade, fit_envelope, fit_lorentzian, fit_reflection
from .lm import FitError
from .report import compute_figures, report
from .sweep import MODE_ALIASES, PUMP_POWER, SweepSpec, evaluate, sweep, table_csv

DIMENSIONLESS = {"n_g", "n_e1", "n_e2", "manifold_fraction", PUMP_POWER}


def _to_internal(name: str, value: float) -> float:
    key = name[len("system."):] if name.startswith("system.") else name
    return value if key in DIMENSIONLESS else TWO_PI * value


def _emit(rows: list[dict[str, Any]], columns: Sequence[str], fmt_name: str,
          out: str | None, extra: dict | None = None) -> None:
    if fmt_name == "json":
        doc: dict[str, Any] = {"rows": rows}
        if extra:
            doc.update(extra)
        text = json.dumps(doc, indent=2, allow_nan=True) + "\n"
    else:
        text = table_csv(rows, columns)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _context(args) -> RunContext:
    return load_context(args.config)


def _ensemble(ctx: RunContext, args):
    return ctx.ensemble_spec(seed=getattr(args, "seed", None),
                             n_trials=getattr(args, "trials", None),
                             n_groups=getattr(args, "groups_single", None))


def cmd_simulate(args) -> None:
    ctx = _context(args)
    p = ctx.system
    probe = TWO_PI * args.probe_hz
    mode = MODE_ALIASES[args.mode]
    ens = None if mode == "closed_form" else _ensemble(ctx, args)
    res = evaluate(p, probe, mode, ens)
    c = cooperativities(p, probe=probe)
    row = {"probe_Hz": args.probe_hz, "eta_m2o": res["eta"], "refl_mw": res["refl"],
           "noise_ratio": res["noise_ratio"], "stderr": res["stderr"],
           "C_e": abs(c.C_e), "C_o": abs(c.C_o), "C_a": abs(c.C_a)}
    _emit([row], list(row), args.format, args.out, {"mode": mode})


def _grid(args) -> list[float]:
    if args.grid:
        return [float(x) for x in args.grid.split(",") if x.strip()]
    if args.start is None or args.stop is None:
        raise ParameterError("grid", "give --grid or --start/--stop/--num")
    return list(np.linspace(args.start, args.stop, args.num))


def _overrides(items: Sequence[str]) -> dict[str, float]:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ParameterError(item, "override must look like key=value")
        k, v = item.split("=", 1)
        out[k.strip()] = _to_internal(k.strip(), float(v))
    return out


def cmd_sweep(args) -> None:
    ctx = _context(args)
    grid_user = _grid(args)
    grid = [_to_internal(args.variable, v) for v in grid_user]
    mode = MODE_ALIASES[args.mode]
    spec = SweepSpec(args.variable, grid, _overrides(args.set), None, mode,
                     None if mode == "closed_form" else _ensemble(ctx, args),
                     ctx.rabi_per_sqrt_mW)
    rows = sweep(spec, ctx.system, workers=args.workers)
    for r, v in zip(rows, grid_user):
        r["value"] = float(v)
    _emit(rows, ("value", "eta", "refl", "noise_ratio", "stderr"), args.format, args.out,
          {"variable": spec.variable, "mode": mode})


def cmd_mc(args) -> None:
    ctx = _context(args)
    spec = _ensemble(ctx, args)
    probe = TWO_PI * args.probe_hz
    counts = [int(x) for x in args.groups.split(",")] if args.groups else [spec.n_groups]
    rows = convergence_scan(spec, ctx.system, probe, counts, workers=args.workers)
    _emit(rows, ("n_groups", "mean_eta", "stderr", "n_trials", "seed"), args.format, args.out)


def _read_xy(path: str) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ParameterError(path, "data file needs a header and at least one row")
    header = [h.strip() for h in rows[0]]
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ParameterError(path, f"non-numeric data: {exc}") from None
    return header, data


def _fit_rows(res: FitResult) -> list[dict[str, Any]]:
    return [{"parameter": k, "value": v, "stderr": e, "at_bound": int(k in res.at_bound)}
            for k, v, e in res.rows()]


def cmd_fit(args) -> None:
    model = args.model
    if model == "hemt":
        samples, omega, B = read_thermometry_csv(args.data)
        G, N, cov = fit_hemt(samples, omega, B)
        err = np.sqrt(np.clip(np.diag(cov), 0, None))
        rows = [{"parameter": "G", "value": G, "stderr": float(err[0]), "at_bound": 0},
                {"parameter": "N_HEMT", "value": N, "stderr": float(err[1]), "at_bound": 0}]
        _emit(rows, ("parameter", "value", "stderr", "at_bound"), args.format, args.out,
              {"model": "hemt"})
        return
    header, data = _read_xy(args.data)
    if model == "reflection":
        ctx = _context(args)
        x = TWO_PI * data[:, 0]
        y = data[:, 1] + 1j * data[:, 2] if data.shape[1] >= 3 else data[:, 1]
        res = fit_reflection(list(zip(x, y)), ctx.system)
        for k in ("g_e_tot", "kappa_ext", "kappa_int", "delta_ec", "Gamma_e"):
            res.parameters[k] /= TWO_PI
            res.stderr[k] /= TWO_PI
    else:
        pts = list(zip(data[:, 0], data[:, 1]))
        if model == "lorentzian":
            res = fit_lorentzian(pts, 1)
        elif model == "lorentzian2":
            res = fit_lorentzian(pts, 2)
        elif model == "cascade":
            res = fit_cascade(pts)
        elif model == "envelope":
            res = fit_envelope(pts)
        else:  # argparse restricts choices
            raise ParameterError("model", f"unknown model {model}")
    _emit(_fit_rows(res), ("parameter", "value", "stderr", "at_bound"), args.format, args.out,
          {"model": res.model, "residual_norm": res.residual_norm, "n_points": res.n_points})


def cmd_noise(args) -> None:
    ctx = _context(args)
    p, m = ctx.system, ctx.material
    N_wg = bose_occupation(p.omega_e, ctx.noise("waveguide_temperature_K"))
    N_res = bose_occupation(p.omega_e, ctx.noise("resonator_temperature_K"))
    r = single_atom_result(p, TWO_PI * args.probe_hz)
    bath = ctx.bath()
    b = bottleneck_coefficient(bath)
    R = direct_process_rate(bath)
    pl = pl_count_rate(R, ctx.noise("t_init_s"), m.rho, ctx.noise("ion_volume_m3"),
                       ctx.noise("rho_e"), ctx.noise("pl_lifetime_s"), ctx.noise("detection_eff"))
    row = {"N_wg": N_wg, "N_res": N_res, "N_add_rti_mw": added_noise_rti(r, p, N_wg, N_res),
           "bottleneck_b": b, "direct_rate_Hz": R, "tau_ph_s": bath.tau_ph,
           "pl_count_rate_Hz": pl}
    if args.eta is not None:
        budget = noise_budget(args.eta, args.n_th, args.n_pl)
        row.update({"N_th": budget.N_th, "N_PL": budget.N_PL, "N_add_RTI": budget.N_add_RTI,
                    "eta_used": budget.eta_used})
    _emit([row], list(row), args.format, args.out)


def cmd_report(args) -> None:
    figures = compute_figures(_context(args))
    text_json, table = report(figures)
    if args.format == "json":
        text = text_json + "\n"
    else:
        rows = [{"figure": k, "value": v["value"],
                 "reference": v["reference"] if v["reference"] is not None else math.nan,
                 "unit": v["unit"]} for k, v in figures.items()]
        text = table_csv(rows, ("figure", "value", "reference", "unit"))
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    sys.stderr.write(table)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config (default: reconstructed reference device)")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", help="write output here instead of stdout")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--mode", choices=("exact", "closed", "mc"), default="closed")

    ap = argparse.ArgumentParser(prog="reitrans", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="single operating point")
    s.add_argument("--probe-hz", type=float, default=0.0)
    s.add_argument("--trials", type=int, default=None)
    s.add_argument("--groups", dest="groups_single", type=int, default=None)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", parents=[common], help="one-variable sweep")
    s.add_argument("--variable", required=True,
                   help="probe, pump_power_mW or a SystemParams field (rates in Hz)")
    s.add_argument("--grid", help="comma-separated values")
    s.add_argument("--start", type=float)
    s.add_argument("--stop", type=float)
    s.add_argument("--num", type=int, default=101)
    s.add_argument("--set", action="append", metavar="KEY=VALUE")
    s.add_argument("--trials", type=int, default=None)
    s.add_argument("--groups", dest="groups_single", type=int, default=None)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("mc", parents=[common], help="Monte-Carlo ensemble convergence table")
    s.add_argument("--groups", help="comma-separated ascending group counts")
    s.add_argument("--trials", type=int, default=None)
    s.add_argument("--probe-hz", type=float, default=0.0)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_mc)

    s = sub.add_parser("fit", parents=[common], help="fit a model to a data file")
    s.add_argument("model", choices=("lorentzian", "lorentzian2", "cascade", "envelope",
                                     "reflection", "hemt"))
    s.add_argument("--data", required=True)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("noise", parents=[common], help="noise budget from config")
    s.add_argument("--probe-hz", type=float, default=0.0)
    s.add_argument("--eta", type=float, default=None)
    s.add_argument("--n-th", type=float, default=0.0)
    s.add_argument("--n-pl", type=float, default=0.0)
    s.set_defaults(func=cmd_noise)

    s = sub.add_parser("report", parents=[common], help="figures of merit vs reference values")
    s.set_defaults(func=cmd_report)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except ParameterError as exc:
        sys.stderr.write(json.dumps({"error": "parameter", "field": exc.field,
                                     "message": str(exc)}) + "\n")
        return 2
    except (FitError, ArithmeticError, RuntimeError, ValueError, OSError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
