"""Command-line front end.

Exit codes: 0 on success, 1 on a domain error (a JSON description of the
error is written to stderr), 2 on a usage error.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, IoError, TvcError

COMMANDS = ("estimate", "forecast", "cv", "two-stage", "simulate", "evaluate")


def _threads(value) -> int:
    if value is None:
        value = os.environ.get("TVC_THREADS", "1")
    try:
        n = int(value)
    except ValueError:
        raise ConfigurationError(f"thread count {value!r} is not an integer") from None
    if n < 1:
        raise ConfigurationError("thread count must be positive")
    return n


def _cv_spec(text: str):
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected c1,c2,n")
    try:
        return float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"malformed grid spec {text!r}") from None


def _int_list(text: str):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"malformed integer list {text!r}") from None


def _float_list(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"malformed number list {text!r}") from None


def _add_panel_args(p):
    p.add_argument("--input", required=True, help="panel CSV with a header row")
    p.add_argument("--target", default="y", help="target column name (default: y)")
    p.add_argument("--time-column", default=None)
    p.add_argument("--forecasts", default=None, help="comma-separated forecast columns (default: all others)")


def _add_common(p):
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--threads", default=None, help="worker count (fallback: TVC_THREADS)")
    p.add_argument("--config", default=None, help="JSON file with default option values")


def _add_bandwidth_args(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--bandwidth", type=float, default=None, help="fixed bandwidth h in (0, 1)")
    g.add_argument("--cv", type=_cv_spec, default=None, metavar="C1,C2,N",
                   help="cross-validation grid on [C1, C2] T^(-1/5) with N points")
    p.add_argument("--kernel", default="epanechnikov", choices=["epanechnikov", "uniform", "quartic"])


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(prog="tvcomb", description="Time-varying forecast combination.")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = sub.add_parser("estimate", help="estimate the weight path")
    _add_panel_args(p)
    _add_bandwidth_args(p)
    _add_common(p)
    subs["estimate"] = p

    p = sub.add_parser("forecast", help="one-step combined forecast from the last row's forecasts")
    _add_panel_args(p)
    _add_bandwidth_args(p)
    p.add_argument("--method", default="nprf", choices=["nprf", "two-stage"])
    p.add_argument("--lambda-grid", type=_float_list, default=None)
    p.add_argument("--c-bandwidth", type=float, default=1.0)
    _add_common(p)
    subs["forecast"] = p

    p = sub.add_parser("cv", help="cross-validation curve and selected bandwidth")
    _add_panel_args(p)
    p.add_argument("--cv", type=_cv_spec, default=(0.5, 3.0, 20), metavar="C1,C2,N")
    p.add_argument("--kernel", default="epanechnikov", choices=["epanechnikov", "uniform", "quartic"])
    _add_common(p)
    subs["cv"] = p

    p = sub.add_parser("two-stage", help="penalized fit for many forecasts")
    _add_panel_args(p)
    p.add_argument("--lambda-grid", type=_float_list, default=None, help="comma-separated lambda3 values")
    p.add_argument("--c-bandwidth", type=float, default=1.0)
    p.add_argument("--kernel", default="epanechnikov", choices=["epanechnikov", "uniform", "quartic"])
    _add_common(p)
    subs["two-stage"] = p

    p = sub.add_parser("simulate", help="Monte Carlo tables")
    p.add_argument("--table", type=int, choices=[1, 2], default=1)
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--T", dest="T_list", type=_int_list, default=None, help="comma-separated sample sizes")
    p.add_argument("--J", dest="J_list", type=_int_list, default=None, help="extra forecasts (table 2)")
    p.add_argument("--n-oos", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    _add_common(p)
    subs["simulate"] = p

    p = sub.add_parser("evaluate", help="ASCFE table and DM / Reality Check p-values")
    p.add_argument("--input", required=True, help="holdout CSV: actual column plus one column per method")
    p.add_argument("--actual", default="actual")
    p.add_argument("--compare", action="append", default=[], metavar="A<B",
                   help="one-sided comparison 'A<B' (A has the smaller loss); repeatable")
    p.add_argument("--reps", type=int, default=1000, help="bootstrap replicates")
    p.add_argument("--block-q", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    _add_common(p)
    subs["evaluate"] = p
    return parser, subs


def parse_args(argv=None) -> argparse.Namespace:
    """Parse flags; values from ``--config`` act as defaults that flags override."""
    argv = sys.argv[1:] if argv is None else list(argv)
    parser, subs = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if a in subs), None)
    if known.config and command is not None:
        try:
            with open(known.config, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config {known.config}: {exc}")
        if not isinstance(cfg, dict):
            parser.error("config file must hold a JSON object")
        sp = subs[command]
        known_dests = {a.dest: a for a in sp._actions}
        defaults = {}
        for key, value in cfg.items():
            dest = key.replace("-", "_")
            if dest not in known_dests or dest in ("config", "help"):
                parser.error(f"unknown config key {key!r}")
            action = known_dests[dest]
            if isinstance(value, str) and action.type is not None:
                value = action.type(value)
            defaults[dest] = value
        sp.set_defaults(**defaults)
        # required flags may now come from the file
        for a in sp._actions:
            if a.dest in defaults:
                a.required = False
    return parser.parse_args(argv)


def _load(args, with_next=False):
    from .panel import load_csv

    path = Path(args.input)
    if not path.is_file():
        raise IoError(f"input file {str(path)!r} not found", path=str(path))
    cols = args.forecasts.split(",") if args.forecasts else None
    return load_csv(path, args.target, args.time_column, cols, with_next=with_next)


def _outdir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create output directory {str(out)!r}: {exc}", path=str(out)) from None
    return out


def _bandwidth(args, panel, kernel, out):
    from .bandwidth import select_bandwidth

    if args.bandwidth is not None:
        return float(args.bandwidth), None
    c1, c2, n = args.cv if args.cv is not None else (0.5, 3.0, 20)
    curve = select_bandwidth(panel, kernel, c1, c2, n, n_jobs=_threads(args.threads))
    curve.to_csv(out / "cv_curve.csv")
    return curve.h_star, curve


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_estimate(args) -> int:
    from .smoother import fit_path, get_kernel

    panel = _load(args)
    kernel = get_kernel(args.kernel)
    out = _outdir(args)
    h, _ = _bandwidth(args, panel, kernel, out)
    path = fit_path(panel, h, kernel, n_jobs=_threads(args.threads))
    path.to_csv(out / "weights.csv")
    with open(out / "weights.json", "w", encoding="utf-8") as fh:
        fh.write(path.to_json())
    return 0


def cmd_forecast(args) -> int:
    from .smoother import forecast_next, get_kernel
    from .sparse import fit_two_stage

    panel, f_next = _load(args, with_next=True)
    out = _outdir(args)
    kernel = get_kernel(args.kernel)
    if args.method == "nprf":
        h, _ = _bandwidth(args, panel, kernel, out)
        report = {"method": "nprf", "h": h, "forecast": forecast_next(panel, h, kernel, f_next)}
    else:
        fit = fit_two_stage(panel, args.lambda_grid, args.c_bandwidth, kernel, f_new=f_next,
                            n_jobs=_threads(args.threads))
        report = {"method": "two-stage", "h": fit.h, "forecast": fit.forecast,
                  "active_set": [panel.labels[j - 1] for j in fit.active_set]}
    _write_json(out / "forecast.json", report)
    return 0


def cmd_cv(args) -> int:
    from .bandwidth import select_bandwidth
    from .smoother import get_kernel

    panel = _load(args)
    out = _outdir(args)
    c1, c2, n = args.cv
    curve = select_bandwidth(panel, get_kernel(args.kernel), c1, c2, n, n_jobs=_threads(args.threads))
    curve.to_csv(out / "cv_curve.csv")
    _write_json(out / "cv.json", {"h_star": curve.h_star, "kernel": args.kernel,
                                  "disqualified": list(curve.disqualified)})
    return 0


def cmd_two_stage(args) -> int:
    from .smoother import get_kernel
    from .sparse import fit_two_stage

    panel = _load(args)
    out = _outdir(args)
    fit = fit_two_stage(panel, args.lambda_grid, args.c_bandwidth, get_kernel(args.kernel),
                        n_jobs=_threads(args.threads))
    fit.to_csv(out / "staged.csv")
    with open(out / "staged.json", "w", encoding="utf-8") as fh:
        fh.write(fit.to_json())
    return 0


def cmd_simulate(args) -> int:
    from .simulation import run_table1, run_table2

    out = _outdir(args)
    n_jobs = _threads(args.threads)
    if args.table == 1:
        res = run_table1(
            reps=500 if args.reps is None else args.reps,
            T_list=tuple(args.T_list or (200, 300, 500)),
            seed=args.seed,
            n_oos=50 if args.n_oos is None else args.n_oos,
            n_jobs=n_jobs,
        )
        res.to_csv(out / "table1.csv")
    else:
        res = run_table2(
            reps=200 if args.reps is None else args.reps,
            T_list=tuple(args.T_list or (50, 100, 150)),
            J_list=tuple(args.J_list or (10, 50, 100)),
            seed=args.seed,
            n_oos=10 if args.n_oos is None else args.n_oos,
            n_jobs=n_jobs,
        )
        res.to_csv(out / "table2.csv")
    res.write_manifest(out / "manifest.json")
    return 0


def _parse_comparison(text: str, methods) -> tuple[str, str]:
    if text.count("<") != 1:
        raise ConfigurationError(f"comparison {text!r} must have the form 'A<B'", comparison=text)
    a, b = (s.strip() for s in text.split("<"))
    for m in (a, b):
        if m not in methods:
            raise ConfigurationError(f"unknown method {m!r} in comparison {text!r}", comparison=text)
    if a == b:
        raise ConfigurationError(f"comparison {text!r} compares a method with itself", comparison=text)
    return a, b


def cmd_evaluate(args) -> int:
    from .evaluation import LossSeries, dm_test, rc_test, summary_csv

    path = Path(args.input)
    if not path.is_file():
        raise IoError(f"input file {str(path)!r} not found", path=str(path))
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise IoError(f"{str(path)!r} has no data rows", path=str(path))
    cols = list(rows[0].keys())
    if args.actual not in cols:
        raise ConfigurationError(f"actual column {args.actual!r} not found", column=args.actual)
    methods = [c for c in cols if c not in (args.actual, "t")]
    if len(methods) < 2:
        raise ConfigurationError("need at least two method columns")
    comparisons = [_parse_comparison(c, methods) for c in args.compare]

    def column(name):
        try:
            return np.array([float(r[name]) for r in rows])
        except (TypeError, ValueError):
            raise ConfigurationError(f"column {name!r} has non-numeric entries", column=name) from None

    actual = column(args.actual)
    losses = LossSeries.from_forecasts(actual, {m: column(m) for m in methods})
    out = _outdir(args)
    summary_csv(losses, out / "ascfe.csv")
    report = []
    for a, b in comparisons:
        dm = dm_test(losses.losses[a], losses.losses[b], "less")
        rc = rc_test(losses.losses[b], losses.losses[a], B=args.reps, q=args.block_q, seed=args.seed)
        report.append({"comparison": f"{a}<{b}", "dm_statistic": dm.statistic, "dm_p_value": dm.p_value,
                       "dm_lag": dm.meta["lag"], "rc_statistic": rc.statistic, "rc_p_value": rc.p_value,
                       "rc_B": args.reps, "rc_q": args.block_q, "seed": args.seed})
    _write_json(out / "tests.json", report)
    return 0


HANDLERS = {
    "estimate": cmd_estimate,
    "forecast": cmd_forecast,
    "cv": cmd_cv,
    "two-stage": cmd_two_stage,
    "simulate": cmd_simulate,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    args = parse_args(argv)
    try:
        return HANDLERS[args.command](args)
    except TvcError as exc:
        sys.stderr.write(json.dumps(exc.to_dict(), sort_keys=True) + "\n")
        return 1
    except ValueError as exc:
        sys.stderr.write(json.dumps({"kind": "value", "message": str(exc), "location": {}}) + "\n")
        return 1
    except OSError as exc:
        err = {"kind": "io", "message": str(exc), "location": {"path": getattr(exc, "filename", None)}}
        sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
