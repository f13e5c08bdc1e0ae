"""Command-line interface: ``longmem <command> ...``.

Exit codes: 0 success, 1 input error, 2 numerical/degenerate data,
3 configuration error.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import os
import sys
from typing import Optional, Sequence

from . import __version__
from .arfima import ArfimaSpec, SimConfig, simulate
from .errors import ConfigError, InputError, LongMemError
from .montecarlo import (
    McConfig,
    VARIANTS,
    null_critical_values,
    power_analysis,
    prefilter_bias_study,
)
from .prefilter import correlogram, fit_sparse_ar, select_lags
from .report import AnalyzeOptions, analyze_path, dumps, render_report
from .rra import build_scale_grid, estimate_hurst, estimate_hurst_split
from .series import (
    PriceSeries,
    log_returns,
    multiscale_describe,
    read_csv,
    shuffle_surrogate,
    write_stats_csv,
    write_values_csv,
)
from .store import CriticalValuesStore, fetch_panel

log = logging.getLogger("longmem")

SEED_ENV = "LONGMEM_SEED"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return 0
    try:
        seed = int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None
    if seed < 0:
        raise ConfigError(f"{SEED_ENV} must be non-negative")
    return seed


def _floats(text: str) -> list[float]:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of integers, got {text!r}") from None


def _ar_coeffs(text: Optional[str]) -> dict[int, float]:
    """``"1:0.2,4:0.0782"`` -> ``{1: 0.2, 4: 0.0782}``."""
    if not text:
        return {}
    out = {}
    for item in text.split(","):
        try:
            lag, coef = item.split(":")
            out[int(lag)] = float(coef)
        except ValueError:
            raise ConfigError(f"AR terms look like 'lag:coef,...', got {text!r}") from None
    return out


def _returns_from(path):
    data = read_csv(path)
    return log_returns(data) if isinstance(data, PriceSeries) else data


def _emit(text: str, output: Optional[str]) -> None:
    if output and output != "-":
        with open(output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _grid_args(p, knot=True):
    p.add_argument("--grid-min", type=float, default=1.6, help="smallest ln(n) (default 1.6)")
    p.add_argument("--grid-max", type=float, default=5.7, help="largest ln(n) (default 5.7)")
    p.add_argument("--grid-step", type=float, default=0.1, help="ln(n) step (default 0.1)")
    if knot:
        p.add_argument("--knot", type=int, default=40, help="scale separating H_S and H_L (default 40)")


def _grid_config(args) -> dict:
    return {"grid_min": args.grid_min, "grid_max": args.grid_max, "grid_step": args.grid_step}


def _mc_args(p, reps=5000):
    p.add_argument("--reps", type=int, default=reps, help=f"Monte Carlo replications (default {reps})")
    p.add_argument("--seed", type=int, default=None, help=f"master seed (default ${SEED_ENV} or 0)")
    p.add_argument("--workers", type=int, default=1, help="worker processes; results do not depend on it")


def _seed(args) -> int:
    return default_seed() if args.seed is None else args.seed


# --------------------------------------------------------------------------
# commands


def cmd_analyze(args) -> int:
    if args.replay:
        with open(args.replay) as fh:
            cfg = json.load(fh)["config"]
        path, options = cfg["input"], AnalyzeOptions.from_dict(cfg["options"])
    else:
        if not args.input:
            raise ConfigError("analyze needs --input or --replay")
        path = args.input
        options = AnalyzeOptions(
            seed=_seed(args),
            surrogate_seed=args.surrogate_seed,
            replications=args.reps,
            alpha=args.alpha,
            tail=args.tail,
            knot=args.knot,
            grid_min=args.grid_min,
            grid_max=args.grid_max,
            grid_step=args.grid_step,
        )
    store = CriticalValuesStore(args.store) if args.store else None
    report = analyze_path(path, options, store, args.workers)
    _emit(render_report(report) if args.format == "table" else dumps(report), args.output)
    return 0


def cmd_describe(args) -> int:
    r = _returns_from(args.input)
    seed = _seed(args)
    table = multiscale_describe(r, surrogate_seed=seed)
    if args.format == "csv":
        write_stats_csv(table, sys.stdout)
    else:
        out = {
            "input": args.input,
            "surrogate_seed": seed,
            "stats": {k: {s: st.to_dict() for s, st in v.items()} for k, v in table.items()},
        }
        sys.stdout.write(dumps(out))
    return 0


def cmd_simulate(args) -> int:
    spec = ArfimaSpec(_ar_coeffs(args.ar), args.d, args.sd)
    x = simulate(spec, SimConfig(args.T, _seed(args), args.burn_in))
    if args.output and args.output != "-":
        with open(args.output, "w") as fh:
            write_values_csv(x.values, fh)
    else:
        write_values_csv(x.values, sys.stdout)
    return 0


def cmd_rra(args) -> int:
    r = _returns_from(args.input)
    out = {"input": args.input, "prefilter": None}
    if args.prefilter:
        fit = fit_sparse_ar(r, select_lags(correlogram(r)))
        out["prefilter"] = fit.to_dict()
        r = fit.residuals
    grid = build_scale_grid(args.grid_min, args.grid_max, args.grid_step)
    res = estimate_hurst(r, grid) if args.no_split else estimate_hurst_split(r, grid, args.knot)
    out["rra"] = res.to_dict()
    out["config"] = {
        "prefilter": bool(args.prefilter),
        "split": not args.no_split,
        "knot": args.knot,
        "grid_min": args.grid_min,
        "grid_max": args.grid_max,
        "grid_step": args.grid_step,
    }
    _emit(dumps(out), args.output)
    return 0


def cmd_prefilter(args) -> int:
    r = _returns_from(args.input)
    c = correlogram(r, args.max_lag)
    lags = args.lags if args.lags is not None else select_lags(c)
    fit = fit_sparse_ar(r, lags)
    if args.residuals:
        with open(args.residuals, "w") as fh:
            write_values_csv(fit.residuals.values, fh)
    _emit(dumps({"input": args.input, "correlogram": c.to_dict(), "fit": fit.to_dict()}), args.output)
    return 0


def cmd_shuffle(args) -> int:
    r = _returns_from(args.input)
    s = shuffle_surrogate(r, _seed(args))
    if args.output and args.output != "-":
        with open(args.output, "w") as fh:
            write_values_csv(s.values, fh)
    else:
        write_values_csv(s.values, sys.stdout)
    return 0


def cmd_critical_values(args) -> int:
    cfg = McConfig(
        T=args.T,
        replications=args.reps,
        master_seed=_seed(args),
        estimator_variant=args.variant if args.variant != "all" else "H",
        prefilter_mode=args.prefilter_mode,
        grid_min=args.grid_min,
        grid_max=args.grid_max,
        grid_step=args.grid_step,
        knot=args.knot,
    )
    store = CriticalValuesStore(args.store) if args.store else None
    if args.variant == "all":
        panel = fetch_panel(cfg, store, args.workers)
        out = {v: cv.to_dict() for v, cv in panel.items()}
        if args.dump_replicates:
            raise ConfigError("--dump-replicates needs a single --variant")
    else:
        cv = store.get(cfg) if store else None
        if cv is None or args.dump_replicates:
            cv = null_critical_values(cfg, args.workers)
            if store:
                store.put(cv)
        out = cv.to_dict()
        if args.dump_replicates:
            with open(args.dump_replicates, "w") as fh:
                fh.write("replicate,estimate\n")
                for i, v in enumerate(cv.estimates):
                    fh.write(f"{i},{float(v)!r}\n")
    _emit(dumps(out), args.output)
    return 0


def cmd_power(args) -> int:
    grid = build_scale_grid(args.grid_min, args.grid_max, args.grid_step)
    res = power_analysis(_floats(args.H), _ints(args.T), args.alpha, args.reps, _seed(args), args.tail,
                         args.workers, grid)
    out = res.to_dict()
    out["config"] = {"H": _floats(args.H), "T": _ints(args.T), "seed": _seed(args), **_grid_config(args)}
    _emit(dumps(out), args.output)
    return 0


def cmd_bias_study(args) -> int:
    specs = [ArfimaSpec({args.ar_lag: c} if c else {}, d) for d, c in itertools.product(_floats(args.d), _floats(args.coef))]
    grid = build_scale_grid(args.grid_min, args.grid_max, args.grid_step)
    rows = prefilter_bias_study(specs, args.T, args.reps, _seed(args), args.filter, grid, args.workers)
    out = {
        "config": {"T": args.T, "replications": args.reps, "seed": _seed(args), "filter": args.filter,
                   "ar_lag": args.ar_lag, **_grid_config(args)},
        "rows": [r.to_dict() for r in rows],
    }
    if args.format == "table":
        lines = [f"{'d':>6}{'coef':>8}  {'mean':>8}{'sd':>8}{'min':>8}{'max':>8}  filtered"]
        for r in rows:
            u, f = r.unfiltered, r.filtered
            coef = r.spec.ar_coeffs.get(args.ar_lag, 0.0)
            lines.append(f"{r.spec.d:>6.2f}{coef:>8.4f}  {u.mean:>8.4f}{u.sd:>8.4f}{u.min:>8.4f}{u.max:>8.4f}"
                         f"  {f.mean:>8.4f}{f.sd:>8.4f}{f.min:>8.4f}{f.max:>8.4f}")
        _emit("\n".join(lines) + "\n", args.output)
    else:
        _emit(dumps(out), args.output)
    return 0


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="longmem", description="Long-range dependence tests via rescaled range analysis.")
    parser.add_argument("--version", action="version", version=f"longmem {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", help="full pipeline on a CSV of prices or returns")
    p.add_argument("--input", help="CSV with 'date,price' or 'value' columns ('-' for stdin)")
    p.add_argument("--replay", metavar="REPORT", help="re-run the analysis recorded in a JSON report")
    _mc_args(p)
    p.add_argument("--surrogate-seed", type=int, default=None, help="shuffle seed (default: --seed)")
    p.add_argument("--alpha", type=float, default=0.05, choices=[0.01, 0.05, 0.10])
    p.add_argument("--tail", default="two_sided", choices=["two_sided", "upper"])
    _grid_args(p)
    p.add_argument("--store", help="directory caching critical values")
    p.add_argument("--format", default="json", choices=["json", "table"])
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("describe", help="moments at daily/weekly/monthly/quarterly scales")
    p.add_argument("--input", required=True)
    p.add_argument("--seed", type=int, default=None, help="shuffled-surrogate seed")
    p.add_argument("--format", default="json", choices=["json", "csv"])
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("simulate", help="simulate an ARFIMA(p,d,0) series as CSV")
    p.add_argument("--d", type=float, default=0.0)
    p.add_argument("--ar", help="sparse AR terms, e.g. '1:0.2,4:0.0782'")
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--burn-in", type=int, default=None)
    p.add_argument("--sd", type=float, default=1.0, help="innovation standard deviation")
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("rra", help="rescaled range analysis of one series")
    p.add_argument("--input", required=True)
    p.add_argument("--prefilter", action="store_true", help="analyse PACF-selected AR residuals")
    p.add_argument("--no-split", action="store_true", help="skip the H_S / H_L fit")
    _grid_args(p)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_rra)

    p = sub.add_parser("prefilter", help="PACF lag selection and sparse AR fit")
    p.add_argument("--input", required=True)
    p.add_argument("--max-lag", type=int, default=10)
    p.add_argument("--lags", type=_ints, default=None, help="fixed lags instead of PACF selection")
    p.add_argument("--residuals", help="write residuals to this CSV")
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_prefilter)

    p = sub.add_parser("shuffle", help="shuffled surrogate of a return series")
    p.add_argument("--input", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_shuffle)

    p = sub.add_parser("critical-values", help="Gaussian-null Monte Carlo critical values")
    p.add_argument("--T", type=int, required=True)
    _mc_args(p)
    p.add_argument("--variant", default="H", choices=list(VARIANTS) + ["all"])
    p.add_argument("--prefilter-mode", default="none", help="none, ar1, pacf_sparse or fixed_lags:4,8")
    _grid_args(p)
    p.add_argument("--store", help="directory caching critical values")
    p.add_argument("--dump-replicates", metavar="CSV", help="write per-replicate estimates")
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_critical_values)

    p = sub.add_parser("power", help="power of the H = 0.5 test against ARFIMA(0,d,0)")
    p.add_argument("--H", required=True, help="comma-separated alternative H values")
    p.add_argument("--T", required=True, help="comma-separated series lengths")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--tail", default="upper", choices=["upper", "two_sided"])
    _grid_args(p, knot=False)
    _mc_args(p, reps=1000)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_power)

    p = sub.add_parser("bias-study", help="H estimates with and without AR pre-filtering")
    p.add_argument("--d", default="0,0.04,0.08,0.12")
    p.add_argument("--coef", default="0,0.1,0.2", help="AR coefficients at --ar-lag")
    p.add_argument("--ar-lag", type=int, default=1)
    p.add_argument("--filter", default="ar1", help="pre-filter for the filtered arm")
    p.add_argument("--T", type=int, default=1000)
    _grid_args(p, knot=False)
    _mc_args(p, reps=1000)
    p.add_argument("--format", default="json", choices=["json", "table"])
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_bias_study)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except LongMemError as exc:
        print(f"longmem: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"longmem: error: {exc}", file=sys.stderr)
        return InputError.exit_code


if __name__ == "__main__":
    sys.exit(main())
