"""The end-to-end analysis pipeline and its report."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Any, Mapping, Optional, Union

from . import __version__
from .errors import ConfigError, InputError, LongMemError, PipelineError
from .montecarlo import SIGNIFICANCE_LEVELS, TAILS, VARIANTS, McConfig, hypothesis_test
from .prefilter import correlogram, fit_sparse_ar, select_lags
from .rra import build_scale_grid, estimate_hurst_split
from .series import (
    SCALES,
    PriceSeries,
    ReturnSeries,
    SeriesLike,
    log_returns,
    multiscale_describe,
    read_csv,
)
from .store import CriticalValuesStore, config_key, fetch_panel


@dataclass(frozen=True)
class AnalyzeOptions:
    """Every setting that influences an analysis report."""

    seed: int = 0
    surrogate_seed: Optional[int] = None
    replications: int = 5000
    alpha: float = 0.05
    tail: str = "two_sided"
    knot: int = 40
    grid_min: float = 1.6
    grid_max: float = 5.7
    grid_step: float = 0.1
    max_lag: int = 10

    def __post_init__(self):
        if self.tail not in TAILS:
            raise ConfigError(f"tail must be one of {TAILS}")
        if not any(abs(self.alpha - a) < 1e-12 for a in SIGNIFICANCE_LEVELS):
            raise ConfigError(f"alpha must be one of {SIGNIFICANCE_LEVELS}")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    @property
    def effective_surrogate_seed(self) -> int:
        return self.seed if self.surrogate_seed is None else self.surrogate_seed

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping) -> "AnalyzeOptions":
        return cls(**data)


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except LongMemError as exc:
        if isinstance(exc, PipelineError):
            raise
        raise PipelineError(name, exc) from exc


def _describe_table(r: ReturnSeries, seed: int) -> dict:
    out: dict[str, dict[str, Any]] = {"raw": {}, "shuffled": {}}
    for scale in SCALES:
        try:
            table = multiscale_describe(r, [scale], surrogate_seed=seed)
        except InputError:
            # too few blocks at this scale for a sample standard deviation
            out["raw"][scale] = out["shuffled"][scale] = None
            continue
        out["raw"][scale] = table["raw"][scale].to_dict()
        out["shuffled"][scale] = table["shuffled"][scale].to_dict()
    return out


def analyze(
    data: Union[PriceSeries, ReturnSeries, SeriesLike],
    options: AnalyzeOptions = AnalyzeOptions(),
    store: Optional[CriticalValuesStore] = None,
    workers: int = 1,
    source: str = "<memory>",
) -> dict:
    """Run the full pipeline and return the report as a JSON-ready dict.

    Steps: log returns (for prices), four-moment statistics at the daily,
    weekly, monthly and quarterly scales for the series and its shuffled
    surrogate, PACF-selected sparse AR pre-filtering, R/S analysis of both
    the raw and filtered series, and tests of H, H_S and H_L against
    Gaussian-null critical values simulated at the matching series length.
    """
    opts = options
    if isinstance(data, PriceSeries):
        returns = _stage("log_returns", log_returns, data)
        kind, n_input = "prices", len(data)
    else:
        returns = data if isinstance(data, ReturnSeries) else ReturnSeries(data)
        kind, n_input = "returns", len(returns)

    dates = returns.dates
    report: dict[str, Any] = {
        "tool": {"name": "longmem", "version": __version__},
        "config": {"input": source, "options": opts.to_dict()},
        "input": {
            "path": source,
            "kind": kind,
            "n_input_rows": n_input,
            "n_returns": len(returns),
            "first_date": None if dates is None else str(dates[0]),
            "last_date": None if dates is None else str(dates[-1]),
            "aggregation": "calendar" if dates is not None else "fixed_blocks(5,21,65)",
        },
    }

    report["descriptive"] = _stage("describe", _describe_table, returns, opts.effective_surrogate_seed)

    corr = _stage("correlogram", correlogram, returns, opts.max_lag)
    lags = select_lags(corr)
    fit = _stage("prefilter", fit_sparse_ar, returns, lags)
    report["prefilter"] = {"correlogram": corr.to_dict(), "fit": fit.to_dict()}

    grid = build_scale_grid(opts.grid_min, opts.grid_max, opts.grid_step)
    arms = {"unfiltered": returns, "filtered": fit.residuals}
    report["rra"] = {}
    report["critical_values"] = {}
    report["tests"] = {}
    for arm, series in arms.items():
        res = _stage(f"rra_{arm}", estimate_hurst_split, series, grid, opts.knot)
        report["rra"][arm] = res.to_dict()

        cfg = McConfig(
            T=len(series),
            replications=opts.replications,
            master_seed=opts.seed,
            estimator_variant="H",
            prefilter_mode="none",
            grid_min=opts.grid_min,
            grid_max=opts.grid_max,
            grid_step=opts.grid_step,
            knot=opts.knot,
        )
        panel = _stage("critical_values", fetch_panel, cfg, store, workers)
        report["critical_values"][arm] = {
            v: {**cv.to_dict(), "store_key": config_key(cv.config)} for v, cv in panel.items()
        }
        estimates = {"H": res.H, "H_S": res.H_S, "H_L": res.H_L}
        report["tests"][arm] = {
            v: _stage("hypothesis_test", hypothesis_test, estimates[v], panel[v], opts.alpha, opts.tail,
                      len(series)).to_dict()
            for v in VARIANTS
        }
    return report


def analyze_path(path: str, options: AnalyzeOptions = AnalyzeOptions(), store=None, workers: int = 1) -> dict:
    data = _stage("ingest", read_csv, path)
    return analyze(data, options, store, workers, source=str(path))


def dumps(report: Mapping) -> str:
    """Canonical JSON: identical reports serialise to identical bytes."""
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"


# --------------------------------------------------------------------------
# plain-text tables


def _fmt(v, width=9, digits=4) -> str:
    return f"{'n/a':>{width}}" if v is None else f"{v:>{width}.{digits}f}"


def render_descriptive(desc: Mapping) -> str:
    lines = []
    for kind in ("raw", "shuffled"):
        title = "Log returns" if kind == "raw" else "Shuffled surrogate"
        lines.append(f"{title}")
        lines.append(f"{'scale':<10}{'N':>7}{'mean':>9}{'std':>9}{'skew':>9}{'kurt':>9}")
        for scale in SCALES:
            st = desc[kind].get(scale)
            if st is None:
                lines.append(f"{scale:<10}{'-':>7}")
                continue
            lines.append(
                f"{scale:<10}{st['n_obs']:>7}"
                + "".join(_fmt(st[k]) for k in ("mean", "std_dev", "skewness", "kurtosis"))
            )
        lines.append("")
    return "\n".join(lines)


def render_rra(report: Mapping) -> str:
    lines = []
    for arm in ("filtered", "unfiltered"):
        tests = report["tests"][arm]
        cvs = report["critical_values"][arm]
        lines.append(f"R/S analysis ({'with' if arm == 'filtered' else 'without'} pre-filtering)")
        cells = "".join(f"{tests[v]['estimate']:>8.3f}{tests[v]['stars']:<4}" for v in VARIANTS)
        lines.append(f"{'':<10}{'H':>8}{'':4}{'H_S':>8}{'':4}{'H_L':>8}")
        lines.append(f"{'estimate':<10}{cells}")
        lines.append(f"{'MC mean':<10}" + "".join(f"{cvs[v]['mean']:>8.3f}{'':4}" for v in VARIANTS))
        for q in ("0.005", "0.025", "0.050", "0.950", "0.975", "0.995"):
            lines.append(f"{q:<10}" + "".join(f"{cvs[v]['quantiles'][q]:>8.3f}{'':4}" for v in VARIANTS))
        lines.append("")
    fit = report["prefilter"]["fit"]
    lags = ", ".join(map(str, fit["selected_lags"])) or "none"
    lines.append(f"AR pre-filter lags: {lags}")
    lines.append(f"tail: {report['config']['options']['tail']}; *** / ** / * = 0.01 / 0.05 / 0.10")
    return "\n".join(lines) + "\n"


def render_report(report: Mapping) -> str:
    return render_descriptive(report["descriptive"]) + "\n" + render_rra(report)
