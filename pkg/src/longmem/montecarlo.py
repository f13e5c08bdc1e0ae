"""Seeded Monte Carlo experiments: null critical values, pre-filtering bias
studies, power curves and significance verdicts.

Every replicate draws its own seed from ``(master_seed, stream, index)``
through :class:`numpy.random.SeedSequence`, so results depend only on the
configuration and never on the number of worker processes.
"""

from __future__ import annotations

import logging
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import rra
from .arfima import ArfimaSpec, SimConfig, simulate
from .errors import ConfigError, DegenerateDataError, LongMemError
from .prefilter import fit_sparse_ar, prefilter as pacf_prefilter

log = logging.getLogger(__name__)

VARIANTS = ("H", "H_S", "H_L")
TAILS = ("upper", "two_sided")
SIGNIFICANCE_LEVELS = (0.01, 0.05, 0.10)
STARS = {0.01: "***", 0.05: "**", 0.10: "*"}
#: Quantiles stored with every set of critical values. The six levels
#: published for the null panel plus the ones an upper-tail test needs.
QUANTILES = (0.005, 0.01, 0.025, 0.05, 0.10, 0.90, 0.95, 0.975, 0.99, 0.995)
MAX_FAILURE_RATE = 0.001

STREAM_NULL = 0
STREAM_ALT = 1


def replicate_seed(master_seed: int, index: int, stream: int = STREAM_NULL) -> int:
    """Stable 64-bit seed for replicate ``index`` of ``stream``."""
    if master_seed < 0:
        raise ConfigError("master seed must be non-negative")
    ss = np.random.SeedSequence([int(master_seed), int(stream), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


# --------------------------------------------------------------------------
# prefilter modes


_FIXED = re.compile(r"^fixed_lags[:(]\s*([\d,\s]+)\)?$")


def parse_prefilter_mode(mode: str) -> tuple[str, tuple[int, ...]]:
    """``"none"``, ``"ar1"``, ``"pacf_sparse"`` or ``"fixed_lags:4,8"``."""
    mode = mode.strip()
    if mode in ("none", "ar1", "pacf_sparse"):
        return mode, ((1,) if mode == "ar1" else ())
    m = _FIXED.match(mode)
    if m:
        lags = tuple(sorted({int(s) for s in m.group(1).split(",") if s.strip()}))
        if lags and all(1 <= k <= 10 for k in lags):
            return "fixed_lags", lags
    raise ConfigError(f"unknown prefilter mode {mode!r}")


def canonical_prefilter_mode(mode: str) -> str:
    kind, lags = parse_prefilter_mode(mode)
    return f"fixed_lags:{','.join(map(str, lags))}" if kind == "fixed_lags" else kind


def apply_prefilter(x: np.ndarray, mode: str) -> np.ndarray:
    kind, lags = parse_prefilter_mode(mode)
    if kind == "none":
        return x
    if kind == "pacf_sparse":
        return pacf_prefilter(x).residuals.values
    return fit_sparse_ar(x, lags).residuals.values


# --------------------------------------------------------------------------
# configuration and results


@dataclass(frozen=True)
class McConfig:
    """One Monte Carlo null experiment. Grid and knot are recorded so that
    every stored result can be reproduced from its config alone."""

    T: int
    replications: int = 5000
    master_seed: int = 0
    estimator_variant: str = "H"
    prefilter_mode: str = "none"
    grid_min: float = 1.6
    grid_max: float = 5.7
    grid_step: float = 0.1
    knot: int = rra.DEFAULT_KNOT

    def __post_init__(self):
        if int(self.replications) < 100:
            raise ConfigError("replications must be >= 100")
        if int(self.T) < 64:
            raise ConfigError("T must be >= 64")
        if self.estimator_variant not in VARIANTS:
            raise ConfigError(f"estimator variant must be one of {VARIANTS}")
        if self.master_seed < 0:
            raise ConfigError("master seed must be non-negative")
        object.__setattr__(self, "prefilter_mode", canonical_prefilter_mode(self.prefilter_mode))

    @property
    def grid(self) -> rra.ScaleGrid:
        return rra.build_scale_grid(self.grid_min, self.grid_max, self.grid_step)

    def with_variant(self, variant: str) -> "McConfig":
        return McConfig(**{**asdict(self), "estimator_variant": variant})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping) -> "McConfig":
        return cls(**data)


def _qkey(p: float) -> str:
    return f"{p:.3f}"


@dataclass(frozen=True)
class CriticalValues:
    mean: float
    sd: float
    quantiles: dict[float, float]
    config: McConfig
    n_failed: int = 0
    estimates: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def quantile(self, p: float) -> float:
        for q, v in self.quantiles.items():
            if abs(q - p) < 1e-9:
                return v
        raise ConfigError(f"quantile {p} is not among the stored critical values")

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "sd": self.sd,
            "quantiles": {_qkey(p): v for p, v in sorted(self.quantiles.items())},
            "n_failed": self.n_failed,
            "config": self.config.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "CriticalValues":
        return cls(
            mean=data["mean"],
            sd=data["sd"],
            quantiles={float(k): v for k, v in data["quantiles"].items()},
            config=McConfig.from_dict(data["config"]),
            n_failed=data.get("n_failed", 0),
        )


def summarize(estimates: np.ndarray, config: McConfig, n_failed: int = 0) -> CriticalValues:
    est = np.asarray(estimates, dtype=float)
    est = est[np.isfinite(est)]
    qs = np.quantile(est, QUANTILES)  # linear interpolation between order statistics
    return CriticalValues(
        mean=float(est.mean()),
        sd=float(est.std(ddof=1)),
        quantiles={p: float(v) for p, v in zip(QUANTILES, qs)},
        config=config,
        n_failed=n_failed,
        estimates=np.asarray(estimates, dtype=float),
    )


# --------------------------------------------------------------------------
# replicate execution


@dataclass(frozen=True)
class _Job:
    spec: ArfimaSpec
    T: int
    modes: tuple[str, ...]
    scales: tuple[int, ...]
    knot: Optional[int]


def _estimate(x: np.ndarray, scales: Sequence[int], knot: Optional[int]) -> tuple[float, float, float]:
    if 2 * scales[-1] > len(x):
        scales = [n for n in scales if 2 * n <= len(x)]
    ln_n = np.log(np.asarray(scales, dtype=float))
    y = rra.log_rs_curve(x, scales)
    _, h = rra.ols_slope(ln_n, y)
    if knot is None:
        return h, math.nan, math.nan
    coef = rra.split_fit(ln_n, y, knot)
    return h, float(coef[1]), float(coef[1] + coef[2])


def _run_one(job: _Job, seed: int) -> np.ndarray:
    """Estimates with shape ``(len(modes), 3)``; a failed arm is all NaN."""
    x = simulate(job.spec, SimConfig(job.T, seed)).values
    out = np.full((len(job.modes), 3), np.nan)
    for i, mode in enumerate(job.modes):
        try:
            out[i] = _estimate(apply_prefilter(x, mode), job.scales, job.knot)
        except (DegenerateDataError, np.linalg.LinAlgError) as exc:
            log.debug("replicate with seed %d failed: %s", seed, exc)
    return out


def _run_chunk(args) -> np.ndarray:
    job, seeds = args
    return np.stack([_run_one(job, s) for s in seeds])


def run_replicates(job: _Job, seeds: Sequence[int], workers: int = 1) -> np.ndarray:
    """Run ``job`` once per seed; rows come back in seed order."""
    seeds = list(seeds)
    if workers <= 1 or len(seeds) < 2:
        return _run_chunk((job, seeds))
    n_chunks = min(len(seeds), workers * 4)
    bounds = np.linspace(0, len(seeds), n_chunks + 1).astype(int)
    chunks = [(job, seeds[a:b]) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk, chunks))
    return np.concatenate(parts)


def _check_failures(est: np.ndarray, what: str) -> int:
    failed = int(np.sum(~np.isfinite(est)))
    if failed > MAX_FAILURE_RATE * len(est):
        raise DegenerateDataError(f"{what}: {failed} of {len(est)} replicates failed; aborting")
    return failed


def _usable_scales(cfg_grid: rra.ScaleGrid, T: int, need_split: bool, knot: int) -> tuple[tuple[int, ...], Optional[int]]:
    g = cfg_grid.usable(T, warn=False)
    if need_split:
        rra.check_split_grid(g.scales, knot)
        return g.scales, knot
    try:
        rra.check_split_grid(g.scales, knot)
    except ConfigError:
        return g.scales, None
    return g.scales, knot


def _simulate_estimates(
    spec: ArfimaSpec,
    T: int,
    modes: Sequence[str],
    replications: int,
    master_seed: int,
    grid: rra.ScaleGrid,
    knot: int,
    stream: int = STREAM_NULL,
    need_split: bool = False,
    workers: int = 1,
) -> np.ndarray:
    """Estimates array ``(replications, len(modes), 3)`` for H, H_S, H_L."""
    # prefiltering shortens the series by at most 10 observations
    scales, k = _usable_scales(grid, T - (10 if any(m != "none" for m in modes) else 0), need_split, knot)
    job = _Job(spec, int(T), tuple(canonical_prefilter_mode(m) for m in modes), scales, k)
    seeds = [replicate_seed(master_seed, i, stream) for i in range(replications)]
    return run_replicates(job, seeds, workers)


# --------------------------------------------------------------------------
# experiments


def null_panel(cfg: McConfig, workers: int = 1) -> dict[str, CriticalValues]:
    """Critical values for all three estimator variants from one simulation run."""
    est = _simulate_estimates(
        ArfimaSpec(), cfg.T, [cfg.prefilter_mode], cfg.replications, cfg.master_seed,
        cfg.grid, cfg.knot, need_split=True, workers=workers,
    )[:, 0, :]
    out = {}
    for j, variant in enumerate(VARIANTS):
        failed = _check_failures(est[:, j], f"null panel ({variant})")
        out[variant] = summarize(est[:, j], cfg.with_variant(variant), failed)
    return out


def null_critical_values(cfg: McConfig, workers: int = 1) -> CriticalValues:
    """Null distribution of the chosen estimator under i.i.d. Gaussian returns.

    Each replicate simulates ``cfg.T`` standard Normal returns, applies
    ``cfg.prefilter_mode`` and estimates ``cfg.estimator_variant``. Runs in
    which more than 0.1% of replicates fail are aborted.
    """
    need_split = cfg.estimator_variant != "H"
    est = _simulate_estimates(
        ArfimaSpec(), cfg.T, [cfg.prefilter_mode], cfg.replications, cfg.master_seed,
        cfg.grid, cfg.knot, need_split=need_split, workers=workers,
    )[:, 0, VARIANTS.index(cfg.estimator_variant)]
    failed = _check_failures(est, "null critical values")
    return summarize(est, cfg, failed)


@dataclass(frozen=True)
class ArmSummary:
    mean: float
    sd: float
    min: float
    max: float
    n: int

    @classmethod
    def of(cls, est: np.ndarray) -> "ArmSummary":
        e = est[np.isfinite(est)]
        return cls(float(e.mean()), float(e.std(ddof=1)), float(e.min()), float(e.max()), int(e.size))


@dataclass(frozen=True)
class BiasRow:
    spec: ArfimaSpec
    unfiltered: ArmSummary
    filtered: ArmSummary
    filter_mode: str

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "filter_mode": self.filter_mode,
            "unfiltered": asdict(self.unfiltered),
            "filtered": asdict(self.filtered),
        }


def prefilter_bias_study(
    spec_grid: Iterable[ArfimaSpec],
    T: int = 1000,
    replications: int = 1000,
    seed: int = 0,
    filter_mode: str = "ar1",
    grid: rra.ScaleGrid = rra.DEFAULT_GRID,
    workers: int = 1,
) -> list[BiasRow]:
    """Distribution of the estimated H with and without pre-filtering.

    Both arms are estimated on the same simulated series, and every spec
    reuses the same replicate seeds (common random numbers).
    """
    rows = []
    for spec in spec_grid:
        est = _simulate_estimates(
            spec, T, ["none", filter_mode], replications, seed, grid, rra.DEFAULT_KNOT,
            stream=STREAM_ALT, workers=workers,
        )
        h = est[:, :, 0]
        _check_failures(h[:, 0], "bias study (unfiltered)")
        _check_failures(h[:, 1], "bias study (filtered)")
        rows.append(BiasRow(spec, ArmSummary.of(h[:, 0]), ArmSummary.of(h[:, 1]),
                            canonical_prefilter_mode(filter_mode)))
    return rows


def sparse_lag4_study(
    d_grid: Iterable[float] = (0.0, 0.04, 0.08, 0.12),
    phi4: float = 0.0782,
    T: int = 1000,
    replications: int = 1000,
    seed: int = 0,
    workers: int = 1,
    grid: rra.ScaleGrid = rra.DEFAULT_GRID,
) -> list[BiasRow]:
    """Bias study for ARFIMA(4, d, 0) with a single lag-4 coefficient,
    filtered by an AR model on lag 4 alone."""
    specs = [ArfimaSpec({4: phi4}, d) for d in d_grid]
    return prefilter_bias_study(specs, T, replications, seed, "fixed_lags:4", grid, workers)


@dataclass(frozen=True)
class PowerResult:
    rates: dict[tuple[float, int], float]
    alpha: float
    tail: str
    replications: int
    critical: dict[int, tuple[float, float]]

    def rate(self, H: float, T: int) -> float:
        return self.rates[(round(H, 10), int(T))]

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "tail": self.tail,
            "replications": self.replications,
            "cells": [
                {"H": H, "T": T, "rejection_rate": r} for (H, T), r in sorted(self.rates.items())
            ],
            "critical_values": {
                # an upper-tail test has no lower bound; JSON has no infinity
                str(T): {"lower": None if math.isinf(lo) else lo, "upper": hi}
                for T, (lo, hi) in sorted(self.critical.items())
            },
        }


def power_analysis(
    H_grid: Sequence[float],
    T_grid: Sequence[int],
    alpha: float = 0.05,
    replications: int = 1000,
    seed: int = 0,
    tail: str = "upper",
    workers: int = 1,
    grid: rra.ScaleGrid = rra.DEFAULT_GRID,
) -> PowerResult:
    """Rejection rates of the H = 0.5 test when the truth is ARFIMA(0, H - 0.5, 0).

    The null critical value for each ``T`` comes from the same number of
    Gaussian replications on an independent seed stream.
    """
    if tail not in TAILS:
        raise ConfigError(f"tail must be one of {TAILS}")
    if not 0 < alpha < 1:
        raise ConfigError("alpha must lie in (0, 1)")
    for H in H_grid:
        if not 0.5 < H < 1.0:
            raise ConfigError(f"alternative H must lie in (0.5, 1), got {H}")
    rates, critical = {}, {}
    for T in T_grid:
        null = _simulate_estimates(ArfimaSpec(), T, ["none"], replications, seed, grid,
                                   rra.DEFAULT_KNOT, workers=workers)[:, 0, 0]
        _check_failures(null, f"power null (T={T})")
        null = null[np.isfinite(null)]
        if tail == "upper":
            lo, hi = -math.inf, float(np.quantile(null, 1 - alpha))
        else:
            lo, hi = (float(v) for v in np.quantile(null, [alpha / 2, 1 - alpha / 2]))
        critical[int(T)] = (lo, hi)
        for H in H_grid:
            est = _simulate_estimates(ArfimaSpec({}, H - 0.5), T, ["none"], replications, seed,
                                      grid, rra.DEFAULT_KNOT, stream=STREAM_ALT,
                                      workers=workers)[:, 0, 0]
            _check_failures(est, f"power (H={H}, T={T})")
            est = est[np.isfinite(est)]
            rates[(round(H, 10), int(T))] = float(np.mean((est > hi) | (est < lo)))
    return PowerResult(rates, alpha, tail, replications, critical)


# --------------------------------------------------------------------------
# verdicts


@dataclass(frozen=True)
class TestVerdict:
    estimate: float
    null_mean: float
    alpha: float
    tail: str
    rejected: bool
    significance: str  # "ns" or the smallest level at which H0 is rejected
    warnings: tuple[str, ...] = ()

    __test__ = False  # not a pytest class

    @property
    def stars(self) -> str:
        return "" if self.significance == "ns" else STARS[float(self.significance)]

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "null_mean": self.null_mean,
            "alpha": self.alpha,
            "tail": self.tail,
            "rejected": self.rejected,
            "significance": self.significance,
            "stars": self.stars,
            "warnings": list(self.warnings),
        }


def _rejects(estimate: float, cv: CriticalValues, level: float, tail: str) -> bool:
    if tail == "upper":
        return estimate > cv.quantile(1 - level)
    return estimate < cv.quantile(level / 2) or estimate > cv.quantile(1 - level / 2)


def hypothesis_test(
    estimate: float,
    cv: CriticalValues,
    alpha: float = 0.05,
    tail: str = "two_sided",
    T: Optional[int] = None,
) -> TestVerdict:
    """Compare an estimate with Monte Carlo quantiles (strict inequalities).

    ``T`` is the length of the series the estimate came from; a mismatch with
    the critical values' ``T`` is reported as a warning on the verdict.
    """
    if tail not in TAILS:
        raise ConfigError(f"tail must be one of {TAILS}")
    if not any(abs(alpha - a) < 1e-12 for a in SIGNIFICANCE_LEVELS):
        raise ConfigError(f"alpha must be one of {SIGNIFICANCE_LEVELS}")
    warns = []
    if T is not None and int(T) != cv.config.T:
        warns.append(f"estimate from a series of length {T} tested against critical values for T={cv.config.T}")
    significance = "ns"
    for level in SIGNIFICANCE_LEVELS:
        if _rejects(estimate, cv, level, tail):
            significance = f"{level:.2f}"
            break
    return TestVerdict(
        estimate=float(estimate),
        null_mean=cv.mean,
        alpha=float(alpha),
        tail=tail,
        rejected=_rejects(estimate, cv, alpha, tail),
        significance=significance,
        warnings=tuple(warns),
    )
