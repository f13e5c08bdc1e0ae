"""Short-range dependence removal by a sparse AR model.

Lags whose sample partial autocorrelation lies outside the +/-1.96/sqrt(N)
band are selected, and an AR model with an intercept and *only* those lags
is fitted by OLS. Its residuals replace the returns in the R/S analysis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .errors import ConfigError, DegenerateDataError, InputError
from .series import ReturnSeries, SeriesLike, as_array

MAX_LAG = 10
Z_95 = 1.96


@dataclass(frozen=True)
class CorrelogramResult:
    acf: dict[int, float]
    pacf: dict[int, float]
    n_obs: int

    @property
    def threshold(self) -> float:
        return Z_95 / math.sqrt(self.n_obs)

    def to_dict(self) -> dict:
        return {
            "n_obs": self.n_obs,
            "threshold": self.threshold,
            "acf": {str(k): v for k, v in self.acf.items()},
            "pacf": {str(k): v for k, v in self.pacf.items()},
        }


@dataclass(frozen=True)
class SparseArFit:
    selected_lags: tuple[int, ...]
    coefficients: dict[int, float]
    intercept: float
    residuals: ReturnSeries

    def to_dict(self) -> dict:
        return {
            "selected_lags": list(self.selected_lags),
            "coefficients": {str(k): v for k, v in self.coefficients.items()},
            "intercept": self.intercept,
            "n_residuals": len(self.residuals),
        }


def sample_acf(x: np.ndarray, max_lag: int) -> np.ndarray:
    """Autocorrelations 0..max_lag, all normalised by the total sum of squares."""
    dev = x - x.mean()
    denom = dev @ dev
    if np.ptp(x) == 0 or not denom > 0:
        raise DegenerateDataError("autocorrelation undefined for a zero-variance series")
    return np.array([1.0] + [float(dev[k:] @ dev[:-k]) / denom for k in range(1, max_lag + 1)])


def durbin_levinson(acf: np.ndarray) -> np.ndarray:
    """Partial autocorrelations 1..p from autocorrelations 0..p.

    Returns an array indexed from 0, so ``out[k - 1]`` is ``phi_kk``.
    """
    p = len(acf) - 1
    pacf = np.zeros(p)
    phi = np.zeros(p + 1)
    v = acf[0]
    for k in range(1, p + 1):
        num = acf[k] - phi[1:k] @ acf[k - 1 : 0 : -1]
        phi_kk = num / v
        new = phi.copy()
        new[k] = phi_kk
        new[1:k] = phi[1:k] - phi_kk * phi[k - 1 : 0 : -1]
        phi = new
        v *= 1.0 - phi_kk**2
        pacf[k - 1] = phi_kk
    return pacf


def correlogram(z: SeriesLike, max_lag: int = MAX_LAG) -> CorrelogramResult:
    x = as_array(z)
    if len(x) <= max_lag:
        raise InputError(f"need more than {max_lag} observations for a lag-{max_lag} correlogram")
    acf = sample_acf(x, max_lag)
    pacf = durbin_levinson(acf)
    return CorrelogramResult(
        acf={k: float(acf[k]) for k in range(max_lag + 1)},
        pacf={k: float(pacf[k - 1]) for k in range(1, max_lag + 1)},
        n_obs=len(x),
    )


def select_lags(c: CorrelogramResult) -> tuple[int, ...]:
    """Lags whose |PACF| strictly exceeds 1.96/sqrt(N)."""
    thr = c.threshold
    return tuple(k for k in sorted(c.pacf) if k <= MAX_LAG and abs(c.pacf[k]) > thr)


def fit_sparse_ar(z: SeriesLike, lags: Iterable[int]) -> SparseArFit:
    """OLS of ``z_t`` on an intercept and ``z_{t-k}`` for ``k`` in ``lags`` only.

    With no lags the input is returned unchanged as the residual series
    (no intercept is removed). Residuals start at ``t = max(lags)``.
    """
    lags = tuple(sorted({int(k) for k in lags}))
    if any(k < 1 or k > MAX_LAG for k in lags):
        raise ConfigError(f"AR lags must lie in 1..{MAX_LAG}, got {lags}")
    series = z if isinstance(z, ReturnSeries) else ReturnSeries(as_array(z))
    x = series.values
    N = len(x)
    if N <= MAX_LAG + len(lags) + 2:
        raise InputError(f"series of length {N} is too short for an AR fit")
    if not lags:
        return SparseArFit((), {}, 0.0, series)
    p = lags[-1]
    y = x[p:]
    X = np.column_stack([np.ones(N - p)] + [x[p - k : N - k] for k in lags])
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        raise DegenerateDataError(f"singular AR design for lags {lags} (constant series?)")
    resid = y - X @ coef
    dates = None if series.dates is None else series.dates[p:]
    return SparseArFit(
        selected_lags=lags,
        coefficients={k: float(c) for k, c in zip(lags, coef[1:])},
        intercept=float(coef[0]),
        residuals=ReturnSeries(resid, dates, series.scale_label),
    )


def prefilter(z: SeriesLike, max_lag: int = MAX_LAG, lags: Optional[Iterable[int]] = None) -> SparseArFit:
    """Select PACF-significant lags (unless ``lags`` is given) and fit the AR model."""
    if lags is None:
        lags = select_lags(correlogram(z, max_lag))
    return fit_sparse_ar(z, lags)
