"""Rescaled Range Analysis.

For a scale ``n`` the series is cut into ``M = N // n`` contiguous
subperiods twice: once from the first observation and once from
observation ``L + 1`` with ``L = N - nM``, so that no observation is
wasted. Each subperiod contributes ``R_m / S_m``; ``(R/S)_n`` is the mean
over all ``2M`` of them. The Hurst exponent is the OLS slope of
``ln (R/S)_n`` on ``ln n``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DegenerateDataError
from .series import SeriesLike, as_array

DEFAULT_KNOT = 40


class GridTruncationWarning(UserWarning):
    """Scales longer than half the series were dropped from the grid."""


@dataclass(frozen=True)
class ScaleGrid:
    scales: tuple[int, ...]

    def __post_init__(self):
        scales = tuple(int(n) for n in self.scales)
        if not scales:
            raise ConfigError("empty scale grid")
        if any(b <= a for a, b in zip(scales, scales[1:])):
            raise ConfigError("grid scales must be strictly increasing")
        if scales[0] < 4:
            raise ConfigError("grid scales must be >= 4")
        object.__setattr__(self, "scales", scales)

    def __len__(self):
        return len(self.scales)

    def __iter__(self):
        return iter(self.scales)

    def usable(self, N: int, warn: bool = True) -> "ScaleGrid":
        """The sub-grid with ``n <= N / 2``."""
        keep = tuple(n for n in self.scales if 2 * n <= N)
        if len(keep) < len(self.scales) and warn:
            warnings.warn(
                f"dropped {len(self.scales) - len(keep)} grid scales above N/2 = {N / 2:g}",
                GridTruncationWarning,
                stacklevel=3,
            )
        if len(keep) < 3:
            raise ConfigError(f"only {len(keep)} grid scales fit a series of length {N}; need >= 3")
        return ScaleGrid(keep)


def build_scale_grid(ln_min: float = 1.6, ln_max: float = 5.7, step: float = 0.1) -> ScaleGrid:
    """Scales ``round(exp(v))`` for ``v = ln_min, ln_min + step, ..., ln_max``.

    Rounding is half away from zero; repeated integers are kept once. The
    defaults give 40 scales from 5 to 299.
    """
    if not step > 0 or not ln_min < ln_max:
        raise ConfigError("need ln_min < ln_max and step > 0")
    count = int(math.floor((ln_max - ln_min) / step + 1e-9)) + 1
    scales: list[int] = []
    for k in range(count):
        v = round(ln_min + k * step, 12)
        n = int(Decimal(math.exp(v)).quantize(Decimal(1), rounding=ROUND_HALF_UP))
        if not scales or n != scales[-1]:
            scales.append(n)
    return ScaleGrid(tuple(scales))


DEFAULT_GRID = build_scale_grid()


@dataclass(frozen=True)
class RsPoint:
    n: int
    rs: float
    num_subperiods: int


@dataclass(frozen=True)
class RraResult:
    """Fitted exponents and the ``(R/S)_n`` points they came from.

    ``H``/``intercept`` are from the single-line fit. ``H_S``/``H_L`` are the
    slopes below/above ``knot`` of the continuous broken-line fit, whose
    coefficients are ``split_coef = (a, H_S, H_L - H_S)``.
    """

    H: float
    intercept: float
    points: tuple[RsPoint, ...]
    H_S: Optional[float] = None
    H_L: Optional[float] = None
    knot: Optional[int] = None
    split_coef: Optional[tuple[float, float, float]] = field(default=None, repr=False)

    @property
    def grid(self) -> ScaleGrid:
        return ScaleGrid(tuple(p.n for p in self.points))

    def predict_split(self, n: float, segment: str) -> float:
        """``ln (R/S)`` at scale ``n`` from the short or long segment line."""
        if self.split_coef is None:
            raise ConfigError("no split fit available")
        a, hs, dh = self.split_coef
        lk = math.log(self.knot)
        if segment == "short":
            return a + hs * math.log(n)
        return (a - dh * lk) + (hs + dh) * math.log(n)

    def to_dict(self) -> dict:
        return {
            "H": self.H,
            "intercept": self.intercept,
            "H_S": self.H_S,
            "H_L": self.H_L,
            "knot": self.knot,
            "grid": [p.n for p in self.points],
            "points": [
                {"n": p.n, "rs": p.rs, "num_subperiods": p.num_subperiods} for p in self.points
            ],
        }


def _rs_values(z: np.ndarray, n: int) -> np.ndarray:
    """``R_m / S_m`` for the 2M forward and backward subperiods."""
    N = len(z)
    M = N // n
    L = N - n * M
    blocks = np.concatenate([z[: M * n].reshape(M, n), z[L:].reshape(M, n)])
    flat = blocks.max(axis=1) == blocks.min(axis=1)
    if flat.any():
        m = int(np.flatnonzero(flat)[0])
        start = m * n if m < M else L + (m - M) * n
        raise DegenerateDataError(
            f"zero standard deviation in subperiod {m + 1} of {2 * M} at scale n={n} "
            f"(observations {start + 1}..{start + n})"
        )
    dev = blocks - blocks.mean(axis=1, keepdims=True)
    x = np.cumsum(dev, axis=1)
    x[:, -1] = 0.0  # the last cumulative deviation is zero by construction
    R = x.max(axis=1) - x.min(axis=1)
    S = np.sqrt(np.mean(dev * dev, axis=1))
    return R / S


def rs_statistic(z: SeriesLike, n: int) -> RsPoint:
    """Rescaled range ``(R/S)_n`` averaged over forward and backward subperiods.

    Parameters
    ----------
    z : ReturnSeries or array_like
        Returns or AR residuals.
    n : int
        Subperiod length, at least 4 and at most ``len(z)``.

    Raises
    ------
    DegenerateDataError
        If any subperiod is constant (``S_m = 0``).
    """
    x = as_array(z)
    n = int(n)
    if n < 4:
        raise ConfigError(f"scale n must be >= 4, got {n}")
    if len(x) < n:
        raise ConfigError(f"scale n={n} exceeds series length {len(x)}")
    vals = _rs_values(x, n)
    return RsPoint(n, float(vals.mean()), len(vals))


def log_rs_curve(z: np.ndarray, scales: Sequence[int]) -> np.ndarray:
    """``ln (R/S)_n`` for every scale, without validation. Hot path for Monte Carlo."""
    return np.log([_rs_values(z, n).mean() for n in scales])


def ols_slope(ln_n: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Intercept and slope of the simple regression of ``y`` on ``ln_n``."""
    xm = ln_n.mean()
    dx = ln_n - xm
    slope = float(dx @ (y - y.mean()) / (dx @ dx))
    return float(y.mean() - slope * xm), slope


def split_design(ln_n: np.ndarray, knot: int) -> np.ndarray:
    return np.column_stack([np.ones_like(ln_n), ln_n, np.maximum(0.0, ln_n - math.log(knot))])


def split_fit(ln_n: np.ndarray, y: np.ndarray, knot: int) -> np.ndarray:
    """Coefficients ``(a, H_S, H_L - H_S)`` of the one-knot linear spline."""
    coef, *_ = np.linalg.lstsq(split_design(ln_n, knot), y, rcond=None)
    return coef


def check_split_grid(scales: Sequence[int], knot: int) -> None:
    if knot not in scales:
        raise ConfigError(f"knot n={knot} is not a grid scale")
    below = sum(1 for n in scales if n <= knot)
    above = sum(1 for n in scales if n >= knot)
    if below < 3 or above < 3:
        raise ConfigError(
            f"split fit needs >= 3 scales on each side of the knot (have {below} and {above})"
        )


def _points(x: np.ndarray, grid: ScaleGrid) -> tuple[RsPoint, ...]:
    return tuple(rs_statistic(x, n) for n in grid)


def estimate_hurst(z: SeriesLike, grid: ScaleGrid = DEFAULT_GRID) -> RraResult:
    """Single-slope Hurst exponent over ``grid`` (scales above N/2 dropped)."""
    x = as_array(z)
    g = grid.usable(len(x))
    pts = _points(x, g)
    ln_n = np.log([p.n for p in pts])
    a, h = ols_slope(ln_n, np.log([p.rs for p in pts]))
    return RraResult(H=h, intercept=a, points=pts)


def estimate_hurst_split(
    z: SeriesLike, grid: ScaleGrid = DEFAULT_GRID, knot: int = DEFAULT_KNOT
) -> RraResult:
    """Both the single-slope fit and the continuous broken-line fit with one
    knot at ``ln(knot)``; ``H_S`` and ``H_L`` are its two slopes."""
    x = as_array(z)
    g = grid.usable(len(x))
    check_split_grid(g.scales, knot)
    pts = _points(x, g)
    ln_n = np.log([p.n for p in pts])
    y = np.log([p.rs for p in pts])
    a, h = ols_slope(ln_n, y)
    coef = split_fit(ln_n, y, knot)
    return RraResult(
        H=h,
        intercept=a,
        points=pts,
        H_S=float(coef[1]),
        H_L=float(coef[1] + coef[2]),
        knot=int(knot),
        split_coef=tuple(float(c) for c in coef),
    )


def variance_scaling_hurst(z: SeriesLike, grid: ScaleGrid = DEFAULT_GRID) -> float:
    """Hurst exponent from the growth of aggregated-return variance.

    Returns are summed over non-overlapping blocks of each length ``n`` and
    the variance of the block sums (divisor = number of blocks) is regressed
    on ``n`` in logs; under self-affinity the slope is ``2H``.
    """
    x = as_array(z)
    N = len(x)
    if N < 2 * max(grid.scales):
        raise ConfigError(f"series of length {N} is shorter than twice the largest scale")
    log_var = []
    for n in grid:
        k = N // n
        sums = x[: k * n].reshape(k, n).sum(axis=1)
        var = float(np.mean((sums - sums.mean()) ** 2))
        if not var > 0:
            raise DegenerateDataError(f"zero variance of aggregated returns at scale n={n}")
        log_var.append(math.log(var))
    _, slope = ols_slope(np.log(np.asarray(grid.scales, dtype=float)), np.asarray(log_var))
    return slope / 2.0
