"""Price and return series: ingestion, log returns, time-scale aggregation,
moment statistics and shuffled surrogates."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import DegenerateDataError, InputError

#: Trading-day block sizes used when no calendar dates are available.
FALLBACK_BLOCKS = {"weekly": 5, "monthly": 21, "quarterly": 65}

SCALES = ("daily", "weekly", "monthly", "quarterly")


def _as_dates(dates) -> Optional[np.ndarray]:
    if dates is None:
        return None
    try:
        return np.asarray(dates, dtype="datetime64[D]")
    except (ValueError, TypeError) as exc:
        raise InputError(f"unparseable dates: {exc}") from exc


@dataclass(frozen=True)
class PriceSeries:
    """Strictly positive price levels with optional, strictly increasing dates."""

    values: np.ndarray
    dates: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or len(values) < 2:
            raise InputError("a price series needs at least 2 observations")
        bad = np.flatnonzero(~(values > 0))  # catches NaN too
        if bad.size:
            i = int(bad[0])
            raise InputError(f"price at index {i} is not strictly positive: {values[i]!r}")
        dates = _as_dates(self.dates)
        if dates is not None:
            if len(dates) != len(values):
                raise InputError("dates and prices differ in length")
            if np.any(np.diff(dates) <= np.timedelta64(0, "D")):
                i = int(np.flatnonzero(np.diff(dates) <= np.timedelta64(0, "D"))[0]) + 1
                raise InputError(f"dates are not strictly increasing at index {i}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dates", dates)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class ReturnSeries:
    """Log returns, optionally dated, labelled with the time scale they cover."""

    values: np.ndarray
    dates: Optional[np.ndarray] = None
    scale_label: str = "daily"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or len(values) < 1:
            raise InputError("a return series needs at least 1 observation")
        if not np.all(np.isfinite(values)):
            i = int(np.flatnonzero(~np.isfinite(values))[0])
            raise InputError(f"non-finite return at index {i}")
        dates = _as_dates(self.dates)
        if dates is not None and len(dates) != len(values):
            raise InputError("dates and returns differ in length")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dates", dates)

    def __len__(self):
        return len(self.values)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


SeriesLike = Union[ReturnSeries, Sequence[float], np.ndarray]


def as_array(z: SeriesLike) -> np.ndarray:
    """Return the float values of a ReturnSeries or any 1-d array-like."""
    if isinstance(z, ReturnSeries):
        return z.values
    arr = np.asarray(z, dtype=float)
    if arr.ndim != 1:
        raise InputError("expected a one-dimensional series")
    return arr


def log_returns(p: PriceSeries) -> ReturnSeries:
    """Daily log returns ``ln(p[t+1] / p[t])``, dated with the later price."""
    if not isinstance(p, PriceSeries):
        p = PriceSeries(np.asarray(p, dtype=float))
    values = np.diff(np.log(p.values))
    dates = None if p.dates is None else p.dates[1:]
    return ReturnSeries(values, dates, "daily")


# --------------------------------------------------------------------------
# aggregation


@dataclass(frozen=True)
class AggregationPlan:
    """How daily returns are grouped into coarser blocks.

    ``mode`` is one of ``calendar_week``, ``calendar_month``,
    ``calendar_quarter`` or ``fixed_block``; ``block`` is the block length
    for ``fixed_block``.

    Calendar periods are anchored on the first observation: weeks are
    consecutive 7-day windows starting at the first date, months are calendar
    months, and quarters are runs of three calendar months starting with the
    month of the first date. Trailing partial calendar periods are kept;
    trailing partial fixed blocks are dropped.
    """

    mode: str
    block: Optional[int] = None

    _MODES = ("calendar_week", "calendar_month", "calendar_quarter", "fixed_block")

    def __post_init__(self):
        if self.mode not in self._MODES:
            raise InputError(f"unknown aggregation mode {self.mode!r}")
        if self.mode == "fixed_block":
            if self.block is None or int(self.block) < 1:
                raise InputError("fixed_block aggregation needs a block length >= 1")
            object.__setattr__(self, "block", int(self.block))

    @classmethod
    def fixed(cls, k: int) -> "AggregationPlan":
        return cls("fixed_block", k)

    @classmethod
    def for_scale(cls, scale: str, dated: bool) -> Optional["AggregationPlan"]:
        """Plan for a named scale; ``None`` for ``daily``."""
        if scale == "daily":
            return None
        if scale not in FALLBACK_BLOCKS:
            raise InputError(f"unknown scale {scale!r}")
        if dated:
            return cls("calendar_" + {"weekly": "week", "monthly": "month", "quarterly": "quarter"}[scale])
        return cls.fixed(FALLBACK_BLOCKS[scale])

    @property
    def label(self) -> str:
        if self.mode == "fixed_block":
            return f"blocks({self.block})"
        return {"calendar_week": "weekly", "calendar_month": "monthly", "calendar_quarter": "quarterly"}[self.mode]

    def block_boundaries(self, r: ReturnSeries) -> list[tuple[int, int]]:
        """Half-open ``(start, stop)`` index ranges of each block."""
        n = len(r)
        if self.mode == "fixed_block":
            k = self.block
            return [(i, i + k) for i in range(0, n - k + 1, k)]
        if r.dates is None:
            raise InputError(f"{self.mode} aggregation requires dates")
        period = _period_index(r.dates, self.mode)
        cuts = np.flatnonzero(np.diff(period)) + 1
        edges = np.concatenate([[0], cuts, [n]])
        return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def _period_index(dates: np.ndarray, mode: str) -> np.ndarray:
    if mode == "calendar_week":
        days = (dates - dates[0]).astype(int)
        return days // 7
    months = dates.astype("datetime64[M]").astype(int)
    if mode == "calendar_month":
        return months
    return (months - months[0]) // 3


def aggregate(
    r: ReturnSeries,
    plan: AggregationPlan,
    boundaries: Optional[Sequence[tuple[int, int]]] = None,
) -> ReturnSeries:
    """Sum log returns within each block of ``plan``.

    ``boundaries`` overrides the blocks derived from ``plan`` (used to
    re-aggregate a surrogate with the original block structure).
    """
    if boundaries is None:
        boundaries = plan.block_boundaries(r)
    if not boundaries:
        raise InputError(f"series of length {len(r)} is too short for {plan.label} aggregation")
    values = np.array([r.values[a:b].sum() for a, b in boundaries])
    stops = np.array([b for _, b in boundaries])
    dates = None if r.dates is None else r.dates[stops - 1]
    return ReturnSeries(values, dates, plan.label)


# --------------------------------------------------------------------------
# descriptive statistics


@dataclass(frozen=True)
class DescriptiveStats:
    """Four-moment summary.

    ``std_dev`` uses the N-1 divisor. ``skewness`` (m3/m2^1.5) and
    ``kurtosis`` (m4/m2^2, 3 for a Normal) use population central moments
    and raise :class:`DegenerateDataError` when the variance is zero.
    """

    n_obs: int
    mean: float
    std_dev: float
    m2: float = field(repr=False)
    m3: float = field(repr=False)
    m4: float = field(repr=False)

    @property
    def defined(self) -> bool:
        return self.m2 > 0

    @property
    def skewness(self) -> float:
        if not self.defined:
            raise DegenerateDataError("skewness undefined: zero variance")
        return self.m3 / self.m2**1.5

    @property
    def kurtosis(self) -> float:
        if not self.defined:
            raise DegenerateDataError("kurtosis undefined: zero variance")
        return self.m4 / self.m2**2

    def to_dict(self) -> dict:
        return {
            "n_obs": self.n_obs,
            "mean": self.mean,
            "std_dev": self.std_dev,
            "skewness": self.skewness if self.defined else None,
            "kurtosis": self.kurtosis if self.defined else None,
        }


def describe(r: SeriesLike) -> DescriptiveStats:
    x = as_array(r)
    n = len(x)
    if n < 2:
        raise InputError("describe needs at least 2 observations")
    mean = float(x.mean())
    if np.all(x == x[0]):
        return DescriptiveStats(n, float(x[0]), 0.0, 0.0, 0.0, 0.0)
    dev = x - mean
    m2 = float(np.mean(dev**2))
    m3 = float(np.mean(dev**3))
    m4 = float(np.mean(dev**4))
    return DescriptiveStats(n, mean, math.sqrt(m2 * n / (n - 1)), m2, m3, m4)


def shuffle_surrogate(r: ReturnSeries, seed: int) -> ReturnSeries:
    """Randomly permute the values; dates stay where they were."""
    rng = np.random.default_rng(seed)
    values = rng.permutation(as_array(r))
    if isinstance(r, ReturnSeries):
        return ReturnSeries(values, r.dates, r.scale_label)
    return ReturnSeries(values)


def multiscale_describe(
    r: ReturnSeries, scales: Iterable[str] = SCALES, surrogate_seed: Optional[int] = None
) -> dict[str, dict[str, DescriptiveStats]]:
    """Describe ``r`` at each named scale, plus its shuffled surrogate when a
    seed is given. Surrogates are aggregated over the original blocks."""
    out: dict[str, dict[str, DescriptiveStats]] = {"raw": {}}
    shuffled = None
    if surrogate_seed is not None:
        shuffled = shuffle_surrogate(r, surrogate_seed)
        out["shuffled"] = {}
    for scale in scales:
        plan = AggregationPlan.for_scale(scale, r.dates is not None)
        if plan is None:
            out["raw"][scale] = describe(r)
            if shuffled is not None:
                out["shuffled"][scale] = describe(shuffled)
            continue
        bounds = plan.block_boundaries(r)
        out["raw"][scale] = describe(aggregate(r, plan, bounds))
        if shuffled is not None:
            out["shuffled"][scale] = describe(aggregate(shuffled, plan, bounds))
    return out


# --------------------------------------------------------------------------
# CSV


def _open_text(path):
    if path == "-":
        import sys

        return io.StringIO(sys.stdin.read())
    try:
        return open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def read_csv(path) -> Union[PriceSeries, ReturnSeries]:
    """Read either a ``value`` column of returns or ``date,price`` columns.

    ``path`` may be ``"-"`` for stdin. Missing or malformed cells are
    rejected with their 1-based line number.
    """
    with _open_text(path) as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        if header == ["value"]:
            kind = "returns"
        elif header == ["date", "price"]:
            kind = "prices"
        else:
            raise InputError(f"{path}:1: header must be 'value' or 'date,price', got {','.join(header)!r}")
        values, dates = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise InputError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            cell = row[-1].strip()
            if not cell:
                raise InputError(f"{path}:{lineno}: missing value")
            try:
                v = float(cell)
            except ValueError:
                raise InputError(f"{path}:{lineno}: not a number: {cell!r}") from None
            if not math.isfinite(v):
                raise InputError(f"{path}:{lineno}: non-finite value {cell!r}")
            if kind == "prices":
                if v <= 0:
                    raise InputError(f"{path}:{lineno}: price must be strictly positive, got {cell}")
                try:
                    dates.append(np.datetime64(row[0].strip(), "D"))
                except ValueError:
                    raise InputError(f"{path}:{lineno}: bad ISO-8601 date {row[0]!r}") from None
            values.append(v)
    if kind == "returns":
        if not values:
            raise InputError(f"{path}: no data rows")
        return ReturnSeries(np.array(values))
    return PriceSeries(np.array(values), np.array(dates, dtype="datetime64[D]"))


def write_values_csv(values: Iterable[float], fh) -> None:
    """Write a ``value`` column; floats use repr so they round-trip exactly."""
    fh.write("value\n")
    for v in values:
        fh.write(f"{float(v)!r}\n")


def write_stats_csv(table: dict[str, dict[str, DescriptiveStats]], fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["series", "scale", "n_obs", "mean", "std_dev", "skewness", "kurtosis"])
    for kind, per_scale in table.items():
        for scale, st in per_scale.items():
            d = st.to_dict()
            writer.writerow(
                [kind, scale, d["n_obs"]]
                + ["" if d[k] is None else repr(d[k]) for k in ("mean", "std_dev", "skewness", "kurtosis")]
            )
