"""Time-series value types, interval aggregation and CSV ingestion.

All loads are handled internally as average/instantaneous power in kW.
Smart-meter energy readings (kWh per interval) are converted to average
power when read from disk.
"""

from __future__ import annotations

import csv
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, InputError

DEFAULT_LOSS_FRACTION = 0.02

HIGHRES_HEADER = ("timestamp_s", "transformer_id", "p_kw")
LOWRES_HEADER = HIGHRES_HEADER
CUSTOMER_HEADER = ("timestamp_s", "customer_id", "transformer_id", "kwh")


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise InputError("series values must be one-dimensional")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class _Series:
    transformer_id: str
    t0: float
    dt: float
    values: np.ndarray

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        arr = _frozen_array(self.values)
        if not np.all(np.isfinite(arr)):
            raise InputError(f"{self.transformer_id}: non-finite load values")
        object.__setattr__(self, "values", arr)

    def __len__(self):
        return len(self.values)

    @property
    def timestamps(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.values))

    def __eq__(self, other):
        return (
            type(self) is type(other)
            and self.transformer_id == other.transformer_id
            and self.t0 == other.t0
            and self.dt == other.dt
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


class HighResSeries(_Series):
    """Uniformly sampled instantaneous load (kW) for one transformer.

    Net load may be negative when PV is present.
    """


class LowResSeries(_Series):
    """Interval-average load (kW), e.g. hourly smart-meter aggregates."""


@dataclass(frozen=True)
class CustomerSeries:
    """Average power (kW) per smart-meter interval for one customer."""

    customer_id: str
    transformer_id: str
    t0: float
    dt: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        arr = _frozen_array(self.values)
        if not np.all(np.isfinite(arr)):
            raise InputError(f"customer {self.customer_id}: non-finite values")
        object.__setattr__(self, "values", arr)

    def __len__(self):
        return len(self.values)

    def __eq__(self, other):
        return (
            isinstance(other, CustomerSeries)
            and self.customer_id == other.customer_id
            and self.transformer_id == other.transformer_id
            and self.t0 == other.t0
            and self.dt == other.dt
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


@dataclass(frozen=True)
class IntervalStats:
    t: int
    p_avg: float
    p_max: float
    p_min: float
    n_samples: int


def samples_per_interval(high_dt: float, low_dt: float) -> int:
    """Number of high-resolution samples N' in one low-resolution interval."""
    ratio = low_dt / high_dt
    n = int(round(ratio))
    if n < 1 or not math.isclose(ratio, n, rel_tol=0, abs_tol=1e-9):
        raise ConfigurationError(
            f"low-resolution dt {low_dt} is not an integer multiple of {high_dt}"
        )
    return n


def interval_matrix(hr: HighResSeries, low_dt: float) -> np.ndarray:
    """Reshape complete intervals into an (N, N') array; trailing partial interval dropped."""
    n_prime = samples_per_interval(hr.dt, low_dt)
    if len(hr.values) == 0:
        raise InputError(f"{hr.transformer_id}: empty series")
    n = len(hr.values) // n_prime
    if n == 0:
        raise InputError(
            f"{hr.transformer_id}: {len(hr.values)} samples is shorter than one "
            f"interval of {n_prime}"
        )
    return hr.values[: n * n_prime].reshape(n, n_prime)


def interval_arrays(hr: HighResSeries, low_dt: float):
    """Vectorised form of :func:`segment_and_aggregate`: (p_avg, p_max, p_min) arrays."""
    block = interval_matrix(hr, low_dt)
    p_avg = block.mean(axis=1)
    p_max = block.max(axis=1)
    p_min = block.min(axis=1)
    # the float mean of identical samples can land one ulp outside the extrema
    p_avg = np.clip(p_avg, p_min, p_max)
    return p_avg, p_max, p_min


def segment_and_aggregate(hr: HighResSeries, low_dt: float) -> list[IntervalStats]:
    p_avg, p_max, p_min = interval_arrays(hr, low_dt)
    n_prime = samples_per_interval(hr.dt, low_dt)
    return [
        IntervalStats(t=i + 1, p_avg=float(a), p_max=float(hi), p_min=float(lo), n_samples=n_prime)
        for i, (a, hi, lo) in enumerate(zip(p_avg, p_max, p_min))
    ]


def to_lowres(hr: HighResSeries, low_dt: float) -> LowResSeries:
    p_avg, _, _ = interval_arrays(hr, low_dt)
    return LowResSeries(hr.transformer_id, hr.t0, float(low_dt), p_avg)


def aggregate_customers(
    customers: Sequence[CustomerSeries],
    loss_fraction: float = DEFAULT_LOSS_FRACTION,
    transformer_id: str | None = None,
) -> LowResSeries:
    """Sum customer smart-meter loads and add an approximate transformer loss."""
    if not customers:
        raise InputError("no customers to aggregate")
    if not 0 <= loss_fraction < 0.2:
        raise ConfigurationError(f"loss_fraction must be in [0, 0.2), got {loss_fraction}")
    first = customers[0]
    for c in customers[1:]:
        if c.t0 != first.t0 or c.dt != first.dt or len(c) != len(first):
            raise InputError(
                f"customer {c.customer_id} clock (t0={c.t0}, dt={c.dt}, n={len(c)}) does "
                f"not match {first.customer_id} (t0={first.t0}, dt={first.dt}, n={len(first)})"
            )
    total = np.sum([c.values for c in customers], axis=0) * (1.0 + loss_fraction)
    tid = transformer_id if transformer_id is not None else first.transformer_id
    return LowResSeries(tid, first.t0, first.dt, total)


# --------------------------------------------------------------------------
# CSV I/O


def _fmt(x: float) -> str:
    x = float(x)
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _read_rows(path, header):
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        if tuple(h.strip() for h in first) != header:
            raise InputError(f"{path}:1: expected header {','.join(header)}, got {','.join(first)}")
        for row in reader:
            if not row:
                continue
            yield reader.line_num, row


def _parse_float(path, lineno, text, what):
    try:
        value = float(text)
    except ValueError:
        raise InputError(f"{path}:{lineno}: cannot parse {what} {text!r}") from None
    if not math.isfinite(value):
        raise InputError(f"{path}:{lineno}: non-finite {what} {text!r}")
    return value


def _check_clock(path, key, times, lines, dt=None):
    if len(times) < 2 and dt is None:
        raise InputError(f"{path}: cannot infer dt for {key} from a single row; pass dt")
    step = dt if dt is not None else times[1] - times[0]
    if not step > 0:
        raise InputError(f"{path}:{lines[1]}: timestamps for {key} are not strictly increasing")
    t = np.asarray(times)
    diffs = np.diff(t)
    bad = np.flatnonzero(diffs <= 0)
    if bad.size:
        i = bad[0] + 1
        raise InputError(
            f"{path}:{lines[i]}: timestamps for {key} are not strictly increasing "
            f"({_fmt(t[i - 1])} -> {_fmt(t[i])})"
        )
    expected = t[0] + step * np.arange(len(t))
    off = np.flatnonzero(np.abs(t - expected) > 1e-6 * step)
    if off.size:
        i = off[0]
        raise InputError(
            f"{path}:{lines[i]}: gap in timestamps for {key}: expected "
            f"{_fmt(expected[i])}, found {_fmt(t[i])} (after {_fmt(t[i - 1])})"
        )
    return float(t[0]), float(step)


def _read_transformer_csv(path, cls, dt=None):
    grouped: OrderedDict[str, tuple[list, list, list]] = OrderedDict()
    for lineno, row in _read_rows(path, HIGHRES_HEADER):
        if len(row) != 3:
            raise InputError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
        ts = _parse_float(path, lineno, row[0], "timestamp")
        p = _parse_float(path, lineno, row[2], "p_kw")
        times, vals, lines = grouped.setdefault(row[1], ([], [], []))
        times.append(ts)
        vals.append(p)
        lines.append(lineno)
    if not grouped:
        raise InputError(f"{path}: no data rows")
    out = []
    for tid, (times, vals, lines) in grouped.items():
        t0, step = _check_clock(path, tid, times, lines, dt)
        out.append(cls(tid, t0, step, vals))
    return out


def read_highres_csv(path, dt=None) -> list[HighResSeries]:
    """Read every transformer in a high-resolution CSV, in order of first appearance."""
    return _read_transformer_csv(path, HighResSeries, dt)


def read_lowres_csv(path, dt=None) -> list[LowResSeries]:
    return _read_transformer_csv(path, LowResSeries, dt)


def write_series_csv(path, series: Iterable[_Series]) -> None:
    """Write high- or low-resolution series (same schema) with round-trip exact floats."""
    with Path(path).open("w", newline="") as fh:
        fh.write(",".join(HIGHRES_HEADER) + "\n")
        for s in series:
            tid = s.transformer_id
            ts = s.timestamps
            fh.write("".join(f"{_fmt(t)},{tid},{v!r}\n" for t, v in zip(ts, s.values.tolist())))


def read_customer_csv(path, dt=None) -> list[CustomerSeries]:
    """Read customer smart-meter energy readings, converting kWh to average kW."""
    grouped: OrderedDict[tuple[str, str], tuple[list, list, list]] = OrderedDict()
    for lineno, row in _read_rows(path, CUSTOMER_HEADER):
        if len(row) != 4:
            raise InputError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
        ts = _parse_float(path, lineno, row[0], "timestamp")
        kwh = _parse_float(path, lineno, row[3], "kwh")
        times, vals, lines = grouped.setdefault((row[1], row[2]), ([], [], []))
        times.append(ts)
        vals.append(kwh)
        lines.append(lineno)
    if not grouped:
        raise InputError(f"{path}: no data rows")
    out = []
    for (cid, tid), (times, vals, lines) in grouped.items():
        t0, step = _check_clock(path, cid, times, lines, dt)
        out.append(CustomerSeries(cid, tid, t0, step, np.asarray(vals) * (3600.0 / step)))
    return out


def write_customer_csv(path, customers: Iterable[CustomerSeries]) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write(",".join(CUSTOMER_HEADER) + "\n")
        for c in customers:
            kwh = c.values * (c.dt / 3600.0)
            t = c.t0 + c.dt * np.arange(len(c))
            fh.write(
                "".join(
                    f"{_fmt(ti)},{c.customer_id},{c.transformer_id},{e!r}\n"
                    for ti, e in zip(t, kwh.tolist())
                )
            )


def sniff_csv_kind(path) -> str:
    """Return ``"customer"`` or ``"transformer"`` depending on the header row."""
    with Path(path).open(newline="") as fh:
        header = tuple(h.strip() for h in next(csv.reader(fh), []))
    if header == CUSTOMER_HEADER:
        return "customer"
    if header == HIGHRES_HEADER:
        return "transformer"
    raise InputError(f"{path}:1: unrecognised header {','.join(header)}")
