"""Statistical comparison of enriched against actual high-resolution load."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError
from .series import HighResSeries, interval_matrix

DEFAULT_PERCENTILES = (0, 1, 5, 10, 25, 50, 75, 90, 95, 99, 100)


def r_squared(actual, predicted) -> float:
    """Coefficient of determination; NaN (with a warning) when actual is constant."""
    y = np.asarray(actual, dtype=float)
    yhat = np.asarray(predicted, dtype=float)
    if y.shape != yhat.shape or y.size < 2:
        raise InputError("r_squared needs two equal-length series of at least 2 values")
    ss_tot = np.sum((y - y.mean()) ** 2)
    if ss_tot == 0:
        warnings.warn("R^2 undefined: actual values are all equal", RuntimeWarning, stacklevel=2)
        return float("nan")
    return float(1.0 - np.sum((y - yhat) ** 2) / ss_tot)


def percentile_compare(actual, enriched, percentiles=DEFAULT_PERCENTILES) -> list[dict]:
    """Linear-interpolation quantiles of both sample sets at the given percentiles."""
    q = np.asarray(percentiles, dtype=float)
    qa = np.percentile(np.asarray(actual, dtype=float), q, method="linear")
    qe = np.percentile(np.asarray(enriched, dtype=float), q, method="linear")
    return [
        {"percentile": float(p), "actual": float(a), "enriched": float(e), "abs_diff": float(abs(a - e))}
        for p, a, e in zip(q, qa, qe)
    ]


def wasserstein1(a, b) -> float:
    """1-Wasserstein distance between two empirical distributions.

    Equal sizes: mean absolute difference of the sorted samples. Unequal
    sizes: both step quantile functions are evaluated on the merged grid of
    their breakpoints, which is exact.
    """
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise InputError("wasserstein1 needs non-empty samples")
    if a.size == b.size:
        return float(np.mean(np.abs(a - b)))
    grid = np.union1d(np.arange(1, a.size + 1) / a.size, np.arange(1, b.size + 1) / b.size)
    grid[-1] = 1.0
    widths = np.diff(np.concatenate([[0.0], grid]))
    mids = grid - widths / 2
    ia = np.minimum((mids * a.size).astype(np.int64), a.size - 1)
    ib = np.minimum((mids * b.size).astype(np.int64), b.size - 1)
    return float(np.sum(widths * np.abs(a[ia] - b[ib])))


# --------------------------------------------------------------------------
# per-interval metrics


def _blocks(actual, enriched, n_prime):
    a = np.asarray(getattr(actual, "values", actual), dtype=float)
    e = np.asarray(getattr(enriched, "values", enriched), dtype=float)
    n = min(a.size, e.size) // n_prime
    if n == 0:
        raise InputError("series shorter than one interval")
    return a[: n * n_prime].reshape(n, n_prime), e[: n * n_prime].reshape(n, n_prime)


def interval_wasserstein(actual, enriched, n_prime: int) -> np.ndarray:
    """W1 between actual and enriched samples, one value per interval."""
    a, e = _blocks(actual, enriched, n_prime)
    return np.mean(np.abs(np.sort(a, axis=1) - np.sort(e, axis=1)), axis=1)


def baseline_wasserstein(actual, n_prime: int, p_avg=None) -> np.ndarray:
    """W1 between actual samples and a constant equal to the interval average."""
    a = np.asarray(getattr(actual, "values", actual), dtype=float)
    n = a.size // n_prime
    a = a[: n * n_prime].reshape(n, n_prime)
    avg = a.mean(axis=1) if p_avg is None else np.asarray(p_avg, dtype=float)[:n]
    return np.mean(np.abs(a - avg[:, None]), axis=1)


def interval_percentile_gaps(actual, enriched, n_prime: int, percentiles=(5, 25, 50, 75, 95)):
    """|enriched - actual| quantile gaps per interval, relative to the actual range.

    Returns an (N, len(percentiles)) array; intervals with a flat actual load
    get a relative gap of 0 where the quantiles agree exactly and inf otherwise.
    """
    a, e = _blocks(actual, enriched, n_prime)
    q = np.asarray(percentiles, dtype=float)
    qa = np.percentile(a, q, axis=1, method="linear").T
    qe = np.percentile(e, q, axis=1, method="linear").T
    rng = (a.max(axis=1) - a.min(axis=1))[:, None]
    gap = np.abs(qe - qa)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(rng > 0, gap / rng, np.where(gap == 0, 0.0, np.inf))
    return rel


# --------------------------------------------------------------------------
# report


@dataclass
class ValidationReport:
    r2_max: float | None
    r2_min: float | None
    percentile_table: list[dict]
    wasserstein_per_hour: list[float]
    baseline_wasserstein_per_hour: list[float]
    histogram_edges: list[float] = field(default_factory=list)
    histogram_actual: list[int] = field(default_factory=list)
    histogram_enriched: list[int] = field(default_factory=list)

    @property
    def fraction_beating_baseline(self) -> float:
        w = np.asarray(self.wasserstein_per_hour)
        b = np.asarray(self.baseline_wasserstein_per_hour)
        return float(np.mean(w < b)) if w.size else float("nan")

    def to_dict(self) -> dict:
        return {
            "r2_max": self.r2_max,
            "r2_min": self.r2_min,
            "percentile_table": self.percentile_table,
            "wasserstein_per_hour": self.wasserstein_per_hour,
            "baseline_wasserstein_per_hour": self.baseline_wasserstein_per_hour,
            "fraction_beating_baseline": self.fraction_beating_baseline,
            "histogram": {
                "edges": self.histogram_edges,
                "actual": self.histogram_actual,
                "enriched": self.histogram_enriched,
            },
        }

    def write_histogram_csv(self, path) -> None:
        lines = ["bin_lo_kw,bin_hi_kw,actual_count,enriched_count"]
        e = self.histogram_edges
        for i, (ca, ce) in enumerate(zip(self.histogram_actual, self.histogram_enriched)):
            lines.append(f"{e[i]!r},{e[i + 1]!r},{ca},{ce}")
        Path(path).write_text("\n".join(lines) + "\n")


def validate(
    actual: HighResSeries,
    enriched: HighResSeries,
    low_dt: float = 3600.0,
    bounds_max=None,
    bounds_min=None,
    percentiles=DEFAULT_PERCENTILES,
    bins: int = 50,
) -> ValidationReport:
    """Compare an enriched series against ground truth.

    ``bounds_max``/``bounds_min`` are the inferred interval bounds (from the
    enrichment metadata); when given, their R^2 against the actual interval
    extrema is reported.
    """
    if actual.dt != enriched.dt:
        raise InputError(f"sampling intervals differ: {actual.dt} vs {enriched.dt}")
    block = interval_matrix(actual, low_dt)
    n_prime = block.shape[1]
    r2_max = r2_min = None
    if bounds_max is not None:
        r2_max = r_squared(block.max(axis=1), np.asarray(bounds_max)[: block.shape[0]])
    if bounds_min is not None:
        r2_min = r_squared(block.min(axis=1), np.asarray(bounds_min)[: block.shape[0]])
    n = min(len(actual), len(enriched))
    a, e = actual.values[:n], enriched.values[:n]
    edges = np.histogram_bin_edges(np.concatenate([a, e]), bins=bins)
    return ValidationReport(
        r2_max=r2_max,
        r2_min=r2_min,
        percentile_table=percentile_compare(a, e, percentiles),
        wasserstein_per_hour=interval_wasserstein(a, e, n_prime).tolist(),
        baseline_wasserstein_per_hour=baseline_wasserstein(a, n_prime).tolist(),
        histogram_edges=edges.tolist(),
        histogram_actual=np.histogram(a, edges)[0].tolist(),
        histogram_enriched=np.histogram(e, edges)[0].tolist(),
    )
