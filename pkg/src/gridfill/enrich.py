"""Student-side enrichment: infer interval bounds from weighted teacher GPRs,
blend teacher transition tensors per load level, and sample 1-second load."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Literal, Sequence

import numpy as np

from . import gpr, markov
from .errors import ConfigurationError, GridfillError, InputError
from .seeding import stream
from .series import (
    DEFAULT_LOSS_FRACTION,
    CustomerSeries,
    HighResSeries,
    LowResSeries,
    aggregate_customers,
    samples_per_interval,
)
from .teachers import Repository, TeacherModel, TeacherWeights, compute_weights, extract_patterns


@dataclass(frozen=True)
class EnrichmentConfig:
    n_states: int = markov.DEFAULT_N_STATES
    n_levels: int = markov.DEFAULT_N_LEVELS
    seed: int = 0
    mean_preserve: bool = False
    bin_mode: Literal["upper_edge", "midpoint"] = "upper_edge"
    weight_mode: Literal["proportional", "inverse"] = "inverse"
    allow_negative: bool = False
    high_dt: float = 1.0
    loss_fraction: float = DEFAULT_LOSS_FRACTION

    def __post_init__(self):
        if self.bin_mode not in ("upper_edge", "midpoint"):
            raise ConfigurationError(f"unknown bin_mode {self.bin_mode!r}")
        if self.weight_mode not in ("proportional", "inverse"):
            raise ConfigurationError(f"unknown weight_mode {self.weight_mode!r}")

    def check_repository(self, repo: Repository):
        if (self.n_states, self.n_levels) != (repo.n_states, repo.n_levels):
            raise ConfigurationError(
                f"config has N_s={self.n_states}, N_d={self.n_levels} but repository "
                f"was trained with N_s={repo.n_states}, N_d={repo.n_levels}"
            )

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass(frozen=True)
class EnrichedSeries:
    series: HighResSeries
    p_max: np.ndarray
    p_min: np.ndarray
    p_avg: np.ndarray
    levels: np.ndarray
    weights: dict[str, float]

    def meta(self) -> dict:
        return {
            "transformer_id": self.series.transformer_id,
            "weights": self.weights,
            "intervals": [
                {"t": i + 1, "p_avg": a, "p_max": hi, "p_min": lo, "level": int(j)}
                for i, (a, hi, lo, j) in enumerate(
                    zip(self.p_avg.tolist(), self.p_max.tolist(), self.p_min.tolist(), self.levels)
                )
            ],
        }


def _teachers(repo) -> list[TeacherModel]:
    return repo.teachers if isinstance(repo, Repository) else list(repo)


def infer_bounds(p_a, repo, weights: TeacherWeights, allow_negative: bool = False):
    """Weighted teacher posterior means for the interval max and min.

    The bounds are then made consistent with the average: max >= p_a >= min,
    and min >= 0 unless net load may be negative.
    """
    teachers = _teachers(repo)
    if not teachers:
        raise ConfigurationError("teacher repository is empty")
    p = np.asarray(p_a, dtype=float)
    hi = np.zeros(p.shape)
    lo = np.zeros(p.shape)
    for t in teachers:
        w = weights[t.transformer_id]
        hi = hi + w * gpr.predict(t.gpr_max, p)[0]
        lo = lo + w * gpr.predict(t.gpr_min, p)[0]
    hi = np.maximum(hi, p)
    lo = np.minimum(lo, p)
    if not allow_negative:
        lo = np.maximum(lo, np.minimum(0.0, p))
    if np.ndim(p) == 0:
        return float(hi), float(lo)
    return hi, lo


def select_level(p_a, partition: markov.LevelPartition):
    return partition.level_of(p_a)


def blend_tensors(level, repo, weights: TeacherWeights) -> markov.TransitionTensor:
    """Weighted average of teacher transition tensors for one load level.

    Each (prev, cur) row averages only the teachers that define it, with
    their weights renormalized. ``level=None`` blends the pooled tensors.
    ``counts`` of the result holds weighted relative triplet frequencies.
    """
    teachers = _teachers(repo)
    n = teachers[0].n_states
    num = np.zeros((n, n, n))
    wsum = np.zeros((n, n))
    freq = np.zeros((n, n, n))
    for t in teachers:
        if t.n_states != n:
            raise ConfigurationError("teachers disagree on n_states")
        tensor = t.pooled_tensor if level is None else t.tensors[level - 1]
        w = weights[t.transformer_id]
        mask = tensor.defined_mask
        num[mask] += w * tensor.probs[mask]
        wsum[mask] += w
        total = tensor.counts.sum()
        if total > 0:
            freq += w * tensor.counts / total
    defined = wsum > 0
    probs = np.zeros_like(num)
    probs[defined] = num[defined] / wsum[defined][:, None]
    for arr in (freq, probs, defined):
        arr.setflags(write=False)
    return markov.TransitionTensor(n, freq, probs, defined, level)


def _preserve_mean(s, p_a, lo, hi):
    """Stretch samples to fill [lo, hi], then shift so the clipped mean is p_a."""
    s = np.asarray(s, dtype=float)
    smin, smax = s.min(), s.max()
    if smax > smin:
        s = lo + (s - smin) * (hi - lo) / (smax - smin)
    # mean(clip(s + c)) is continuous and non-decreasing in c: bisect
    a, b = lo - s.max(), hi - s.min()
    for _ in range(200):
        c = 0.5 * (a + b)
        if np.clip(s + c, lo, hi).mean() < p_a:
            a = c
        else:
            b = c
        if b - a <= 1e-15 * max(1.0, abs(c)):
            break
    out = np.clip(s + 0.5 * (a + b), lo, hi)
    # absorb the last rounding residue in unclipped samples
    free = (out > lo) & (out < hi)
    if free.any():
        out[free] += (p_a - out.mean()) * out.size / free.sum()
        out = np.clip(out, lo, hi)
    return out


def enrich_interval(
    p_a: float,
    bounds: tuple[float, float],
    provider: markov.RowProvider,
    carry,
    rng: np.random.Generator,
    n_prime: int,
    midpoint: bool = False,
    mean_preserve: bool = False,
):
    """Sample one interval of ``n_prime`` loads.

    ``carry`` is ``None`` for the first interval (seed states drawn from the
    tensor's pair frequencies) or the last two loads of the previous
    interval, which are re-discretized under this interval's bounds.
    Returns the samples and the new carry.
    """
    if n_prime < 3:
        raise ConfigurationError(f"need at least 3 samples per interval, got {n_prime}")
    p_max, p_min = bounds
    if not p_min <= p_a <= p_max:
        raise InputError(f"inconsistent bounds: {p_min} <= {p_a} <= {p_max} violated")
    n_s = provider.n_states
    if p_max == p_min:
        samples = np.full(n_prime, p_a)
        return samples, (p_a, p_a)
    if carry is None:
        x, y = provider.initial_pair(rng.random())
    else:
        prev = np.clip(np.asarray(carry, dtype=float), p_min, p_max)
        x, y = markov.discretize_intervals(prev[None, :], p_max, p_min, n_s)[0].tolist()
    states = provider.simulate(n_prime, x, y, rng.random(n_prime).tolist())
    samples = markov.states_to_load(states, p_max, p_min, n_s, midpoint=midpoint)
    if mean_preserve:
        samples = _preserve_mean(samples, p_a, p_min, p_max)
    return samples, (float(samples[-2]), float(samples[-1]))


def enrich_series(
    student_low: LowResSeries,
    repo: Repository,
    config: EnrichmentConfig = EnrichmentConfig(),
    customers: Sequence[CustomerSeries] | None = None,
    weights: TeacherWeights | None = None,
) -> EnrichedSeries:
    """Enrich a student's interval averages into a high-resolution series."""
    config.check_repository(repo)
    tid = student_low.transformer_id
    try:
        if weights is None:
            if not customers:
                raise InputError("customer data or explicit weights are required")
            weights = compute_weights(extract_patterns(customers), repo, config.weight_mode)
        n_prime = samples_per_interval(config.high_dt, student_low.dt)
    except GridfillError as exc:
        raise type(exc)(f"student {tid}: {exc}") from exc
    p_a = student_low.values
    if len(p_a) == 0:
        raise InputError(f"student {tid}: empty series")

    hi, lo = infer_bounds(p_a, repo, weights, config.allow_negative)
    hi, lo = np.atleast_1d(hi), np.atleast_1d(lo)
    partition = markov.partition_levels(p_a, config.n_levels)
    levels = np.atleast_1d(partition.level_of(p_a))
    pooled = blend_tensors(None, repo, weights)
    providers: dict[int, markov.RowProvider] = {}

    rng = stream(config.seed, tid)
    midpoint = config.bin_mode == "midpoint"
    out = np.empty(len(p_a) * n_prime)
    carry = None
    for t in range(len(p_a)):
        j = int(levels[t])
        if j not in providers:
            providers[j] = markov.RowProvider(blend_tensors(j, repo, weights), pooled)
        try:
            samples, carry = enrich_interval(
                float(p_a[t]), (float(hi[t]), float(lo[t])), providers[j], carry, rng,
                n_prime, midpoint, config.mean_preserve,
            )
        except GridfillError as exc:
            raise type(exc)(f"student {tid}, interval {t + 1}: {exc}") from exc
        out[t * n_prime:(t + 1) * n_prime] = samples
    series = HighResSeries(tid, student_low.t0, config.high_dt, out)
    return EnrichedSeries(series, hi, lo, np.asarray(p_a, dtype=float), levels, dict(weights.weights))


def enrich_customers(
    customers: Sequence[CustomerSeries],
    repo: Repository,
    config: EnrichmentConfig = EnrichmentConfig(),
    transformer_id: str | None = None,
) -> EnrichedSeries:
    """Aggregate a student's smart meters (plus transformer loss) and enrich."""
    low = aggregate_customers(customers, config.loss_fraction, transformer_id)
    return enrich_series(low, repo, config, customers=customers)
