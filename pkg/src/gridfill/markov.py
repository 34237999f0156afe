"""Second-order Markov models of intra-interval load variability.

States are 1-based integers ``1..n_states`` throughout the public API;
array axes are 0-based, so ``probs[x - 1, y - 1, z - 1]`` is the
probability of moving to ``z`` given previous state ``x`` and current ``y``.
"""

from __future__ import annotations

import warnings
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import ConfigurationError, InputError

DEFAULT_N_STATES = 10
DEFAULT_N_LEVELS = 10
BOUND_SLACK = 1e-9


@dataclass(frozen=True)
class StateSequence:
    interval_index: int
    states: np.ndarray


# --------------------------------------------------------------------------
# discretization


def _check_states(n_states):
    if n_states < 2:
        raise ConfigurationError(f"n_states must be >= 2, got {n_states}")


def discretize_intervals(block, p_max, p_min, n_states: int) -> np.ndarray:
    """Discretize an (N, N') array of samples, one row per interval.

    Bins are half-open over ``[p_min, p_max]`` except that the top edge is
    closed, so a sample equal to ``p_max`` gets state ``n_states``. A flat
    interval (``p_max == p_min``) maps entirely to state 1.
    """
    _check_states(n_states)
    block = np.atleast_2d(np.asarray(block, dtype=float))
    p_max = np.asarray(p_max, dtype=float).reshape(-1, 1)
    p_min = np.asarray(p_min, dtype=float).reshape(-1, 1)
    if np.any(p_max < p_min):
        raise InputError("p_max < p_min")
    span = p_max - p_min
    slack = BOUND_SLACK * np.maximum(1.0, np.abs(p_max))
    if np.any(block < p_min - slack) or np.any(block > p_max + slack):
        raise InputError("sample outside [p_min, p_max]")
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(span > 0, (block - p_min) / span, 0.0)
    states = np.floor(rel * n_states).astype(np.int64) + 1
    return np.clip(states, 1, n_states)


def discretize(samples, p_max: float, p_min: float, n_states: int = DEFAULT_N_STATES, interval_index: int = 1) -> StateSequence:
    states = discretize_intervals(np.asarray(samples, dtype=float)[None, :], p_max, p_min, n_states)[0]
    return StateSequence(interval_index, states)


def states_to_load(states, p_max, p_min, n_states: int = DEFAULT_N_STATES, midpoint: bool = False) -> np.ndarray:
    """Map states back to load: upper bin edge by default, bin centre with ``midpoint``."""
    s = np.asarray(getattr(states, "states", states), dtype=float)
    offset = 0.5 if midpoint else 0.0
    lo, hi = np.asarray(p_min, dtype=float), np.asarray(p_max, dtype=float)
    # the top state must land exactly on p_max, not an ulp above it
    return np.clip(lo + (s - offset) * (hi - lo) / n_states, lo, hi)


# --------------------------------------------------------------------------
# load-level partition


@dataclass(frozen=True)
class LevelPartition:
    n_levels: int
    edges: np.ndarray

    def level_of(self, p_a):
        """1-based level(s) of ``p_a``; half-open bins, top closed, out-of-range clamped."""
        inner = self.edges[1:-1]
        lv = np.searchsorted(inner, np.asarray(p_a, dtype=float), side="right") + 1
        return int(lv) if np.ndim(lv) == 0 else lv

    def to_dict(self):
        return {"n_levels": self.n_levels, "edges": self.edges.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["n_levels"]), np.asarray(d["edges"], dtype=float))


def partition_levels(p_a_values, n_levels: int = DEFAULT_N_LEVELS) -> LevelPartition:
    """Percentile cut points (linear interpolation) of the average-load distribution."""
    if n_levels < 1:
        raise ConfigurationError(f"n_levels must be >= 1, got {n_levels}")
    values = np.asarray(p_a_values, dtype=float)
    if values.size == 0:
        raise InputError("cannot partition an empty set of average loads")
    edges = np.percentile(values, np.linspace(0.0, 100.0, n_levels + 1), method="linear")
    edges = np.maximum.accumulate(edges)
    if n_levels > 1 and edges[0] == edges[-1]:
        warnings.warn("all average loads are equal; only one load level is populated", stacklevel=2)
    edges.setflags(write=False)
    return LevelPartition(n_levels, edges)


# --------------------------------------------------------------------------
# transition tensors


@dataclass(frozen=True)
class TransitionTensor:
    """Counts and row-normalized probabilities of (prev, cur, next) triplets.

    ``counts`` may be fractional for blended tensors, where it holds the
    weighted relative triplet frequencies of the contributing teachers.
    """

    n_states: int
    counts: np.ndarray = field(repr=False)
    probs: np.ndarray = field(repr=False)
    defined_mask: np.ndarray = field(repr=False)
    level: int | None = None

    @classmethod
    def from_counts(cls, counts, level=None) -> "TransitionTensor":
        counts = np.array(counts, dtype=float)
        n = counts.shape[0]
        if counts.shape != (n, n, n):
            raise InputError(f"counts must be cubic, got shape {counts.shape}")
        totals = counts.sum(axis=2)
        defined = totals > 0
        probs = np.zeros_like(counts)
        probs[defined] = counts[defined] / totals[defined][:, None]
        for arr in (counts, probs, defined):
            arr.setflags(write=False)
        return cls(n, counts, probs, defined, level)

    def row(self, x: int, y: int) -> np.ndarray:
        return self.probs[x - 1, y - 1]

    def is_defined(self, x: int, y: int) -> bool:
        return bool(self.defined_mask[x - 1, y - 1])

    def to_dict(self) -> dict:
        c = self.counts
        flat = c.astype(np.int64).ravel().tolist() if np.all(c == np.round(c)) else c.ravel().tolist()
        return {"n_states": self.n_states, "level": self.level, "counts": flat}

    @classmethod
    def from_dict(cls, d) -> "TransitionTensor":
        n = int(d["n_states"])
        counts = np.asarray(d["counts"], dtype=float).reshape(n, n, n)
        return cls.from_counts(counts, d.get("level"))


def count_triplets(states, n_states: int) -> np.ndarray:
    """Triplet counts of an (N, N') state array, never crossing row boundaries."""
    s = np.atleast_2d(np.asarray(states, dtype=np.int64)) - 1
    if s.shape[1] < 3:
        return np.zeros((n_states,) * 3)
    if s.size and (s.min() < 0 or s.max() >= n_states):
        raise InputError(f"states outside 1..{n_states}")
    code = (s[:, :-2] * n_states + s[:, 1:-1]) * n_states + s[:, 2:]
    return np.bincount(code.ravel(), minlength=n_states**3).astype(float).reshape((n_states,) * 3)


def count_and_normalize(sequences: Iterable, n_states: int, level=None) -> TransitionTensor:
    """Estimate a transition tensor from separate state sequences.

    Each sequence (e.g. one interval) is counted on its own; triplets that
    would straddle two sequences are not counted.
    """
    _check_states(n_states)
    counts = np.zeros((n_states,) * 3)
    for seq in sequences:
        states = np.asarray(getattr(seq, "states", seq))
        if states.ndim == 2:
            counts += count_triplets(states, n_states)
        elif states.size >= 3:
            counts += count_triplets(states[None, :], n_states)
    return TransitionTensor.from_counts(counts, level)


# --------------------------------------------------------------------------
# sampling


class RowProvider:
    """Resolves (prev, cur) rows with a fallback chain and caches their CDFs.

    Resolution order: the level tensor's row, the pooled tensor's row, the
    first-order row P(next | cur) from the pooled (or level) counts, then
    uniform.
    """

    def __init__(self, tensor: TransitionTensor, pooled: TransitionTensor | None = None):
        n = tensor.n_states
        if pooled is not None and pooled.n_states != n:
            raise ConfigurationError("level and pooled tensors disagree on n_states")
        self.n_states = n
        self.tensor = tensor
        self.pooled = pooled
        source = pooled if pooled is not None else tensor
        first = source.counts.sum(axis=0)
        first_tot = first.sum(axis=1)

        probs = np.empty((n, n, n))
        origin = np.empty((n, n), dtype=np.int8)
        for yi in range(n):
            if first_tot[yi] > 0:
                first_row = first[yi] / first_tot[yi]
            else:
                first_row = None
            for xi in range(n):
                if tensor.defined_mask[xi, yi]:
                    probs[xi, yi], origin[xi, yi] = tensor.probs[xi, yi], 1
                elif pooled is not None and pooled.defined_mask[xi, yi]:
                    probs[xi, yi], origin[xi, yi] = pooled.probs[xi, yi], 2
                elif first_row is not None:
                    probs[xi, yi], origin[xi, yi] = first_row, 3
                else:
                    probs[xi, yi], origin[xi, yi] = 1.0 / n, 4
        self.probs = probs
        self.origin = origin
        cdf = np.cumsum(probs, axis=2)
        # index of the last state with positive probability, guards roundoff at u ~ 1
        last = n - 1 - np.argmax(probs[:, :, ::-1] > 0, axis=2)
        self._cdf = cdf.tolist()
        self._last = last.tolist()

        pair = tensor.counts.sum(axis=2)
        if pair.sum() == 0 and pooled is not None:
            pair = pooled.counts.sum(axis=2)
        if pair.sum() == 0:
            pair = np.ones((n, n))
        self._pair_cdf = np.cumsum(pair.ravel() / pair.sum()).tolist()

    def row(self, x: int, y: int) -> np.ndarray:
        return self.probs[x - 1, y - 1]

    def next_state(self, x: int, y: int, u: float) -> int:
        """Inverse-CDF draw: the smallest z whose cumulative probability exceeds u."""
        k = bisect_right(self._cdf[x - 1][y - 1], u)
        last = self._last[x - 1][y - 1]
        return (k if k <= last else last) + 1

    def initial_pair(self, u: float) -> tuple[int, int]:
        """Draw a (prev, cur) pair from the empirical pair frequencies."""
        k = min(bisect_right(self._pair_cdf, u), len(self._pair_cdf) - 1)
        return k // self.n_states + 1, k % self.n_states + 1

    def simulate(self, n_steps: int, x: int, y: int, uniforms) -> np.ndarray:
        """Draw ``n_steps`` successive states after the seed pair (x, y)."""
        out = [0] * n_steps
        cdf, lastidx = self._cdf, self._last
        for i, u in enumerate(uniforms[:n_steps]):
            row = cdf[x - 1][y - 1]
            k = bisect_right(row, u)
            last = lastidx[x - 1][y - 1]
            z = (k if k <= last else last) + 1
            out[i] = z
            x, y = y, z
        return np.asarray(out, dtype=np.int64)


def sample_next(provider, x: int, y: int, u: float) -> int:
    """One inverse-CDF transition. ``provider`` is a RowProvider or a TransitionTensor."""
    if isinstance(provider, TransitionTensor):
        provider = RowProvider(provider)
    return provider.next_state(x, y, u)


def simulate_chain(tensor: TransitionTensor, n_steps: int, rng, x0: int | None = None, y0: int | None = None) -> np.ndarray:
    """Simulate a chain from a tensor; returns the seed pair followed by ``n_steps`` states."""
    provider = RowProvider(tensor)
    if x0 is None or y0 is None:
        x0, y0 = provider.initial_pair(rng.random())
    u = rng.random(n_steps).tolist()
    return np.concatenate([[x0, y0], provider.simulate(n_steps, x0, y0, u)])
