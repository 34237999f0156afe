"""Teacher repository: per-transformer models trained on high-resolution data,
plus student-to-teacher similarity weights from customer daily load patterns."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Literal, Mapping, Sequence

import numpy as np

from . import gpr, markov
from .errors import ConfigurationError, GridfillError, InputError
from .series import CustomerSeries, HighResSeries, interval_matrix

DAY = 86400.0
MANIFEST = "repository.json"

WeightMode = Literal["proportional", "inverse"]


@dataclass(frozen=True)
class DailyLoadPattern:
    customer_id: str
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (24,) or not np.all(np.isfinite(v)):
            raise InputError(f"daily pattern for {self.customer_id} must be 24 finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def to_dict(self):
        return {"customer_id": self.customer_id, "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["customer_id"], d["values"])


@dataclass(frozen=True)
class TrainConfig:
    n_states: int = markov.DEFAULT_N_STATES
    n_levels: int = markov.DEFAULT_N_LEVELS
    low_dt: float = 3600.0
    min_hours: int = 240
    k_folds: int = 5
    cv_seed: int = 0
    lambda_factors: tuple[float, ...] = gpr.LAMBDA_FACTORS
    sigma_f_factors: tuple[float, ...] = gpr.SIGMA_F_FACTORS
    sigma_n_factors: tuple[float, ...] = gpr.SIGMA_N_FACTORS

    def __post_init__(self):
        if self.n_states < 2 or self.n_levels < 1:
            raise ConfigurationError("need n_states >= 2 and n_levels >= 1")

    def grid(self, x, y) -> list[gpr.KernelParams]:
        return gpr.default_grid(x, y, self.lambda_factors, self.sigma_f_factors, self.sigma_n_factors)

    def to_dict(self):
        d = asdict(self)
        for k in ("lambda_factors", "sigma_f_factors", "sigma_n_factors"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d):
        d = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        for k in ("lambda_factors", "sigma_f_factors", "sigma_n_factors"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class TeacherModel:
    transformer_id: str
    gpr_max: gpr.GprModel
    gpr_min: gpr.GprModel
    tensors: list[markov.TransitionTensor]
    pooled_tensor: markov.TransitionTensor
    partition: markov.LevelPartition
    patterns: list[DailyLoadPattern] = field(default_factory=list)

    @property
    def n_states(self):
        return self.pooled_tensor.n_states

    @property
    def n_levels(self):
        return len(self.tensors)

    def to_dict(self) -> dict:
        return {
            "transformer_id": self.transformer_id,
            "gpr_max": self.gpr_max.to_dict(),
            "gpr_min": self.gpr_min.to_dict(),
            "partition": self.partition.to_dict(),
            "tensors": [t.to_dict() for t in self.tensors],
            "pooled_tensor": self.pooled_tensor.to_dict(),
            "patterns": [p.to_dict() for p in self.patterns],
        }

    @classmethod
    def from_dict(cls, d) -> "TeacherModel":
        return cls(
            d["transformer_id"],
            gpr.GprModel.from_dict(d["gpr_max"]),
            gpr.GprModel.from_dict(d["gpr_min"]),
            [markov.TransitionTensor.from_dict(t) for t in d["tensors"]],
            markov.TransitionTensor.from_dict(d["pooled_tensor"]),
            markov.LevelPartition.from_dict(d["partition"]),
            [DailyLoadPattern.from_dict(p) for p in d["patterns"]],
        )


@dataclass(frozen=True)
class TeacherWeights:
    weights: dict[str, float]

    def __getitem__(self, tid):
        return self.weights[tid]

    def as_array(self, ids: Sequence[str]) -> np.ndarray:
        return np.array([self.weights[i] for i in ids])


# --------------------------------------------------------------------------
# patterns


def extract_patterns(customers: Sequence[CustomerSeries]) -> list[DailyLoadPattern]:
    """Hour-of-day mean load of each customer over its complete days."""
    out = []
    for c in customers:
        if c.dt > 3600 or 3600 % c.dt:
            raise ConfigurationError(f"customer {c.customer_id}: dt={c.dt} does not divide one hour")
        per_day = int(round(DAY / c.dt))
        t = c.t0 + c.dt * np.arange(len(c))
        day = np.floor(t / DAY).astype(np.int64)
        hour = (np.mod(t, DAY) // 3600).astype(np.int64)
        days, counts = np.unique(day, return_counts=True)
        complete = days[counts == per_day]
        if complete.size == 0:
            raise InputError(f"customer {c.customer_id}: no complete day of data")
        sel = np.isin(day, complete)
        sums = np.bincount(hour[sel], weights=c.values[sel], minlength=24)
        n = np.bincount(hour[sel], minlength=24)
        out.append(DailyLoadPattern(c.customer_id, sums / n))
    return out


# --------------------------------------------------------------------------
# training


def train_teacher(hr: HighResSeries, customers: Sequence[CustomerSeries], config: TrainConfig = TrainConfig()) -> TeacherModel:
    """Train the bound models and per-level transition tensors of one teacher."""
    tid = hr.transformer_id
    try:
        block = interval_matrix(hr, config.low_dt)
        if block.shape[0] < config.min_hours:
            raise InputError(
                f"{block.shape[0]} complete intervals, need at least {config.min_hours}"
            )
        p_avg = block.mean(axis=1)
        p_max = block.max(axis=1)
        p_min = block.min(axis=1)
        p_avg = np.clip(p_avg, p_min, p_max)

        gpr_max = gpr.train_bound_model(
            p_avg, p_max, "max", config.grid(p_avg, p_max), config.k_folds, config.cv_seed
        )
        gpr_min = gpr.train_bound_model(
            p_avg, p_min, "min", config.grid(p_avg, p_min), config.k_folds, config.cv_seed
        )

        partition = markov.partition_levels(p_avg, config.n_levels)
        levels = partition.level_of(p_avg)
        states = markov.discretize_intervals(block, p_max, p_min, config.n_states)
        tensors = []
        total = np.zeros((config.n_states,) * 3)
        for j in range(1, config.n_levels + 1):
            counts = markov.count_triplets(states[levels == j], config.n_states)
            total += counts
            tensors.append(markov.TransitionTensor.from_counts(counts, level=j))
        pooled = markov.TransitionTensor.from_counts(total, level=None)
        patterns = extract_patterns(customers) if customers else []
    except GridfillError as exc:
        raise type(exc)(f"teacher {tid}: {exc}") from exc
    return TeacherModel(tid, gpr_max, gpr_min, tensors, pooled, partition, patterns)


# --------------------------------------------------------------------------
# repository


@dataclass(frozen=True)
class Repository:
    teachers: list[TeacherModel]
    config: TrainConfig

    def __post_init__(self):
        if not self.teachers:
            raise ConfigurationError("teacher repository is empty")
        for t in self.teachers:
            if t.n_states != self.config.n_states or t.n_levels != self.config.n_levels:
                raise ConfigurationError(
                    f"teacher {t.transformer_id} has N_s={t.n_states}, N_d={t.n_levels}; "
                    f"repository expects N_s={self.config.n_states}, N_d={self.config.n_levels}"
                )

    @property
    def ids(self) -> list[str]:
        return [t.transformer_id for t in self.teachers]

    @property
    def n_states(self):
        return self.config.n_states

    @property
    def n_levels(self):
        return self.config.n_levels


def _dump(obj, path):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def save_repository(directory, repo: Repository) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = []
    for t in repo.teachers:
        name = f"{t.transformer_id}.json"
        _dump(t.to_dict(), d / name)
        files.append(name)
    manifest = {
        "teachers": repo.ids,
        "files": files,
        "n_states": repo.n_states,
        "n_levels": repo.n_levels,
        "config": repo.config.to_dict(),
        "config_hash": repo.config.hash(),
    }
    _dump(manifest, d / MANIFEST)
    return d / MANIFEST


def load_repository(directory) -> Repository:
    d = Path(directory)
    path = d / MANIFEST
    if not path.exists():
        raise ConfigurationError(f"{d}: no {MANIFEST} manifest")
    manifest = json.loads(path.read_text())
    config = TrainConfig.from_dict(manifest["config"])
    if (manifest["n_states"], manifest["n_levels"]) != (config.n_states, config.n_levels):
        raise ConfigurationError(f"{path}: manifest N_s/N_d disagree with its config")
    teachers = [TeacherModel.from_dict(json.loads((d / f).read_text())) for f in manifest["files"]]
    return Repository(teachers, config)


# --------------------------------------------------------------------------
# weights


def _energy(p: DailyLoadPattern) -> float:
    return float(p.values.sum())


def match_patterns(student, teacher):
    """Pair up pattern sets of unequal size.

    The smaller set is kept whole; for each of its patterns (highest energy
    first) the unused pattern of the larger set with the closest daily
    energy is picked.
    """
    student, teacher = list(student), list(teacher)
    if len(student) == len(teacher):
        return student, teacher
    small, large = (student, teacher) if len(student) < len(teacher) else (teacher, student)
    free = list(range(len(large)))
    picked = []
    for p in sorted(small, key=_energy, reverse=True):
        e = _energy(p)
        best = min(free, key=lambda i: abs(_energy(large[i]) - e))
        free.remove(best)
        picked.append(large[best])
    if small is student:
        return small, picked
    return picked, small


def pattern_distance(student: Sequence[DailyLoadPattern], teacher: Sequence[DailyLoadPattern]) -> float:
    """Mean pairwise l2 distance between two sets of daily load patterns."""
    if not student or not teacher:
        raise InputError("pattern sets must be non-empty")
    s, t = match_patterns(student, teacher)
    a = np.array([p.values for p in s])
    b = np.array([p.values for p in t])
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    return float(d.sum() / (len(s) * len(t)))


def weights_from_distances(distances: Mapping[str, float], mode: WeightMode = "inverse") -> TeacherWeights:
    """Normalize per-teacher dissimilarities into weights.

    ``proportional`` normalizes the dissimilarities as they are; ``inverse`` weights
    each teacher by 1/(d + eps), so closer teachers count more.
    """
    if not distances:
        raise ConfigurationError("teacher repository is empty")
    ids = list(distances)
    d = np.array([distances[i] for i in ids], dtype=float)
    if np.any(d < 0) or not np.all(np.isfinite(d)):
        raise InputError("pattern distances must be finite and non-negative")
    if mode == "proportional":
        w = d / d.sum() if d.sum() > 0 else np.full(d.size, 1.0 / d.size)
    elif mode == "inverse":
        if d.mean() == 0:
            w = np.full(d.size, 1.0 / d.size)
        else:
            inv = 1.0 / (d + 1e-6 * d.mean())
            w = inv / inv.sum()
    else:
        raise ConfigurationError(f"unknown weight mode {mode!r}")
    return TeacherWeights(dict(zip(ids, w.tolist())))


def compute_weights(student_patterns, teachers, mode: WeightMode = "inverse") -> TeacherWeights:
    """Learning weights of a student over a teacher repository (or list of teachers)."""
    if isinstance(teachers, Repository):
        teachers = teachers.teachers
    if not teachers:
        raise ConfigurationError("teacher repository is empty")
    distances = {}
    for t in teachers:
        if not t.patterns:
            raise InputError(f"teacher {t.transformer_id} has no customer patterns")
        distances[t.transformer_id] = pattern_distance(student_patterns, t.patterns)
    return weights_from_distances(distances, mode)
