"""Synthetic ground-truth transformer loads for closed-loop training and validation.

Each customer is a sum of appliances. Cycling appliances are alternating
renewal processes with exponential on/off sojourns (so the load jumps to a
level and holds), optionally restricted to a window of hours and with a
day-to-day intensity jitter. Baseload appliances follow a smooth diurnal
curve. A transformer's high-resolution load is the sum of its customers
plus a fixed loss fraction and a little sensor noise.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np

from .errors import ConfigurationError, InputError
from .seeding import derive_seed
from .series import (
    DEFAULT_LOSS_FRACTION,
    CustomerSeries,
    HighResSeries,
    interval_matrix,
)

DAY = 86400.0
# 2021-07-01 00:00:00 UTC, a midnight so time-of-day is simply t mod 86400
DEFAULT_T0 = 1625097600

PvMode = Literal["none", "teachers_only", "students_only", "both"]


@dataclass(frozen=True)
class ApplianceSpec:
    """One appliance.

    ``hours`` restricts a cycling appliance to a window of the day
    (``(start, end)`` in hours, wrapping past midnight if ``start > end``).
    ``day_jitter`` is the log-normal sigma of a per-day multiplier on the
    switching-on rate, giving hot and mild days.
    """

    p_on: float
    mean_on: float
    mean_off: float
    kind: Literal["cycling", "baseload"] = "cycling"
    hours: tuple[float, float] | None = None
    day_jitter: float = 0.0

    def __post_init__(self):
        if not self.p_on > 0:
            raise InputError(f"p_on must be positive, got {self.p_on}")
        if not (self.mean_on > 0 and self.mean_off > 0):
            raise InputError("sojourn means must be positive")
        if self.kind not in ("cycling", "baseload"):
            raise InputError(f"unknown appliance kind {self.kind!r}")


@dataclass(frozen=True)
class ScenarioSpec:
    n_teachers: int = 4
    n_students: int = 4
    customers_per_transformer: int = 5
    days: int = 14
    pv: PvMode = "none"
    seed: int = 0
    dt: float = 1.0
    low_dt: float = 3600.0
    loss_fraction: float = DEFAULT_LOSS_FRACTION
    pv_share: float = 0.6
    pv_capacity_kw: tuple[float, float] = (2.0, 5.0)
    noise_kw: float = 0.01
    t0: float = DEFAULT_T0

    def __post_init__(self):
        for name in ("n_teachers", "n_students", "customers_per_transformer", "days"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if self.pv not in ("none", "teachers_only", "students_only", "both"):
            raise ConfigurationError(f"unknown pv mode {self.pv!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        d = dict(d)
        if "pv_capacity_kw" in d:
            d["pv_capacity_kw"] = tuple(d["pv_capacity_kw"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pv_capacity_kw"] = list(self.pv_capacity_kw)
        return d


@dataclass
class TransformerData:
    transformer_id: str
    role: Literal["teacher", "student"]
    highres: HighResSeries
    customers: list[CustomerSeries] = field(default_factory=list)


@dataclass
class Scenario:
    spec: ScenarioSpec
    teachers: list[TransformerData]
    students: list[TransformerData]


# --------------------------------------------------------------------------
# processes


def _diurnal_shape(tod_hours: np.ndarray) -> np.ndarray:
    """Smooth multiplier with mean ~1: low overnight, evening peak."""
    return (
        1.0
        + 0.25 * np.cos(2 * np.pi * (tod_hours - 19.0) / 24.0)
        + 0.08 * np.cos(4 * np.pi * (tod_hours - 8.0) / 24.0)
    )


def _onoff(rng, n, dt, mean_on, mean_off, state):
    """Sample an on/off process on ``n`` grid points starting in ``state``.

    Returns the boolean indicator and the state at the end of the chunk.
    Sojourns are exponential, so restarting the residual at a chunk
    boundary does not change the law of the process.
    """
    span = n * dt
    chunks = []
    t = 0.0
    s = state
    while t < span:
        k = max(8, int(2.5 * span / (mean_on + mean_off)) + 8)
        on = rng.exponential(mean_on, k)
        off = rng.exponential(mean_off, k)
        pairs = (on, off) if s else (off, on)
        ends = t + np.cumsum(np.column_stack(pairs).ravel())
        chunks.append(ends)
        t = ends[-1]
    toggles = np.concatenate(chunks)
    flips = np.searchsorted(toggles, dt * np.arange(n), side="right")
    ind = (flips % 2 == 1) != state
    end_state = (np.searchsorted(toggles, span, side="right") % 2 == 1) != state
    return ind, bool(end_state)


def _in_window(tod_hours, hours):
    start, end = hours
    if start <= end:
        return (tod_hours >= start) & (tod_hours < end)
    return (tod_hours >= start) | (tod_hours < end)


def simulate_appliance(spec: ApplianceSpec, n_steps: int, dt: float, t0: float, rng) -> np.ndarray:
    t = t0 + dt * np.arange(n_steps)
    tod = np.mod(t, DAY) / 3600.0
    if spec.kind == "baseload":
        return spec.p_on * _diurnal_shape(tod)
    out = np.zeros(n_steps)
    duty = spec.mean_on / (spec.mean_on + spec.mean_off)
    state = bool(rng.random() < duty)
    day_index = np.floor((t - t0 + np.mod(t0, DAY)) / DAY).astype(np.int64)
    # chunk at day boundaries so the per-day rate multiplier can change
    bounds = np.flatnonzero(np.diff(day_index)) + 1
    starts = np.concatenate([[0], bounds])
    stops = np.concatenate([bounds, [n_steps]])
    for a, b in zip(starts, stops):
        mult = math.exp(spec.day_jitter * rng.standard_normal()) if spec.day_jitter else 1.0
        ind, state = _onoff(rng, b - a, dt, spec.mean_on, spec.mean_off / mult, state)
        out[a:b] = ind
    if spec.hours is not None:
        out *= _in_window(tod, spec.hours)
    return spec.p_on * out


def simulate_transformer(
    appliances: list[ApplianceSpec],
    days: float,
    dt: float = 1.0,
    seed: int = 0,
    t0: float = DEFAULT_T0,
    transformer_id: str = "T0",
    noise_kw: float = 0.0,
) -> HighResSeries:
    """Sum of independent appliance processes sampled every ``dt`` seconds."""
    if not appliances:
        raise InputError("simulate_transformer needs at least one appliance")
    if not 0 < dt <= 60:
        raise ConfigurationError(f"dt must be in (0, 60] seconds, got {dt}")
    n = int(round(days * DAY / dt))
    rng = np.random.default_rng(seed)
    total = np.zeros(n)
    for spec in appliances:
        total += simulate_appliance(spec, n, dt, t0, rng)
    if noise_kw > 0:
        total += noise_kw * rng.standard_normal(n)
    return HighResSeries(transformer_id, float(t0), float(dt), total)


def _cloud_factor(rng, n, dt):
    """Slowly varying attenuation in (0, 1] with occasional deep dips."""
    # AR(1) with ~10 minute memory, mapped through a logistic
    step = max(1, int(round(60.0 / dt)))
    m = n // step + 2
    phi = math.exp(-1.0 / 10.0)
    e = rng.standard_normal(m) * math.sqrt(1 - phi * phi)
    z = np.empty(m)
    z[0] = rng.standard_normal()
    for i in range(1, m):
        z[i] = phi * z[i - 1] + e[i]
    coarse = 1.0 - 0.7 / (1.0 + np.exp(-3.0 * (z - 0.8)))
    x = np.arange(n) / step
    return np.interp(x, np.arange(m), coarse)


def pv_profile(t: np.ndarray) -> np.ndarray:
    """Clear-sky output per kW of capacity: a sine bell from 06:00 to 18:00."""
    tod = np.mod(t, DAY) / 3600.0
    phase = np.clip((tod - 6.0) / 12.0, 0.0, 1.0)
    return np.where((phase > 0) & (phase < 1), np.sin(np.pi * phase) ** 1.5, 0.0)


def add_pv(hr: HighResSeries, capacity_kw: float, seed: int) -> HighResSeries:
    """Subtract rooftop PV generation; the result may be negative."""
    if capacity_kw < 0:
        raise InputError("PV capacity must be non-negative")
    if capacity_kw == 0:
        return hr
    rng = np.random.default_rng(seed)
    gen = capacity_kw * pv_profile(hr.timestamps) * _cloud_factor(rng, len(hr), hr.dt)
    return HighResSeries(hr.transformer_id, hr.t0, hr.dt, hr.values - gen)


# --------------------------------------------------------------------------
# customers and scenarios


def random_customer_appliances(rng) -> list[ApplianceSpec]:
    """Draw a household's appliance set."""
    apps = [
        ApplianceSpec(rng.uniform(1.0, 1.3), 1.0, 1.0, "baseload"),
        # refrigerator and freezer
        ApplianceSpec(rng.uniform(0.12, 0.18), rng.uniform(150, 240), rng.uniform(300, 420)),
        ApplianceSpec(rng.uniform(0.08, 0.12), rng.uniform(120, 200), rng.uniform(330, 450)),
        # lighting / electronics in the evening
        ApplianceSpec(rng.uniform(0.25, 0.4), rng.uniform(300, 600), rng.uniform(150, 300),
                      hours=(rng.uniform(17, 19), rng.uniform(22, 24))),
        ApplianceSpec(rng.uniform(0.1, 0.2), rng.uniform(75, 225), rng.uniform(225, 450),
                      hours=(rng.uniform(6, 8), rng.uniform(22, 24))),
        # air conditioner, compressor cycles of a couple of minutes, afternoon/evening
        ApplianceSpec(rng.uniform(1.5, 2.0), rng.uniform(75, 125), rng.uniform(100, 175),
                      hours=(rng.uniform(10, 12), rng.uniform(22, 24)), day_jitter=0.4),
        # electric water heater
        ApplianceSpec(rng.uniform(2.0, 2.5), rng.uniform(75, 125), rng.uniform(1250, 1750),
                      hours=(6.0, 23.0), day_jitter=0.3),
    ]
    if rng.random() < 0.7:
        # cooking / laundry bursts
        apps.append(ApplianceSpec(rng.uniform(0.8, 1.2), rng.uniform(75, 150), rng.uniform(450, 750),
                                  hours=(rng.uniform(16, 18), 21.0), day_jitter=0.3))
    return apps


def _simulate_customer(spec: ScenarioSpec, transformer_id, customer_id, with_pv):
    rng = np.random.default_rng(derive_seed(spec.seed, transformer_id, customer_id, "apps"))
    apps = random_customer_appliances(rng)
    hr = simulate_transformer(
        apps, spec.days, spec.dt, derive_seed(spec.seed, transformer_id, customer_id, "sim"),
        spec.t0, customer_id,
    )
    if with_pv and rng.random() < spec.pv_share:
        cap = rng.uniform(*spec.pv_capacity_kw)
        hr = add_pv(hr, cap, derive_seed(spec.seed, transformer_id, customer_id, "pv"))
    return hr


def simulate_site(spec: ScenarioSpec, transformer_id: str, role: str, with_pv: bool) -> TransformerData:
    """Simulate one transformer and its customers' smart-meter readings."""
    total = np.zeros(int(round(spec.days * DAY / spec.dt)))
    customers = []
    for c in range(spec.customers_per_transformer):
        cid = f"{transformer_id}_C{c + 1:02d}"
        hr = _simulate_customer(spec, transformer_id, cid, with_pv)
        total += hr.values
        sm = interval_matrix(hr, spec.low_dt).mean(axis=1)
        customers.append(CustomerSeries(cid, transformer_id, spec.t0, spec.low_dt, sm))
    total *= 1.0 + spec.loss_fraction
    if spec.noise_kw > 0:
        rng = np.random.default_rng(derive_seed(spec.seed, transformer_id, "noise"))
        total += spec.noise_kw * rng.standard_normal(total.size)
    hr = HighResSeries(transformer_id, float(spec.t0), float(spec.dt), total)
    return TransformerData(transformer_id, role, hr, customers)


def generate_scenario(spec: ScenarioSpec) -> Scenario:
    teacher_pv = spec.pv in ("teachers_only", "both")
    student_pv = spec.pv in ("students_only", "both")
    teachers = [
        simulate_site(spec, f"T{k + 1:02d}", "teacher", teacher_pv) for k in range(spec.n_teachers)
    ]
    students = [
        simulate_site(spec, f"S{k + 1:02d}", "student", student_pv) for k in range(spec.n_students)
    ]
    return Scenario(spec, teachers, students)
