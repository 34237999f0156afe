"""Radial distribution power flow by backward/forward sweep.

Single-phase positive-sequence model with constant-power loads. Loads are
given in kW (and optionally kvar); without kvar a lagging power factor is
assumed. Many timesteps are solved at once as a batch.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ConfigurationError, ConvergenceError, InputError
from .series import HighResSeries

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 50
DEFAULT_PF = 0.95
CHUNK = 20000


@dataclass(frozen=True)
class Bus:
    id: str
    load_transformer_id: str | None = None


@dataclass(frozen=True)
class Line:
    from_bus: str
    to_bus: str
    r: float
    x: float


@dataclass(frozen=True)
class FeederModel:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    slack: str
    v_slack: float = 1.0
    s_base: float = 100.0  # kVA
    v_base: float = 0.4  # kV, informational only
    pf: float = DEFAULT_PF
    # derived topology, filled in __post_init__
    order: tuple[int, ...] = field(init=False, repr=False, compare=False)
    parent: tuple[int, ...] = field(init=False, repr=False, compare=False)
    impedance: np.ndarray = field(init=False, repr=False, compare=False)
    depth: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "lines", tuple(self.lines))
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise InputError("duplicate bus ids")
        if self.slack not in ids:
            raise InputError(f"slack bus {self.slack!r} is not a bus")
        if not (self.v_slack > 0 and self.s_base > 0 and self.v_base > 0):
            raise ConfigurationError("v_slack, s_base and v_base must be positive")
        if not 0 < self.pf <= 1:
            raise ConfigurationError(f"power factor must be in (0, 1], got {self.pf}")
        index = {b: i for i, b in enumerate(ids)}
        n = len(ids)
        if len(self.lines) != n - 1:
            raise InputError(f"not a tree: {n} buses need {n - 1} lines, got {len(self.lines)}")
        adj: list[list[tuple[int, complex]]] = [[] for _ in range(n)]
        for ln in self.lines:
            if ln.from_bus not in index or ln.to_bus not in index:
                raise InputError(f"line {ln.from_bus}-{ln.to_bus} references an unknown bus")
            if ln.r < 0 or ln.x < 0:
                raise InputError(f"line {ln.from_bus}-{ln.to_bus} has negative impedance")
            a, b = index[ln.from_bus], index[ln.to_bus]
            z = complex(ln.r, ln.x)
            adj[a].append((b, z))
            adj[b].append((a, z))
        root = index[self.slack]
        parent = [-1] * n
        depth = [0] * n
        imp = np.zeros(n, dtype=complex)
        seen = [False] * n
        seen[root] = True
        order = []
        queue = deque([root])
        while queue:
            u = queue.popleft()
            order.append(u)
            for v, z in adj[u]:
                if seen[v]:
                    continue
                seen[v] = True
                parent[v], depth[v], imp[v] = u, depth[u] + 1, z
                queue.append(v)
        if len(order) != n:
            raise InputError("not a tree: feeder graph is disconnected or has a loop")
        imp.setflags(write=False)
        object.__setattr__(self, "order", tuple(order))
        object.__setattr__(self, "parent", tuple(parent))
        object.__setattr__(self, "impedance", imp)
        object.__setattr__(self, "depth", tuple(depth))

    @property
    def bus_ids(self) -> list[str]:
        return [b.id for b in self.buses]

    def index(self, bus_id: str) -> int:
        for i, b in enumerate(self.buses):
            if b.id == bus_id:
                return i
        raise InputError(f"unknown bus {bus_id!r}")

    def deepest_bus(self) -> str:
        """Bus with the most lines to the slack; ties go to the larger path impedance."""
        n = len(self.buses)
        path_z = np.zeros(n)
        for i in self.order[1:]:
            path_z[i] = path_z[self.parent[i]] + abs(self.impedance[i])
        best = max(range(n), key=lambda i: (self.depth[i], path_z[i], -i))
        return self.buses[best].id

    def with_loads(self, transformer_ids) -> "FeederModel":
        """Assign transformers to the non-slack buses in order, cycling if needed."""
        tids = list(transformer_ids)
        if not tids:
            raise InputError("no transformers to assign")
        buses, k = [], 0
        for b in self.buses:
            if b.id == self.slack:
                buses.append(Bus(b.id, None))
            else:
                buses.append(Bus(b.id, tids[k % len(tids)]))
                k += 1
        return replace(self, buses=tuple(buses))

    def to_dict(self) -> dict:
        return {
            "buses": [{"id": b.id, "load_transformer_id": b.load_transformer_id} for b in self.buses],
            "lines": [{"from": l.from_bus, "to": l.to_bus, "r": l.r, "x": l.x} for l in self.lines],
            "slack": self.slack,
            "v_slack": self.v_slack,
            "s_base": self.s_base,
            "v_base": self.v_base,
            "pf": self.pf,
        }

    @classmethod
    def from_dict(cls, d) -> "FeederModel":
        try:
            buses = [Bus(str(b["id"]), b.get("load_transformer_id")) for b in d["buses"]]
            lines = [Line(str(l["from"]), str(l["to"]), float(l["r"]), float(l["x"])) for l in d["lines"]]
            return cls(
                buses, lines, str(d["slack"]), float(d.get("v_slack", 1.0)),
                float(d.get("s_base", 100.0)), float(d.get("v_base", 0.4)), float(d.get("pf", DEFAULT_PF)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed feeder description: {exc}") from None


def load_feeder(path) -> FeederModel:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    return FeederModel.from_dict(d)


def save_feeder(path, feeder: FeederModel) -> None:
    Path(path).write_text(json.dumps(feeder.to_dict(), indent=2) + "\n")


def default_feeder() -> FeederModel:
    """The bundled 12-bus chain-plus-branch feeder (no loads assigned)."""
    text = resources.files("gridfill").joinpath("feeder_default.json").read_text()
    return FeederModel.from_dict(json.loads(text))


# --------------------------------------------------------------------------
# solver


def _kvar(kw, pf):
    return np.asarray(kw, dtype=float) * math.tan(math.acos(pf))


def sweep(feeder: FeederModel, s_pu, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER):
    """Solve a batch of snapshots.

    ``s_pu`` is a complex (T, n_buses) array of per-unit load demand (the
    slack column is ignored). Returns complex voltages (T, n_buses), the
    number of iterations and the per-iteration max |dV| trace. Raises
    ConvergenceError (with the trace) if some snapshot has not converged
    after ``max_iter`` sweeps.
    """
    s = np.atleast_2d(np.asarray(s_pu, dtype=complex))
    n = len(feeder.buses)
    if s.shape[1] != n:
        raise InputError(f"expected {n} bus loads per snapshot, got {s.shape[1]}")
    if not np.all(np.isfinite(s)):
        raise InputError("loads must be finite")
    root = feeder.order[0]
    s = s.copy()
    s[:, root] = 0.0
    v = np.full(s.shape, complex(feeder.v_slack))
    backward = feeder.order[:0:-1]
    forward = feeder.order[1:]
    parent, z = feeder.parent, feeder.impedance
    trace: list[float] = []
    for it in range(1, max_iter + 1):
        with np.errstate(divide="ignore", invalid="ignore"):
            branch = np.conj(s / v)
        for i in backward:
            branch[:, parent[i]] += branch[:, i]
        new = np.empty_like(v)
        new[:, root] = feeder.v_slack
        for i in forward:
            new[:, i] = new[:, parent[i]] - z[i] * branch[:, i]
        delta = np.abs(new - v).max(axis=1)
        v = new
        worst = float(np.nanmax(delta)) if np.any(np.isfinite(delta)) else math.inf
        if not np.all(np.isfinite(delta)):
            worst = math.inf
        trace.append(worst)
        if worst < tol:
            return v, it, trace
    bad = np.flatnonzero(~(delta < tol))
    raise ConvergenceError(
        f"backward/forward sweep did not converge in {max_iter} iterations "
        f"(max |dV| = {trace[-1]:.3g}, {bad.size} snapshot(s) affected)",
        trace=trace,
    )


def _load_matrix(feeder: FeederModel, loads_kw: Mapping, loads_kvar: Mapping | None):
    n = len(feeder.buses)
    ids = feeder.bus_ids
    for b in loads_kw:
        if b not in ids:
            raise InputError(f"load given for unknown bus {b!r}")
    p = np.zeros(n)
    q = np.zeros(n)
    for i, b in enumerate(ids):
        if b in loads_kw:
            p[i] = float(loads_kw[b])
            q[i] = float(loads_kvar[b]) if loads_kvar is not None and b in loads_kvar else float(_kvar(p[i], feeder.pf))
    return (p + 1j * q) / feeder.s_base


def solve_snapshot(
    feeder: FeederModel,
    loads_kw: Mapping[str, float],
    loads_kvar: Mapping[str, float] | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> dict[str, complex]:
    """Complex bus voltages (p.u.) for one set of bus loads keyed by bus id."""
    s = _load_matrix(feeder, loads_kw, loads_kvar)
    v, _, _ = sweep(feeder, s[None, :], tol, max_iter)
    return dict(zip(feeder.bus_ids, v[0].tolist()))


def snapshot_from_average(feeder: FeederModel, hourly_loads: Mapping[str, float], **kw) -> dict[str, complex]:
    """One solve with interval-average loads keyed by transformer id."""
    loads = {}
    for b in feeder.buses:
        if b.load_transformer_id is not None and b.load_transformer_id in hourly_loads:
            loads[b.id] = loads.get(b.id, 0.0) + float(hourly_loads[b.load_transformer_id])
    return solve_snapshot(feeder, loads, **kw)


def power_balance_residual(feeder: FeederModel, v, s_pu) -> np.ndarray:
    """|slack injection - loads - line losses| per snapshot, in p.u.

    Computed from the voltages alone: branch currents are rebuilt from the
    load currents at ``v``.
    """
    v = np.atleast_2d(np.asarray(v, dtype=complex))
    s = np.atleast_2d(np.asarray(s_pu, dtype=complex)).copy()
    root = feeder.order[0]
    s[:, root] = 0.0
    branch = np.conj(s / v)
    for i in feeder.order[:0:-1]:
        branch[:, feeder.parent[i]] += branch[:, i]
    children_current = np.zeros(v.shape[0], dtype=complex)
    for i in feeder.order[1:]:
        if feeder.parent[i] == root:
            children_current += branch[:, i]
    injection = v[:, root] * np.conj(children_current)
    losses = np.zeros(v.shape[0], dtype=complex)
    for i in feeder.order[1:]:
        losses += feeder.impedance[i] * np.abs(branch[:, i]) ** 2
    return np.abs(injection - s.sum(axis=1) - losses)


# --------------------------------------------------------------------------
# time series


@dataclass(frozen=True)
class VoltageTimeSeries:
    bus_ids: tuple[str, ...]
    timestamps: np.ndarray
    magnitude: np.ndarray  # (T, n_buses), p.u.
    balance_residual: np.ndarray | None = field(default=None, repr=False)

    def bus(self, bus_id: str) -> np.ndarray:
        return self.magnitude[:, self.bus_ids.index(bus_id)]

    @property
    def ramps(self) -> np.ndarray:
        """Step-to-step change in |V|, (T - 1, n_buses)."""
        return np.diff(self.magnitude, axis=0)

    def bus_ramps(self, bus_id: str) -> np.ndarray:
        return self.ramps[:, self.bus_ids.index(bus_id)]

    def write_csv(self, path) -> None:
        lines = ["timestamp_s," + ",".join(self.bus_ids)]
        for t, row in zip(self.timestamps.tolist(), self.magnitude.tolist()):
            lines.append(f"{t!r}," + ",".join(repr(x) for x in row))
        Path(path).write_text("\n".join(lines) + "\n")


def run_timeseries(
    feeder: FeederModel,
    series: Mapping[str, HighResSeries],
    stride: int = 1,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    missing: str = "error",
) -> VoltageTimeSeries:
    """Solve every ``stride``-th timestep of aligned transformer load series.

    Each bus takes the series of its ``load_transformer_id``. A bus whose
    transformer has no series raises, or is left unloaded with
    ``missing="zero"``.
    """
    if stride < 1:
        raise ConfigurationError(f"stride must be >= 1, got {stride}")
    if missing not in ("error", "zero"):
        raise ConfigurationError(f"missing must be 'error' or 'zero', got {missing!r}")
    if not series:
        raise InputError("no load series given")
    first = next(iter(series.values()))
    for tid, s in series.items():
        if (s.t0, s.dt, len(s)) != (first.t0, first.dt, len(first)):
            raise InputError(f"series {tid} is not aligned with {first.transformer_id}")
    steps = np.arange(0, len(first), stride)
    n = len(feeder.buses)
    p = np.zeros((steps.size, n))
    for i, b in enumerate(feeder.buses):
        tid = b.load_transformer_id
        if tid is None or i == feeder.order[0]:
            continue
        if tid not in series:
            if missing == "error":
                raise InputError(f"bus {b.id}: no load series for transformer {tid!r}")
            continue
        p[:, i] = series[tid].values[steps]
    s = (p + 1j * _kvar(p, feeder.pf)) / feeder.s_base
    timestamps = first.t0 + steps * first.dt

    mags, resid = [], []
    for lo in range(0, steps.size, CHUNK):
        chunk = s[lo:lo + CHUNK]
        try:
            v, _, _ = sweep(feeder, chunk, tol, max_iter)
        except ConvergenceError as exc:
            bad = _first_unconverged(feeder, chunk, tol, max_iter)
            raise ConvergenceError(f"at timestamp {float(timestamps[lo + bad])!r}: {exc}", exc.trace) from exc
        mags.append(np.abs(v))
        resid.append(power_balance_residual(feeder, v, chunk))
    return VoltageTimeSeries(
        tuple(feeder.bus_ids), timestamps, np.concatenate(mags), np.concatenate(resid)
    )


def _first_unconverged(feeder, chunk, tol, max_iter) -> int:
    for k in range(chunk.shape[0]):
        try:
            sweep(feeder, chunk[k:k + 1], tol, max_iter)
        except ConvergenceError:
            return k
    return 0
