"""Command-line front end: synth, train, enrich, validate, powerflow, report."""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from importlib import resources
from pathlib import Path

import numpy as np
import scipy

from . import __version__, powerflow, synthgen, teachers, validate
from .enrich import EnrichmentConfig, enrich_customers
from .errors import ConfigurationError, ConvergenceError, GridfillError, InputError
from .series import read_customer_csv, read_highres_csv, write_customer_csv, write_series_csv

MANIFEST_NAME = "manifest.json"
EXIT_CODES = {ConfigurationError: 2, InputError: 3, ConvergenceError: 4}


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    n_states: int = 10
    n_levels: int = 10
    low_dt: float = 3600.0
    high_dt: float = 1.0
    min_hours: int = 240
    k_folds: int = 5
    lambda_factors: tuple = (0.1, 0.3, 1.0, 3.0, 10.0)
    sigma_f_factors: tuple = (0.5, 1.0, 2.0)
    sigma_n_factors: tuple = (0.01, 0.05, 0.2)
    weight_mode: str = "inverse"
    mean_preserve: bool = False
    bin_mode: str = "upper_edge"
    allow_negative: bool = False
    loss_fraction: float = 0.02
    stride: int = 1

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        for k in ("lambda_factors", "sigma_f_factors", "sigma_n_factors"):
            if k in d:
                d[k] = tuple(float(v) for v in d[k])
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("lambda_factors", "sigma_f_factors", "sigma_n_factors"):
            d[k] = list(d[k])
        return d

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def train_config(self) -> teachers.TrainConfig:
        return teachers.TrainConfig(
            n_states=self.n_states, n_levels=self.n_levels, low_dt=self.low_dt,
            min_hours=self.min_hours, k_folds=self.k_folds, cv_seed=self.seed,
            lambda_factors=self.lambda_factors, sigma_f_factors=self.sigma_f_factors,
            sigma_n_factors=self.sigma_n_factors,
        )

    def enrich_config(self) -> EnrichmentConfig:
        return EnrichmentConfig(
            n_states=self.n_states, n_levels=self.n_levels, seed=self.seed,
            mean_preserve=self.mean_preserve, bin_mode=self.bin_mode,
            weight_mode=self.weight_mode, allow_negative=self.allow_negative,
            high_dt=self.high_dt, loss_fraction=self.loss_fraction,
        )


# --------------------------------------------------------------------------
# helpers


def _bundled(name: str, kind: str) -> Path | None:
    """Resolve a bare name like ``tiny`` to a bundled JSON file."""
    res = resources.files("gridfill").joinpath("scenarios", f"{name}.json" if kind == "scenario" else f"{name}_run.json")
    return Path(str(res)) if res.is_file() else None


def _read_json(path, kind="config") -> dict:
    p = Path(path)
    if not p.exists():
        alt = _bundled(str(path), kind)
        if alt is None:
            raise InputError(f"{path}: no such file")
        p = alt
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{p}: invalid JSON ({exc})") from None


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def resolve_config(args) -> RunConfig:
    d = _read_json(args.config) if getattr(args, "config", None) else {}
    if os.environ.get("GRIDFILL_SEED"):
        try:
            d["seed"] = int(os.environ["GRIDFILL_SEED"])
        except ValueError:
            raise ConfigurationError(f"GRIDFILL_SEED must be an integer, got {os.environ['GRIDFILL_SEED']!r}") from None
    for key in ("seed", "n_states", "n_levels", "min_hours", "stride", "weight_mode", "loss_fraction"):
        val = getattr(args, key, None)
        if val is not None:
            d[key] = val
    if getattr(args, "mean_preserve", False):
        d["mean_preserve"] = True
    return RunConfig.from_dict(d)


def write_manifest(out_dir, command: str, config: RunConfig | None, outputs, extra=None) -> None:
    manifest = {
        "command": command,
        "seed": config.seed if config else None,
        "config": config.to_dict() if config else None,
        "config_hash": config.hash() if config else None,
        "versions": {
            "gridfill": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "outputs": sorted(str(o) for o in outputs),
    }
    if extra:
        manifest.update(extra)
    _write_json(Path(out_dir) / MANIFEST_NAME, manifest)


def _map(func, items, jobs):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [func(*it) for it in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(func, *zip(*items)))


def _load_roles(data_dir: Path) -> dict:
    path = data_dir / "roles.json"
    if not path.exists():
        raise InputError(f"{data_dir}: no roles.json (run `gridfill synth` or write one)")
    return json.loads(path.read_text())


def _highres_one(path) -> "synthgen.HighResSeries":
    found = read_highres_csv(path)
    if len(found) != 1:
        raise InputError(f"{path}: expected one transformer, found {len(found)}")
    return found[0]


# --------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> None:
    d = _read_json(args.scenario, "scenario")
    if os.environ.get("GRIDFILL_SEED"):
        d["seed"] = int(os.environ["GRIDFILL_SEED"])
    if args.seed is not None:
        d["seed"] = args.seed
    spec = synthgen.ScenarioSpec.from_dict(d)
    out = Path(args.out)
    (out / "highres").mkdir(parents=True, exist_ok=True)
    (out / "customers").mkdir(parents=True, exist_ok=True)
    sites = [(spec, f"T{i + 1:02d}", "teacher") for i in range(spec.n_teachers)]
    sites += [(spec, f"S{i + 1:02d}", "student") for i in range(spec.n_students)]
    done = _map(_synth_site, sites, args.jobs)
    outputs = []
    for td in done:
        hp = Path("highres") / f"{td.transformer_id}.csv"
        cp = Path("customers") / f"{td.transformer_id}.csv"
        write_series_csv(out / hp, [td.highres])
        write_customer_csv(out / cp, td.customers)
        outputs += [hp, cp]
    roles = {
        "teachers": [td.transformer_id for td in done if td.role == "teacher"],
        "students": [td.transformer_id for td in done if td.role == "student"],
    }
    _write_json(out / "roles.json", roles)
    _write_json(out / "scenario.json", spec.to_dict())
    write_manifest(out, "synth", None, outputs + ["roles.json", "scenario.json"],
                   {"seed": spec.seed, "scenario": spec.to_dict()})


def _synth_site(spec, tid, role):
    pv = spec.pv in (("teachers_only", "both") if role == "teacher" else ("students_only", "both"))
    return synthgen.simulate_site(spec, tid, role, pv)


def _train_one(data_dir, tid, cfg):
    hr = _highres_one(data_dir / "highres" / f"{tid}.csv")
    cust_path = data_dir / "customers" / f"{tid}.csv"
    cust = read_customer_csv(cust_path) if cust_path.exists() else []
    return teachers.train_teacher(hr, cust, cfg)


def cmd_train(args) -> None:
    config = resolve_config(args)
    data = Path(args.data)
    ids = args.teachers or _load_roles(data)["teachers"]
    if not ids:
        raise InputError("no teacher transformers to train")
    cfg = config.train_config()
    models = _map(_train_one, [(data, tid, cfg) for tid in ids], args.jobs)
    repo = teachers.Repository(models, cfg)
    out = Path(args.out)
    teachers.save_repository(out, repo)
    write_manifest(out, "train", config, [f"{t}.json" for t in repo.ids] + [teachers.MANIFEST])


def _enrich_one(cust_path, tid, repo, ecfg):
    customers = [c for c in read_customer_csv(cust_path) if tid is None or c.transformer_id == tid]
    if not customers:
        raise InputError(f"{cust_path}: no customers for transformer {tid}")
    return enrich_customers(customers, repo, ecfg, tid)


def cmd_enrich(args) -> None:
    config = resolve_config(args)
    repo = teachers.load_repository(args.repo)
    ecfg = config.enrich_config()
    ecfg.check_repository(repo)
    jobs = []
    if args.data:
        data = Path(args.data)
        ids = args.students or _load_roles(data)["students"]
        jobs = [(data / "customers" / f"{sid}.csv", sid) for sid in ids]
    for path in args.customers or []:
        tids = sorted({c.transformer_id for c in read_customer_csv(path)})
        jobs += [(Path(path), tid) for tid in tids]
    if args.student:
        tids = sorted({c.transformer_id for c in read_customer_csv(args.student)})
        if len(tids) != 1:
            raise InputError(f"{args.student}: --student expects one transformer, found {len(tids)}")
        if jobs:
            raise ConfigurationError("--student cannot be combined with --data or --customers")
        er = _enrich_one(Path(args.student), tids[0], repo, ecfg)
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        write_series_csv(out, [er.series])
        outputs = [out.name]
        if args.meta:
            _write_json(args.meta, er.meta())
            outputs.append(Path(args.meta).name)
        write_manifest(out.parent, "enrich", config, outputs, {"repository_config_hash": repo.config.hash()})
        return
    if not jobs:
        raise InputError("nothing to enrich: give --student, --data or --customers")
    results = _map(_enrich_one, [(p, tid, repo, ecfg) for p, tid in jobs], args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    for er in results:
        tid = er.series.transformer_id
        write_series_csv(out / f"{tid}.csv", [er.series])
        _write_json(out / f"{tid}_meta.json", er.meta())
        outputs += [f"{tid}.csv", f"{tid}_meta.json"]
    write_manifest(out, "enrich", config, outputs, {"repository_config_hash": repo.config.hash()})


def cmd_validate(args) -> None:
    actual = _highres_one(args.actual)
    enriched = _highres_one(args.enriched)
    hi = lo = None
    if args.meta:
        meta = _read_json(args.meta)
        hi = [iv["p_max"] for iv in meta["intervals"]]
        lo = [iv["p_min"] for iv in meta["intervals"]]
    n = min(len(actual), len(enriched))
    actual = type(actual)(actual.transformer_id, actual.t0, actual.dt, actual.values[:n])
    enriched = type(enriched)(enriched.transformer_id, enriched.t0, enriched.dt, enriched.values[:n])
    rep = validate.validate(actual, enriched, args.low_dt, hi, lo, bins=args.bins)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    d = rep.to_dict()
    d["transformer_id"] = actual.transformer_id
    _write_json(out, d)
    outputs = [out.name]
    if args.hist:
        rep.write_histogram_csv(args.hist)
        outputs.append(Path(args.hist).name)
    write_manifest(out.parent, "validate", None, outputs)


def _read_load_dir(path) -> dict:
    p = Path(path)
    files = sorted(p.glob("*.csv")) if p.is_dir() else [p]
    series = {}
    for f in files:
        for s in read_highres_csv(f):
            series[s.transformer_id] = s
    if not series:
        raise InputError(f"{path}: no high-resolution load CSVs")
    return series


def cmd_powerflow(args) -> None:
    config = resolve_config(args)
    feeder = powerflow.load_feeder(args.feeder) if args.feeder else powerflow.default_feeder()
    series = _read_load_dir(args.loads)
    if all(b.load_transformer_id is None for b in feeder.buses):
        feeder = feeder.with_loads(sorted(series))
    if args.start or args.hours:
        first = next(iter(series.values()))
        per_hour = int(round(3600.0 / first.dt))
        lo = args.start * per_hour
        hi = len(first) if not args.hours else lo + args.hours * per_hour
        series = {k: type(s)(k, s.t0 + lo * s.dt, s.dt, s.values[lo:hi]) for k, s in series.items()}
    vts = powerflow.run_timeseries(feeder, series, config.stride, missing="zero")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    vts.write_csv(out)
    deep = feeder.deepest_bus()
    v = vts.bus(deep)
    ramps = vts.bus_ramps(deep)
    summary = {
        "deepest_bus": deep,
        "n_snapshots": int(v.size),
        "stride": config.stride,
        "voltage_percentiles": {str(p): float(np.percentile(v, p)) for p in validate.DEFAULT_PERCENTILES},
        "ramp_percentiles": {
            str(p): float(np.percentile(ramps, p)) for p in validate.DEFAULT_PERCENTILES
        } if ramps.size else {},
        "max_balance_residual": float(vts.balance_residual.max()) if vts.balance_residual is not None else None,
    }
    summary_path = out.with_name(out.stem + "_summary.json")
    _write_json(summary_path, summary)
    write_manifest(out.parent, "powerflow", config, [out.name, summary_path.name])


def cmd_report(args) -> None:
    merged = {"validate": [], "powerflow": []}
    for p in args.validate or []:
        merged["validate"].append(_report_validate(_read_json(p)))
    for p in args.powerflow or []:
        merged["powerflow"].append(_read_json(p))
    if not merged["validate"] and not merged["powerflow"]:
        raise InputError("report needs at least one --validate or --powerflow input")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_json(out, merged)
    write_manifest(out.parent, "report", None, [out.name])


def _report_validate(d: dict) -> dict:
    w = np.asarray(d["wasserstein_per_hour"])
    b = np.asarray(d["baseline_wasserstein_per_hour"])
    return {
        "transformer_id": d.get("transformer_id"),
        "r2_max": d.get("r2_max"),
        "r2_min": d.get("r2_min"),
        "fraction_beating_baseline": d.get("fraction_beating_baseline"),
        "mean_wasserstein": float(w.mean()) if w.size else None,
        "mean_baseline_wasserstein": float(b.mean()) if b.size else None,
        "percentile_table": d.get("percentile_table"),
    }


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gridfill", description=__doc__)
    p.add_argument("--version", action="version", version=f"gridfill {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="run config JSON (or a bundled name such as 'tiny')")
            sp.add_argument("--seed", type=int, help="overrides config seed and GRIDFILL_SEED")
        sp.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                        help="parallel workers across transformers (default: all cores)")

    sp = sub.add_parser("synth", help="generate a synthetic scenario")
    sp.add_argument("--scenario", required=True, help="scenario JSON (or a bundled name such as 'tiny')")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True)
    common(sp, config=False)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="train teacher models into a repository directory")
    sp.add_argument("--data", required=True, help="directory with highres/ and customers/ CSVs")
    sp.add_argument("--teachers", nargs="*", help="teacher ids (default: roles.json)")
    sp.add_argument("--out", required=True)
    sp.add_argument("--n-states", dest="n_states", type=int)
    sp.add_argument("--n-levels", dest="n_levels", type=int)
    sp.add_argument("--min-hours", dest="min_hours", type=int)
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("enrich", help="enrich students from their smart-meter data")
    sp.add_argument("--repo", required=True)
    sp.add_argument("--data", help="scenario directory; enriches the students in roles.json")
    sp.add_argument("--students", nargs="*")
    sp.add_argument("--customers", nargs="*", help="customer CSV files")
    sp.add_argument("--student", help="one student's customer CSV; --out is then the enriched CSV")
    sp.add_argument("--meta", help="with --student: per-interval bounds/levels/weights JSON")
    sp.add_argument("--out", required=True, help="output directory (or file with --student)")
    sp.add_argument("--n-states", dest="n_states", type=int)
    sp.add_argument("--n-levels", dest="n_levels", type=int)
    sp.add_argument("--weight-mode", dest="weight_mode", choices=["proportional", "inverse"])
    sp.add_argument("--loss-fraction", dest="loss_fraction", type=float)
    sp.add_argument("--mean-preserve", dest="mean_preserve", action="store_true")
    common(sp)
    sp.set_defaults(func=cmd_enrich)

    sp = sub.add_parser("validate", help="compare enriched against actual high-resolution load")
    sp.add_argument("--actual", required=True)
    sp.add_argument("--enriched", required=True)
    sp.add_argument("--meta", help="enrichment metadata JSON, for bound R^2")
    sp.add_argument("--low-dt", dest="low_dt", type=float, default=3600.0)
    sp.add_argument("--bins", type=int, default=50)
    sp.add_argument("--hist", help="optional histogram CSV output")
    sp.add_argument("--report", "--out", dest="out", required=True, help="report JSON")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("powerflow", help="time-series power flow over a radial feeder")
    sp.add_argument("--feeder", help="feeder JSON (default: bundled 12-bus feeder)")
    sp.add_argument("--loads", required=True, help="high-resolution CSV file or directory")
    sp.add_argument("--out", required=True, help="voltage CSV")
    sp.add_argument("--stride", type=int)
    sp.add_argument("--start", type=int, default=0, help="first hour to solve")
    sp.add_argument("--hours", type=int, default=0, help="number of hours (0: all)")
    common(sp)
    sp.set_defaults(func=cmd_powerflow)

    sp = sub.add_parser("report", help="merge validate and powerflow outputs")
    sp.add_argument("--validate", nargs="*")
    sp.add_argument("--powerflow", nargs="*")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except GridfillError as exc:
        code = next((c for cls, c in EXIT_CODES.items() if isinstance(exc, cls)), 1)
        err = {"error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, ConvergenceError) and exc.trace:
            err["trace"] = exc.trace
        print(json.dumps(err), file=sys.stderr)
        return code
    except (OSError, KeyError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
