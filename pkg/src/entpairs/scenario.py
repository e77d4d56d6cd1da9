"""Scenario configs, sweep execution and CSV/JSON emission for the CLI.

Every command writes one CSV table plus a JSON sidecar ``<file>.json``.  The
sidecar holds the schema id, the column list, the command and the complete
scenario, so :func:`replay` can rerun it and reproduce the table.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .dynamics import EvolutionConfig, IntegrationError, Observables, TimeSeries, evolve
from .entanglement import wootters_concurrence, reduced_pair_state
from .liouvillian import (
    SolverError,
    build_liouvillian,
    leading_eigenvalues,
    optimize_detuning,
    steady_state_nullspace,
    with_base_detuning,
)
from .models import DisorderSpec, ModelSpec, SpecError, apply_disorder

log = logging.getLogger(__name__)

AXES = ("n_bar", "gamma", "delta", "r_max")
SCHEMAS = {
    "steady": "entpairs.steady/1",
    "spectrum": "entpairs.spectrum/1",
    "optimize-detuning": "entpairs.spectrum/1",
    "disorder": "entpairs.disorder/1",
    "disorder-summary": "entpairs.disorder-summary/1",
    "evolve": "entpairs.timeseries/1",
}
INDETERMINATE = "indeterminate"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Scan:
    axis: str
    grid: tuple[float, ...]
    step: float = 0.05  # detuning offset between consecutive pairs (axis "delta")

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(float(x) for x in self.grid))
        if self.axis not in AXES:
            raise ConfigError(f"unknown scan axis {self.axis!r}")
        if not self.grid:
            raise ConfigError("scan grid is empty")
        if list(self.grid) != sorted(self.grid):
            raise ConfigError("scan grid must be sorted")


@dataclass(frozen=True)
class ScenarioConfig:
    model: ModelSpec
    evolution: Optional[EvolutionConfig] = None
    scan: Optional[Scan] = None
    pairs: Optional[tuple[tuple[int, int], ...]] = None  # None: every (j, -j)
    output_path: Optional[str] = None
    spectrum: bool = True  # certify uniqueness and report the gap in steady sweeps
    k: int = 4

    def __post_init__(self):
        if self.pairs is not None:
            object.__setattr__(self, "pairs", tuple((int(a), int(b)) for a, b in self.pairs))

    @property
    def mode(self) -> str:
        return "scan" if self.scan is not None else "single"

    def pair_list(self) -> tuple[tuple[int, int], ...]:
        if self.pairs is not None:
            return self.pairs
        return tuple((j, -j) for j in range(1, self.model.N + 1))

    def points(self) -> list[tuple[float, ModelSpec]]:
        """``(axis value, spec)`` per grid point; a single run yields one NaN-labelled point."""
        if self.scan is None:
            return [(math.nan, self.model)]
        return [(x, spec_at(self.model, self.scan, x)) for x in self.scan.grid]

    def to_dict(self) -> dict:
        d = {"model": self.model.to_dict(), "spectrum": self.spectrum, "k": self.k}
        if self.evolution is not None:
            d["evolution"] = self.evolution.to_dict()
        if self.scan is not None:
            d["scan"] = {"axis": self.scan.axis, "grid": list(self.scan.grid), "step": self.scan.step}
        if self.pairs is not None:
            d["pairs"] = [list(p) for p in self.pairs]
        if self.output_path is not None:
            d["output_path"] = self.output_path
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {"model", "evolution", "scan", "pairs", "output_path", "spectrum", "k"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        if "model" not in d:
            raise ConfigError("config needs a 'model' section")
        try:
            model = ModelSpec.from_dict(d["model"])
            evo = d.get("evolution")
            if evo is not None and "t_grid" not in evo:
                evo = dict(evo)
                grid = np.linspace(0.0, float(evo.pop("t_final")), int(evo.pop("n_points", 101)))
                evo["t_grid"] = tuple(grid)
            evolution = EvolutionConfig.from_dict(evo) if evo is not None else None
            scan = Scan(**d["scan"]) if d.get("scan") is not None else None
        except (SpecError, TypeError, KeyError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return cls(model, evolution, scan, d.get("pairs"), d.get("output_path"),
                   bool(d.get("spectrum", True)), int(d.get("k", 4)))

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc


def spec_at(spec: ModelSpec, scan: Scan, x: float) -> ModelSpec:
    if scan.axis == "n_bar":
        return replace(spec, n_bar=x)
    if scan.axis == "gamma":
        return replace(spec, gamma=x)
    if scan.axis == "delta":
        return with_base_detuning(spec, x, scan.step)
    dis = spec.disorder
    if dis is None:
        raise ConfigError("r_max scan needs a disorder section")
    return replace(spec, disorder=replace(dis, r_max=x))


def with_seed(cfg: ScenarioConfig, seed: Optional[int]) -> ScenarioConfig:
    """Override the disorder and trajectory seeds."""
    if seed is None:
        return cfg
    model = cfg.model
    if model.disorder is not None:
        model = replace(model, disorder=replace(model.disorder, seed=seed))
    evo = replace(cfg.evolution, seed=seed) if cfg.evolution is not None else None
    return replace(cfg, model=model, evolution=evo)


# -- tables --------------------------------------------------------------------

@dataclass
class Table:
    schema: str
    columns: list[str]
    rows: list[list] = field(default_factory=list)

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def write(self, path, command: str, scenario: Optional[ScenarioConfig], extra: Optional[dict] = None):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            for row in self.rows:
                w.writerow([_fmt(v) for v in row])
        meta = {"schema": self.schema, "columns": self.columns, "command": command,
                "version": __version__,
                "scenario": scenario.to_dict() if scenario is not None else None}
        if extra:
            meta.update(extra)
        side = path.with_suffix(path.suffix + ".json")
        side.write_text(json.dumps(meta, indent=2, sort_keys=True))
        return path, side


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def read_table(path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


@dataclass
class SweepResult:
    """Per-grid-point steady-state results; disorder sweeps also keep every realization."""

    axis: str
    values: list[float]
    pairs: tuple[tuple[int, int], ...]
    concurrence: list[list]  # per point, per pair: float or INDETERMINATE
    null_dim: list = field(default_factory=list)
    gap: list = field(default_factory=list)
    status: list = field(default_factory=list)
    realizations: Optional[list[np.ndarray]] = None  # per point: (n_real, n_pairs), NaN on failure
    failures: Optional[list[int]] = None

    def mean(self, i: int) -> np.ndarray:
        return np.nanmean(self.realizations[i], axis=0)

    def std(self, i: int) -> np.ndarray:
        return np.nanstd(self.realizations[i], axis=0)

    def pair_average(self, i: int) -> np.ndarray:
        """Pair-averaged concurrence of every realization at point ``i``."""
        return np.nanmean(self.realizations[i], axis=1)


def _pair_columns(pairs):
    return [f"C_{a}_{b}" for a, b in pairs]


def _axis_name(cfg: ScenarioConfig) -> str:
    return cfg.scan.axis if cfg.scan is not None else "run"


def _map(fn, items, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _concurrences(rho, pairs):
    return [wootters_concurrence(reduced_pair_state(rho, a, b)) for a, b in pairs]


# -- commands ------------------------------------------------------------------

def run_steady(cfg: ScenarioConfig, threads: int = 1, tol_null: Optional[float] = None) -> SweepResult:
    pairs = cfg.pair_list()

    def one(point):
        x, spec = point
        try:
            L = build_liouvillian(spec)
            if cfg.spectrum:
                sr = leading_eigenvalues(L, k=cfg.k, tol_null=tol_null)
                nd, gap, status = sr.null_dim, sr.gap, sr.status
            else:
                nd, gap, status = math.nan, math.nan, "unchecked"
            if status in ("unique", "unchecked"):
                conc = _concurrences(steady_state_nullspace(L), pairs)
            else:
                conc = [INDETERMINATE] * len(pairs)
        except (SolverError, IntegrationError) as exc:
            raise SolverError(f"at {_axis_name(cfg)} = {x}: {exc}") from exc
        return conc, nd, gap, status

    out = _map(one, cfg.points(), threads)
    return SweepResult(_axis_name(cfg), [p[0] for p in cfg.points()], pairs,
                       [o[0] for o in out], [o[1] for o in out], [o[2] for o in out],
                       [o[3] for o in out])


def steady_table(res: SweepResult) -> Table:
    t = Table(SCHEMAS["steady"], [res.axis] + _pair_columns(res.pairs) + ["null_dim", "gap", "status"])
    for i, x in enumerate(res.values):
        t.rows.append([x] + list(res.concurrence[i]) + [res.null_dim[i], res.gap[i], res.status[i]])
    return t


def run_spectrum(cfg: ScenarioConfig, threads: int = 1, tol_null: Optional[float] = None) -> Table:
    k = cfg.k
    cols = [_axis_name(cfg)] + [f"re_lambda_{i}" for i in range(k)] + \
        [f"im_lambda_{i}" for i in range(k)] + ["gap", "null_dim", "status"]
    table = Table(SCHEMAS["spectrum"], cols)

    def one(point):
        x, spec = point
        try:
            return leading_eigenvalues(build_liouvillian(spec), k=k, tol_null=tol_null)
        except SolverError as exc:
            raise SolverError(f"at {_axis_name(cfg)} = {x}: {exc}") from exc

    for (x, _), sr in zip(cfg.points(), _map(one, cfg.points(), threads)):
        table.rows.append([x] + _eig_cells(sr, k) + [sr.gap, sr.null_dim, sr.status])
    return table


def _eig_cells(sr, k):
    ev = list(sr.eigenvalues[:k]) + [complex(math.nan, math.nan)] * max(0, k - len(sr.eigenvalues))
    return [float(np.real(z)) for z in ev] + [float(np.imag(z)) for z in ev]


def run_optimize(cfg: ScenarioConfig, threads: int = 1) -> tuple[Table, float]:
    if cfg.scan is None or cfg.scan.axis != "delta":
        raise ConfigError("optimize-detuning needs a scan over axis 'delta'")
    ex = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        scan = optimize_detuning(cfg.model, cfg.scan.grid, cfg.scan.step, k=cfg.k, executor=ex)
    finally:
        if ex is not None:
            ex.shutdown()
    k = cfg.k
    cols = ["delta"] + [f"re_lambda_{i}" for i in range(k)] + [f"im_lambda_{i}" for i in range(k)] + \
        ["gap", "null_dim", "status"]
    table = Table(SCHEMAS["optimize-detuning"], cols)
    for x, sr in zip(scan.grid, scan.spectra):
        table.rows.append([float(x)] + _eig_cells(sr, k) + [sr.gap, sr.null_dim, sr.status])
    return table, scan.best


def run_disorder(cfg: ScenarioConfig, threads: int = 1) -> SweepResult:
    if cfg.model.disorder is None:
        raise ConfigError("disorder command needs a disorder section in the model")
    pairs = cfg.pair_list()
    points = cfg.points()
    per_point, failures = [], []
    for x, spec in points:
        n = spec.disorder.realizations

        def one(i, spec=spec):
            try:
                rho = steady_state_nullspace(build_liouvillian(apply_disorder(spec, i)))
                return _concurrences(rho, pairs)
            except SolverError as exc:
                log.warning("realization %d at %s failed: %s", i, x, exc)
                return [math.nan] * len(pairs)

        if spec.disorder.r_max == 0.0:
            # every realization equals the undisordered model
            vals = [one(0)] * n
        else:
            vals = _map(one, range(n), threads)
        arr = np.array(vals, dtype=float)
        per_point.append(arr)
        failures.append(int(np.isnan(arr).any(axis=1).sum()))
    means = [list(np.nanmean(a, axis=0)) for a in per_point]
    return SweepResult(_axis_name(cfg), [p[0] for p in points], pairs, means,
                       realizations=per_point, failures=failures)


def disorder_tables(res: SweepResult) -> tuple[Table, Table]:
    cols = _pair_columns(res.pairs)
    full = Table(SCHEMAS["disorder"], [res.axis, "realization"] + cols)
    stats = [f"{c}_{s}" for c in cols for s in ("mean", "std", "min", "max")]
    summary = Table(SCHEMAS["disorder-summary"],
                    [res.axis] + stats + ["C_avg_mean", "C_avg_std", "n_ok", "n_failed"])
    for i, x in enumerate(res.values):
        arr = res.realizations[i]
        for r, row in enumerate(arr):
            full.rows.append([x, r] + [float(v) for v in row])
        cells = []
        for p in range(len(res.pairs)):
            col = arr[:, p]
            cells += [float(np.nanmean(col)), float(np.nanstd(col)),
                      float(np.nanmin(col)), float(np.nanmax(col))]
        avg = res.pair_average(i)
        summary.rows.append([x] + cells + [float(np.nanmean(avg)), float(np.nanstd(avg)),
                                           len(arr) - res.failures[i], res.failures[i]])
    return full, summary


def run_evolve(cfg: ScenarioConfig) -> list[tuple[float, TimeSeries]]:
    if cfg.evolution is None:
        raise ConfigError("evolve command needs an evolution section")
    obs = Observables(pairs=cfg.pair_list())
    out = []
    for x, spec in cfg.points():
        out.append((x, evolve(spec, cfg.evolution, observables=obs)))
    return out


# -- output orchestration ------------------------------------------------------

def _target(out_dir: Path, cfg: ScenarioConfig, default: str) -> Path:
    return out_dir / (cfg.output_path or default)


def execute(command: str, cfg: ScenarioConfig, out_dir, threads: int = 1,
            tol_null: Optional[float] = None) -> dict:
    """Run one command and write its outputs; returns a summary with the written paths."""
    out_dir = Path(out_dir)
    summary: dict = {"command": command, "files": []}
    if command == "steady":
        res = run_steady(cfg, threads, tol_null)
        path = _target(out_dir, cfg, "steady.csv")
        summary["files"] += steady_table(res).write(path, command, cfg, {"tol_null": tol_null})
        summary["result"] = res
        summary["indeterminate"] = any(s not in ("unique", "unchecked") for s in res.status)
    elif command == "spectrum":
        table = run_spectrum(cfg, threads, tol_null)
        path = _target(out_dir, cfg, "spectrum.csv")
        summary["files"] += table.write(path, command, cfg, {"tol_null": tol_null})
        summary["result"] = table
        summary["indeterminate"] = any(s != "unique" for s in table.column("status"))
    elif command == "optimize-detuning":
        table, best = run_optimize(cfg, threads)
        path = _target(out_dir, cfg, "optimize_detuning.csv")
        summary["files"] += table.write(path, command, cfg, {"delta_star": best})
        summary["result"] = best
    elif command == "disorder":
        res = run_disorder(cfg, threads)
        path = _target(out_dir, cfg, "disorder.csv")
        full, stats = disorder_tables(res)
        summary["files"] += full.write(path, command, cfg)
        summary["files"] += stats.write(path.with_name(path.stem + "_summary.csv"), command, cfg)
        summary["result"] = res
    elif command == "evolve":
        runs = run_evolve(cfg)
        base = _target(out_dir, cfg, "evolve.csv")
        for x, series in runs:
            name = base if math.isnan(x) else base.with_name(f"{base.stem}_{_axis_name(cfg)}={x:g}.csv")
            series.provenance = {"command": command, "version": __version__,
                                 "scenario": cfg.to_dict(), "axis_value": x}
            summary["files"] += series.write(name)
        summary["result"] = runs
    else:
        raise ConfigError(f"unknown command {command!r}")
    summary["files"] = [str(p) for p in summary["files"]]
    return summary


def replay(sidecar, out_dir, threads: int = 1) -> dict:
    """Rerun the command recorded in a sidecar into ``out_dir``."""
    meta = json.loads(Path(sidecar).read_text())
    cfg = ScenarioConfig.from_dict(meta["scenario"])
    return execute(meta["command"], cfg, out_dir, threads, meta.get("tol_null"))


__all__ = [
    "ConfigError", "DisorderSpec", "Scan", "ScenarioConfig", "SweepResult", "Table",
    "execute", "replay", "run_disorder", "run_evolve", "run_spectrum", "run_steady",
]
