"""Time evolution: master-equation integration and quantum trajectories.

Both integrators report the same observables on a time grid: pair
concurrences of selected qubit pairs and excitation numbers of selected sites.
Trajectory runs additionally report standard errors.  The concurrence of an
ensemble is the concurrence of the ensemble-averaged reduced state (the
quantity the master equation gives); its standard error is a leave-one-out
jackknife estimate.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .entanglement import wootters_concurrence
from .liouvillian import Superoperator, build_liouvillian, unvec, vec
from .models import ModelSpec, build_space
from .tensor import (
    SIGMA_MINUS,
    DensityMatrix,
    HilbertSpace,
    PureState,
    basis_state,
    boson_annihilate,
    local_embed,
    min_eigenvalue,
    partial_trace,
)

log = logging.getLogger(__name__)

METHODS = ("master", "mcwf")
TIMESERIES_SCHEMA = "entpairs.timeseries/1"
JUMP_TIME_RTOL = 1e-10
COND_MAX = 1e6
POSITIVITY_TOL = 1e-7
MATRIX_MAX_D = 512  # assembled generator has O(d^2 * nnz(H)) entries


class IntegrationError(RuntimeError):
    pass


class FitRefused(ValueError):
    def __init__(self, msg: str, diagnostic: dict):
        super().__init__(msg)
        self.diagnostic = diagnostic


@dataclass(frozen=True)
class EvolutionConfig:
    t_grid: tuple[float, ...]
    method: str = "master"
    n_traj: int = 500
    seed: int = 0
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "t_grid", tuple(float(t) for t in self.t_grid))
        t = np.asarray(self.t_grid)
        if t.size == 0 or t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ValueError("t_grid must start at 0 and increase strictly")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.n_traj < 1 or self.threads < 1:
            raise ValueError("n_traj and threads must be positive")

    @classmethod
    def linear(cls, t_final: float, n_points: int, **kw) -> "EvolutionConfig":
        return cls(tuple(np.linspace(0.0, t_final, n_points)), **kw)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EvolutionConfig":
        return cls(**d)


@dataclass(frozen=True)
class Observables:
    pairs: tuple[tuple[int, int], ...] = ()
    occupations: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple((int(a), int(b)) for a, b in self.pairs))
        object.__setattr__(self, "occupations", tuple((str(k), int(j)) for k, j in self.occupations))

    def columns(self) -> list[str]:
        return [concurrence_column(p) for p in self.pairs] + [occupation_column(l) for l in self.occupations]


def concurrence_column(pair) -> str:
    return f"C_{pair[0]}_{pair[1]}"


def occupation_column(label) -> str:
    return f"n_{label[0]}_{label[1]}"


def default_observables(spec: ModelSpec) -> Observables:
    space = build_space(spec)
    return Observables(
        pairs=tuple((j, -j) for j in range(1, spec.N + 1)),
        occupations=tuple(lab for lab in space.labels if lab[0] == "c"),
    )


def default_initial_state(spec: ModelSpec) -> PureState:
    """Cavities in the (squeezed-frame) vacuum, every qubit in ``|->``."""
    space = build_space(spec)
    # boson vacuum is index 0; qubits (companions included) rest in |-> at index 1
    return basis_state(space, [1 if s.kind == "qubit" else 0 for s in space.sites])


def number_operator(space: HilbertSpace, label) -> np.ndarray:
    site = space.site(label)
    low = SIGMA_MINUS if site.kind == "qubit" else boson_annihilate(site.local_dim - 1)
    A = local_embed(space, label, low).matrix
    return (A.conj().T @ A).tocsr()


@dataclass
class TimeSeries:
    times: np.ndarray
    values: dict[str, np.ndarray]
    stderr: dict[str, np.ndarray] = field(default_factory=dict)
    diagnostics: dict[str, np.ndarray] = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    # density matrix at the last grid time (master runs only, not serialized)
    final_state: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        for name, col in self.values.items():
            if name.startswith("C_") and np.any((col < 0) | (col > 1)):
                raise ValueError(f"{name} leaves [0, 1]")
        for col in self.stderr.values():
            if np.any(col < 0):
                raise ValueError("negative standard error")

    @property
    def columns(self) -> list[str]:
        cols = ["time"]
        for name in self.values:
            cols.append(name)
            if name in self.stderr:
                cols.append(name + "_se")
        return cols

    def table(self) -> np.ndarray:
        arrays = [self.times]
        for name in self.values:
            arrays.append(self.values[name])
            if name in self.stderr:
                arrays.append(self.stderr[name])
        return np.column_stack(arrays)

    def write(self, path) -> tuple[Path, Path]:
        """CSV with a JSON sidecar ``<path>.json`` holding the provenance."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(path, self.table(), delimiter=",", header=",".join(self.columns),
                   comments="", fmt="%.17g")
        side = path.with_suffix(path.suffix + ".json")
        meta = {"schema": TIMESERIES_SCHEMA, "columns": self.columns,
                "diagnostics": {k: _jsonable(v) for k, v in self.diagnostics.items()},
                **self.provenance}
        side.write_text(json.dumps(meta, indent=2, sort_keys=True))
        return path, side

    @classmethod
    def read(cls, path) -> "TimeSeries":
        path = Path(path)
        meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
        data = np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1))
        cols = meta["columns"]
        values, stderr = {}, {}
        for i, name in enumerate(cols[1:], start=1):
            if name.endswith("_se"):
                stderr[name[:-3]] = data[:, i]
            else:
                values[name] = data[:, i]
        prov = {k: v for k, v in meta.items() if k not in ("schema", "columns", "diagnostics")}
        diag = {k: np.asarray(v) if isinstance(v, list) else v
                for k, v in meta.get("diagnostics", {}).items()}
        return cls(data[:, 0], values, stderr, diag, prov)

    def check_hygiene(self, trace_tol: float = 1e-8, psd_tol: float = 1e-7,
                      herm_tol: float = 1e-8) -> None:
        d = self.diagnostics
        if "trace_error" in d and np.max(d["trace_error"]) >= trace_tol:
            raise IntegrationError(f"trace drift {np.max(d['trace_error']):.3e}")
        if "min_eigenvalue" in d and np.min(d["min_eigenvalue"]) <= -psd_tol:
            raise IntegrationError(f"positivity violated: {np.min(d['min_eigenvalue']):.3e}")
        if "hermiticity_error" in d and np.max(d["hermiticity_error"]) >= herm_tol:
            raise IntegrationError(f"Hermiticity lost: {np.max(d['hermiticity_error']):.3e}")


def _jsonable(v):
    return np.asarray(v).tolist() if isinstance(v, np.ndarray) else v


def _provenance(spec: Optional[ModelSpec], config: EvolutionConfig, obs: Observables) -> dict:
    return {"spec": spec.to_dict() if spec is not None else None,
            "config": config.to_dict(),
            "observables": {"pairs": [list(p) for p in obs.pairs],
                            "occupations": [list(l) for l in obs.occupations]}}


def _clip_state(m: np.ndarray, tol: float = POSITIVITY_TOL) -> np.ndarray:
    """Project a reduced state with round-off negativity back onto the PSD cone."""
    w, V = np.linalg.eigh(0.5 * (m + m.conj().T))
    if w[0] < -tol:
        raise IntegrationError(f"reduced state has eigenvalue {w[0]:.3e}")
    if w[0] >= 0:
        return m
    w = np.clip(w, 0.0, None)
    return (V * (w / w.sum())) @ V.conj().T


def _pair_labels(pair):
    return [("q", pair[0]), ("q", pair[1])]


# -- master equation -----------------------------------------------------------

def integrate_system(L: Superoperator, rho0: np.ndarray, config: EvolutionConfig,
                     observables: Observables) -> TimeSeries:
    """Adaptive RK45 on ``vec(rho)``.

    The assembled sparse generator is used up to ``d = MATRIX_MAX_D``
    (one sparse product per stage is about twice as fast as the
    matrix-free form); larger spaces use the matrix-free generator.
    """
    d = L.d
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (d, d):
        raise ValueError("initial state does not match the Liouvillian space")
    t = np.asarray(config.t_grid)
    if t.size > 1:
        rhs = L.matrix.dot if d <= MATRIX_MAX_D else L.apply_vec
        sol = solve_ivp(lambda _t, y: rhs(y), (0.0, t[-1]), vec(rho0), method="RK45",
                        t_eval=t, rtol=config.rel_tol, atol=config.abs_tol)
        if sol.status != 0:
            raise IntegrationError(f"integration failed: {sol.message}")
        states = sol.y.T
    else:
        states = vec(rho0)[None, :]
    numbers = [number_operator(L.space, lab) for lab in observables.occupations]
    values = {c: np.empty(t.size) for c in observables.columns()}
    diag = {k: np.empty(t.size) for k in ("trace_error", "hermiticity_error", "min_eigenvalue")}
    for i, y in enumerate(states):
        rho = unvec(y, d)
        diag["trace_error"][i] = abs(np.trace(rho) - 1.0)
        diag["hermiticity_error"][i] = np.abs(rho - rho.conj().T).max()
        diag["min_eigenvalue"][i] = min_eigenvalue(rho)
        dm = DensityMatrix(L.space, 0.5 * (rho + rho.conj().T))
        for pair in observables.pairs:
            red = partial_trace(dm, _pair_labels(pair)).matrix
            values[concurrence_column(pair)][i] = wootters_concurrence(_clip_state(red))
        for lab, n in zip(observables.occupations, numbers):
            # Tr(n rho) for Hermitian n
            values[occupation_column(lab)][i] = float(np.real(np.sum(n.multiply(rho.T))))
    return TimeSeries(t.copy(), values, {}, diag, final_state=unvec(states[-1], d))


def integrate_master(spec: ModelSpec, rho0, config: EvolutionConfig,
                     observables: Optional[Observables] = None) -> TimeSeries:
    if config.method != "master":
        raise ValueError("config.method must be 'master'")
    observables = default_observables(spec) if observables is None else observables
    L = build_liouvillian(spec)
    if isinstance(rho0, PureState):
        rho0 = rho0.density()
    m = rho0.matrix if isinstance(rho0, DensityMatrix) else np.asarray(rho0)
    DensityMatrix(L.space, m).validate()
    series = integrate_system(L, m, config, observables)
    series.provenance = _provenance(spec, config, observables)
    return series


# -- quantum trajectories ------------------------------------------------------

class _Propagator:
    """``psi -> exp(-i H_eff tau) psi`` for a fixed non-Hermitian ``H_eff``."""

    def __init__(self, H_eff):
        self.H = H_eff.tocsr()
        lam, V = np.linalg.eig(self.H.toarray())
        if np.linalg.cond(V) < COND_MAX:
            self.lam, self.V, self.Vinv = lam, V, np.linalg.inv(V)
        else:
            self.lam = None

    def bind(self, psi: np.ndarray):
        if self.lam is not None:
            c = self.Vinv @ psi
            return lambda tau: self.V @ (np.exp(-1j * self.lam * tau) * c)
        A = -1j * self.H
        return lambda tau: spla.expm_multiply(A * tau, psi) if tau > 0 else psi.copy()


@dataclass
class _TrajectoryResult:
    reduced: np.ndarray  # (n_times, n_pairs, 4, 4)
    numbers: np.ndarray  # (n_times, n_occ)
    jumped: np.ndarray  # (n_times,) bool, at least one jump so far
    n_jumps: int


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def _pair_reducer(space: HilbertSpace, pairs):
    dims = space.dims
    plans = []
    for pair in pairs:
        pos = sorted(space.position(lab) for lab in _pair_labels(pair))
        rest = [k for k in range(len(dims)) if k not in pos]
        plans.append((pos + rest, int(np.prod([dims[k] for k in pos]))))

    def reduce(psi):
        t = psi.reshape(dims)
        out = []
        for perm, dk in plans:
            m = np.transpose(t, perm).reshape(dk, -1)
            out.append(m @ m.conj().T)
        return out

    return reduce


def _run_trajectory(index: int, L: Superoperator, prop: _Propagator, psi0: np.ndarray,
                    t_grid: np.ndarray, seed: int, reduce, numbers) -> _TrajectoryResult:
    rng = trajectory_rng(seed, index)
    jumps = [(A.tocsr(), rate) for A, rate in L.jumps]
    n_t = t_grid.size
    red_list, num_rows = [], np.empty((n_t, len(numbers)))
    jumped = np.zeros(n_t, dtype=bool)

    psi = psi0.copy()  # unnormalized since the last jump
    t = 0.0
    r = rng.random()
    count = 0

    def record(k, state):
        phi = state / np.linalg.norm(state)
        red_list.append(reduce(phi))
        for m, n in enumerate(numbers):
            num_rows[k, m] = np.real(np.vdot(phi, n @ phi))
        jumped[k] = count > 0

    record(0, psi)
    for k in range(1, n_t):
        target = t_grid[k]
        while t < target:
            evolve = prop.bind(psi)
            step = target - t
            while True:
                phi = evolve(step)
                n2 = float(np.real(np.vdot(phi, phi)))
                if np.isfinite(n2) and n2 > 1e-300:
                    break
                step *= 0.5  # norm underflow: reject and halve
                if step < 1e-14:
                    raise IntegrationError("norm underflow in trajectory evolution")
            if n2 > r:
                psi, t = phi, t + step
                continue
            lo, hi = 0.0, step
            while hi - lo > JUMP_TIME_RTOL * max(t + hi, 1.0):
                mid = 0.5 * (lo + hi)
                phi_mid = evolve(mid)
                if np.real(np.vdot(phi_mid, phi_mid)) > r:
                    lo = mid
                else:
                    hi = mid
            psi, t = evolve(hi), t + hi
            weights = np.array([rate * np.real(np.vdot(A @ psi, A @ psi)) for A, rate in jumps])
            ch = int(np.searchsorted(np.cumsum(weights), rng.random() * weights.sum(), side="right"))
            ch = min(ch, len(jumps) - 1)
            new = jumps[ch][0] @ psi
            psi = new / np.linalg.norm(new)
            count += 1
            r = rng.random()
        record(k, psi)
    return _TrajectoryResult(np.array(red_list), num_rows, jumped, count)


def _jackknife_concurrence(reduced: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Concurrence of the mean state and its leave-one-out standard error.

    ``reduced`` has shape ``(n_traj, n_times, 4, 4)``.
    """
    n, n_t = reduced.shape[:2]
    total = reduced.sum(axis=0)
    value = np.array([wootters_concurrence(_herm(total[k] / n)) for k in range(n_t)])
    if n < 2:
        return value, np.zeros(n_t)
    se = np.empty(n_t)
    for k in range(n_t):
        loo = np.array([wootters_concurrence(_herm((total[k] - reduced[i, k]) / (n - 1)))
                        for i in range(n)])
        se[k] = math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    return value, se


def _herm(m):
    return 0.5 * (m + m.conj().T)


def mcwf_system(L: Superoperator, psi0: np.ndarray, config: EvolutionConfig,
                observables: Observables) -> TimeSeries:
    """Quantum-jump unraveling of the generator ``L``.

    Between jumps the unnormalized state follows ``exp(-i H_eff t)``; a jump
    happens when its squared norm falls to a uniform random threshold, with
    the jump time located by bisection.  Trajectory ``i`` draws from the
    stream ``(seed, i)``, and the ensemble is summed in index order.
    """
    psi0 = np.asarray(psi0, dtype=complex)
    if psi0.shape != (L.d,):
        raise ValueError("initial state does not match the Liouvillian space")
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-12:
        raise ValueError("initial state must be normalized")
    t = np.asarray(config.t_grid)
    prop = _Propagator(L.H_eff)
    reduce = _pair_reducer(L.space, observables.pairs)
    numbers = [number_operator(L.space, lab) for lab in observables.occupations]

    def one(i):
        return _run_trajectory(i, L, prop, psi0, t, config.seed, reduce, numbers)

    if config.threads > 1:
        with ThreadPoolExecutor(config.threads) as ex:
            results = list(ex.map(one, range(config.n_traj)))
    else:
        results = [one(i) for i in range(config.n_traj)]

    n = config.n_traj
    values, stderr = {}, {}
    if observables.pairs:
        reduced = np.stack([r.reduced for r in results])  # (n, n_t, n_pairs, 4, 4)
        for p, pair in enumerate(observables.pairs):
            v, se = _jackknife_concurrence(reduced[:, :, p])
            values[concurrence_column(pair)], stderr[concurrence_column(pair)] = v, se
    if observables.occupations:
        nums = np.stack([r.numbers for r in results])
        for m, lab in enumerate(observables.occupations):
            col = occupation_column(lab)
            values[col] = nums[:, :, m].mean(axis=0)
            stderr[col] = _sem(nums[:, :, m])
    jumped = np.stack([r.jumped for r in results]).astype(float)
    values["jumped"] = jumped.mean(axis=0)
    stderr["jumped"] = _sem(jumped)
    diag = {"total_jumps": int(sum(r.n_jumps for r in results)), "n_traj": n}
    return TimeSeries(t.copy(), values, stderr, diag)


def _sem(samples: np.ndarray) -> np.ndarray:
    n = samples.shape[0]
    if n < 2:
        return np.zeros(samples.shape[1])
    return samples.std(axis=0, ddof=1) / math.sqrt(n)


def mcwf_trajectories(spec: ModelSpec, psi0: PureState, config: EvolutionConfig,
                      observables: Optional[Observables] = None) -> TimeSeries:
    if config.method != "mcwf":
        raise ValueError("config.method must be 'mcwf'")
    if not isinstance(psi0, PureState):
        raise TypeError("trajectories start from a pure state")
    observables = default_observables(spec) if observables is None else observables
    L = build_liouvillian(spec)
    series = mcwf_system(L, psi0.vector, config, observables)
    series.provenance = _provenance(spec, config, observables)
    return series


def evolve(spec: ModelSpec, config: EvolutionConfig, state=None,
           observables: Optional[Observables] = None) -> TimeSeries:
    """Dispatch on ``config.method``; the default initial state is used when none is given."""
    state = default_initial_state(spec) if state is None else state
    if config.method == "master":
        return integrate_master(spec, state, config, observables)
    return mcwf_trajectories(spec, state, config, observables)


# -- decay-rate extraction -----------------------------------------------------

def default_fit_window(times: np.ndarray, dev: np.ndarray, upper: float = 0.5,
                       floor: float = 1e-4) -> tuple[float, float]:
    """From where ``dev`` first drops below ``upper * dev[0]`` to where it first reaches ``floor``."""
    below = np.flatnonzero(dev < upper * dev[0])
    if below.size == 0:
        raise FitRefused("deviation never halves", {"dev0": float(dev[0])})
    start = int(below[0])
    end_idx = np.flatnonzero((dev <= floor) & (np.arange(dev.size) >= start))
    end = int(end_idx[0]) if end_idx.size else dev.size - 1
    return float(times[start]), float(times[end])


def fit_decay_rate(series: TimeSeries, observable: str, c_ss: float,
                   window: Optional[Sequence[float]] = None, min_decades: float = 2.0,
                   monotone_tol: float = 1e-3) -> float:
    """Rate of the exponential approach of ``observable`` to ``c_ss``.

    Least-squares slope of ``log|C(t) - c_ss|`` over ``window``.  The fit is
    refused when the log-residual rises anywhere in the window by more than
    ``monotone_tol`` or spans fewer than ``min_decades`` decades.
    """
    t = np.asarray(series.times)
    dev = np.abs(np.asarray(series.values[observable]) - c_ss)
    lo, hi = default_fit_window(t, dev) if window is None else map(float, window)
    sel = (t >= lo) & (t <= hi)
    if sel.sum() < 3:
        raise FitRefused("fewer than three points in the fit window", {"window": (lo, hi)})
    ts, ds = t[sel], dev[sel]
    if np.any(ds <= 0):
        raise FitRefused("deviation vanishes inside the window", {"window": (lo, hi)})
    y = np.log(ds)
    rises = np.diff(y)
    diag = {"window": (lo, hi), "max_rise": float(rises.max()),
            "decades": float((y.max() - y.min()) / math.log(10))}
    if rises.max() > monotone_tol:
        raise FitRefused("log-residual is not monotone in the window", diag)
    if diag["decades"] < min_decades:
        raise FitRefused("window covers too few decades of decay", diag)
    slope = np.polyfit(ts, y, 1)[0]
    return float(-slope)
