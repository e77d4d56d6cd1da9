"""Named parameter sets for the figure presets of ``entpairs figure``.

Each preset is a list of :class:`Task` objects, one per output table.  All
rates are in units of kappa, and ``n_bar = 1`` unless stated otherwise.
Where a preset needs a value that is not fixed elsewhere (hopping strengths of
the ``Ccq`` presets, the dephasing grid of ``fig4a``, the ``n_bar`` of the
disorder presets, evolution horizons), the choice is made here once and
covered by the preset audit table in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dynamics import EvolutionConfig
from .models import DisorderSpec, ModelSpec
from .scenario import Scan, ScenarioConfig

N_MAX_VARIANTS = (1, 2, 3)
GAMMA_DEPHASED = 5e-4
FIG4A_GAMMAS = (0.0, 1e-4, 5e-4, 1e-3)
FIG4A_NBARS = (0.1, 0.2, 0.5, 1.0, 2.0, 3.0, 5.0, 10.0)
FIG4_NBARS = (0.5, 1.0, 5.0)
DELTA_GRID = tuple(np.round(np.linspace(-0.5, 0.5, 101), 6))
R_MAX_GRID = (0.0, 0.05, 0.1, 0.2)
DISORDER_REALIZATIONS = 200
DISORDER_SEED = 20240601
TRAJECTORIES = 500

# base detuning maximizing the gap of the Cq scaling presets, per N;
# N >= 4 reuse the N = 3 value (gap scans at d >= 768 are out of reach)
SCALING_DELTA_STAR = {1: -0.195, 2: -0.12, 3: -0.1, 4: -0.1, 5: -0.1}
SCALING_LONG_RUNNING = (5,)


@dataclass(frozen=True)
class Task:
    label: str
    command: str  # steady | evolve | spectrum | disorder
    scenario: ScenarioConfig
    long_running: bool = False


def _evolution(t_final: float, n_points: int = 201, **kw) -> EvolutionConfig:
    return EvolutionConfig.linear(t_final, n_points, **kw)


# -- single models -------------------------------------------------------------

def fig4_model(n_bar: float = 1.0, gamma: float = GAMMA_DEPHASED) -> ModelSpec:
    return ModelSpec("Cq", 1, n_bar=n_bar, gamma=gamma, delta_q=(0.197,), g=(0.36,), n_max=(2,))


def fign_model(panel: str, n_max: int) -> ModelSpec:
    """Panels a-c at gamma = 0, d-f the same models with dephasing."""
    gamma = 0.0 if panel in "abc" else GAMMA_DEPHASED
    base = {"a": "a", "d": "a", "b": "b", "e": "b", "c": "c", "f": "c"}[panel]
    if base == "a":
        return ModelSpec("Cq", 1, gamma=gamma, delta_q=(-0.193,), g=(0.36,), n_max=(n_max,))
    if base == "b":
        return ModelSpec("Cq", 2, gamma=gamma, delta_q=(-0.193, -0.193 + 0.05), g=(0.36,),
                         eta_q=(0.362,), n_max=(n_max,))
    return ModelSpec("Ccq", 1, gamma=gamma, delta_c=(-0.26,), g=(0.36,), eta_c=(0.36,),
                     n_max=(n_max,) * 3)


FIGN_T_FINAL = {"a": 1000.0, "b": 5000.0, "c": 2000.0}


def fig41_models(n_bar: float = 1.0, gamma: float = GAMMA_DEPHASED) -> dict[str, ModelSpec]:
    return {
        "cq": ModelSpec("Cq", 2, n_bar=n_bar, gamma=gamma, delta_q=(-0.13, -0.13 + 0.05),
                        g=(0.36,), eta_q=(0.362,), n_max=(2,)),
        "sq": ModelSpec("Sq", 2, n_bar=n_bar, gamma=gamma, delta_q=(1.3, 1.3 + 0.05),
                        g=(0.36, 0.362), n_max=(2,)),
        "ccq": ModelSpec("Ccq", 1, n_bar=n_bar, gamma=gamma, delta_c=(-0.17,), g=(0.36,),
                         eta_c=(0.36,), n_max=(1, 2, 1)),
    }


FIG41_T_FINAL = {"cq": 4000.0, "sq": 4000.0, "ccq": 3000.0}


def disorder_model(topology: str, N: int, targets: tuple[str, ...], r_max: float = 0.0) -> ModelSpec:
    """Qubit-only arrays with ``Delta_j = 1.8 + 0.2 j``, ``g = 0.3``, ``eta_j = 0.45 + 0.05 j``."""
    dis = DisorderSpec(r_max, targets, DISORDER_SEED, DISORDER_REALIZATIONS)
    delta = tuple(round(1.8 + 0.2 * j, 12) for j in range(1, N + 1))
    if topology == "Cq":
        eta = tuple(round(0.45 + 0.05 * j, 12) for j in range(2, N + 1))
        return ModelSpec("Cq", N, gamma=1e-5, delta_q=delta, g=(0.3,), eta_q=eta,
                         n_max=(1,), disorder=dis)
    eta = tuple(round(0.45 + 0.05 * j, 12) for j in range(1, N + 1))
    return ModelSpec("Ccq", N, gamma=1e-5, delta_c=delta, g=(0.3,) * N, eta_c=eta,
                     n_max=(1,) * (2 * N + 1), disorder=dis)


def scaling_model(N: int, delta_star: float | None = None) -> ModelSpec:
    """Cq array with ``eta_{q,j} = g + 0.002 (j-1)`` and ``Delta_{q,j} = Delta* + 0.05 (j-1)``."""
    d0 = SCALING_DELTA_STAR[N] if delta_star is None else delta_star
    g1 = 0.36
    return ModelSpec("Cq", N, gamma=1e-5,
                     delta_q=tuple(round(d0 + 0.05 * (j - 1), 12) for j in range(1, N + 1)),
                     g=(g1,), eta_q=tuple(round(g1 + 0.002 * (j - 1), 12) for j in range(2, N + 1)),
                     n_max=(2,))


# -- presets -------------------------------------------------------------------

def _fig4a() -> list[Task]:
    tasks = []
    for gamma in FIG4A_GAMMAS:
        cfg = ScenarioConfig(fig4_model(gamma=gamma), scan=Scan("n_bar", FIG4A_NBARS))
        tasks.append(Task(f"steady_gamma={gamma:g}", "steady", cfg))
    return tasks


def _fig4() -> list[Task]:
    tasks = []
    for nb in FIG4_NBARS:
        m = fig4_model(n_bar=nb)
        tasks.append(Task(f"evolve_nbar={nb:g}", "evolve", ScenarioConfig(m, _evolution(3000.0))))
        tasks.append(Task(f"spectrum_nbar={nb:g}", "spectrum",
                          ScenarioConfig(m, scan=Scan("delta", DELTA_GRID), k=3)))
    tasks.append(Task("steady", "steady", ScenarioConfig(fig4_model(), scan=Scan("n_bar", FIG4_NBARS))))
    return tasks


def _fign(panel: str) -> list[Task]:
    base = {"a": "a", "d": "a", "b": "b", "e": "b", "c": "c", "f": "c"}[panel]
    return [Task(f"evolve_nmax={nm}", "evolve",
                 ScenarioConfig(fign_model(panel, nm), _evolution(FIGN_T_FINAL[base])))
            for nm in N_MAX_VARIANTS]


def _fig41() -> list[Task]:
    tasks = []
    for name, m in fig41_models().items():
        for gamma in FIG4A_GAMMAS:
            cfg = ScenarioConfig(replace(m, gamma=gamma), scan=Scan("n_bar", FIG4A_NBARS))
            tasks.append(Task(f"{name}_steady_gamma={gamma:g}", "steady", cfg))
        for nb in FIG4_NBARS:
            mm = replace(m, n_bar=nb)
            tasks.append(Task(f"{name}_evolve_nbar={nb:g}", "evolve",
                              ScenarioConfig(mm, _evolution(FIG41_T_FINAL[name]))))
            tasks.append(Task(f"{name}_spectrum_nbar={nb:g}", "spectrum",
                              ScenarioConfig(mm, scan=Scan("delta", DELTA_GRID), k=3)))
    return tasks


def _disorder(topology: str, sizes) -> list[Task]:
    tasks = []
    for N in sizes:
        for target in ("detunings", "couplings"):
            cfg = ScenarioConfig(disorder_model(topology, N, (target,)), scan=Scan("r_max", R_MAX_GRID))
            tasks.append(Task(f"N={N}_{target}", "disorder", cfg))
    return tasks


def _fig12() -> list[Task]:
    tasks = []
    for N in sorted(SCALING_DELTA_STAR):
        long_run = N in SCALING_LONG_RUNNING
        m = scaling_model(N)
        if long_run:
            evo = _evolution(2e4, 101, method="mcwf", n_traj=TRAJECTORIES)
            tasks.append(Task(f"N={N}_mcwf", "evolve", ScenarioConfig(m, evo), long_running=True))
        else:
            tasks.append(Task(f"N={N}_steady", "steady", ScenarioConfig(m, spectrum=N <= 2)))
    return tasks


PRESETS = {
    "fig4a": _fig4a,
    "fig4": _fig4,
    **{f"fign-{p}": (lambda p=p: _fign(p)) for p in "abcdef"},
    "fig4.1": _fig41,
    "fig8": lambda: _disorder("Cq", (1, 2, 3)),
    "fig9": lambda: _disorder("Ccq", (1,)),
    "fig12": _fig12,
}


def preset_tasks(name: str, include_long: bool = False) -> list[Task]:
    if name not in PRESETS:
        raise KeyError(name)
    return [t for t in PRESETS[name]() if include_long or not t.long_running]
