"""Acceptance criteria, one test each.

Every test prints a single ``criterion N: PASS|FAIL`` line (also repeated in
the terminal summary) and then asserts the same verdict.  Runtime budgets are
part of the verdict.
"""

import time
from dataclasses import replace

import numpy as np
import pytest
import scipy.linalg

import conftest
from entpairs import presets
from entpairs.dynamics import EvolutionConfig, IntegrationError, evolve, fit_decay_rate
from entpairs.entanglement import analytic_pair_concurrence, pair_concurrence
from entpairs.liouvillian import (
    build_liouvillian,
    leading_eigenvalues,
    left_null_error,
    stationarity_residual,
    steady_state_nullspace,
)
from entpairs.models import ModelSpec, analytic_full_state, hamiltonian_parts, tau_operator
from entpairs.scenario import ScenarioConfig, run_disorder, run_steady

from _specs import TOPOLOGIES, all_small_specs, random_spec

# everything integrated or built here, re-audited by criterion 10
SERIES = []
GENERATORS = []


def report(k, ok, detail, elapsed=None, budget=None):
    in_time = budget is None or elapsed <= budget
    verdict = "PASS" if ok and in_time else "FAIL"
    timing = "" if elapsed is None else f"; {elapsed:.1f} s" + ("" if budget is None else f" of {budget:g} s")
    line = f"criterion {k}: {verdict} ({detail}{timing})"
    print(line)
    conftest.VERDICTS.append(line)
    assert ok, line
    assert in_time, line


def liouvillian(spec):
    L = build_liouvillian(spec)
    GENERATORS.append((spec, left_null_error(L)))
    return L


def run_evolution(spec, config):
    out = evolve(spec, config)
    SERIES.append((spec, config.method, out))
    return out


def test_criterion_1_exact_annihilation():
    t0 = time.perf_counter()
    worst = {"tau": 0.0, "cq": 0.0, "q": 0.0, "stationarity": 0.0}
    for spec in all_small_specs():
        psi = analytic_full_state(spec)
        v = psi.vector
        for j in [j for j in range(-spec.N, spec.N + 1) if j]:
            worst["tau"] = max(worst["tau"], np.linalg.norm(tau_operator(spec, j).matrix @ v))
        parts = hamiltonian_parts(spec)
        worst["cq"] = max(worst["cq"], np.linalg.norm(parts["cq"].matrix @ v))
        if spec.topology in ("Cq", "Sq"):
            worst["q"] = max(worst["q"], np.linalg.norm(parts["q"].matrix @ v))
        worst["stationarity"] = max(worst["stationarity"], stationarity_residual(liouvillian(spec), psi))
    ok = worst["tau"] < 1e-12 and worst["cq"] < 1e-12 and worst["q"] < 1e-12 and worst["stationarity"] < 1e-10
    detail = ", ".join(f"max {k} {v:.1e}" for k, v in worst.items())
    report(1, ok, detail, time.perf_counter() - t0, 10)


def test_criterion_2_analytic_concurrence():
    t0 = time.perf_counter()
    worst, decimals = 0.0, {}
    for t in TOPOLOGIES:
        for N in (1, 2):
            for n_bar in (0.5, 1.0, 5.0):
                spec = random_spec(t, N, n_bar, seed=3)
                rho = steady_state_nullspace(liouvillian(spec))
                expected = 2 * np.sqrt(n_bar * (n_bar + 1)) / (2 * n_bar + 1)
                for j in range(1, N + 1):
                    c = pair_concurrence(rho, j, -j).value
                    worst = max(worst, abs(c - expected))
                    decimals.setdefault(n_bar, set()).add(round(c, 5))
    frozen = {0.5: {0.86603}, 1.0: {0.94281}, 5.0: {0.99586}}
    ok = worst < 1e-8 and decimals == frozen
    report(2, ok, f"max deviation {worst:.1e}, decimals {sorted(min(v) for v in decimals.values())}",
           time.perf_counter() - t0, 60)


def test_criterion_3_uniqueness_certification():
    t0 = time.perf_counter()
    fig4 = leading_eigenvalues(liouvillian(presets.fig4_model()), k=4)
    sym = ModelSpec("Sq", 2, delta_q=(0.2, 0.2), g=(0.36, 0.36))
    degen = leading_eigenvalues(liouvillian(sym), k=4)
    ok = fig4.null_dim == 1 and fig4.gap_ratio < 1e-3 and degen.null_dim >= 2
    report(3, ok, f"fig4 null_dim {fig4.null_dim} ratio {fig4.gap_ratio:.1e}; "
                  f"symmetric Sq null_dim {degen.null_dim}", time.perf_counter() - t0, 60)


@pytest.mark.slow
def test_criterion_4_truncation_independence():
    t0 = time.perf_counter()
    spread = {}
    for panel in "abc":
        finals = []
        for task in presets.preset_tasks(f"fign-{panel}"):
            cfg = task.scenario
            out = run_evolution(cfg.model, cfg.evolution)
            finals.append([v[-1] for k, v in out.values.items() if k.startswith("C_")])
        spread[panel] = float(np.ptp(np.array(finals), axis=0).max())
    ok = max(spread.values()) < 1e-4
    report(4, ok, ", ".join(f"{p}: spread {s:.1e}" for p, s in spread.items()), time.perf_counter() - t0, 300)


@pytest.mark.slow
def test_criterion_5_decay_rate_consistency():
    t0 = time.perf_counter()
    gaps, errors = [], []
    for n_bar in (0.5, 1.0, 5.0):
        task = next(t for t in presets.preset_tasks("fig4") if t.label == f"evolve_nbar={n_bar:g}")
        spec = task.scenario.model
        L = liouvillian(spec)
        gap = leading_eigenvalues(L, k=4).gap
        c_ss = pair_concurrence(steady_state_nullspace(L), 1, -1).value
        out = run_evolution(spec, task.scenario.evolution)
        rate = fit_decay_rate(out, "C_1_-1", c_ss)
        gaps.append(gap)
        errors.append(abs(rate - gap) / gap)
    monotone = all(b < a for a, b in zip(gaps, gaps[1:]))
    ok = max(errors) < 0.05 and monotone
    report(5, ok, "relative errors " + ", ".join(f"{e:.1e}" for e in errors)
           + "; gaps " + ", ".join(f"{g:.4f}" for g in gaps), time.perf_counter() - t0, 300)


def late_jump_probability(spec, rho):
    """Probability that a trajectory drawn from ``rho`` jumps at least once more."""
    H = build_liouvillian(spec).H_eff.toarray()
    rates = -np.linalg.eigvals(H).imag
    # no-jump survival is converged after 50 decay times of the slowest decaying mode
    U = scipy.linalg.expm(-1j * H * 50.0 / rates[rates > 1e-9].min())
    return 1.0 - float(np.trace(rho @ U.conj().T @ U).real)


@pytest.mark.slow
def test_criterion_6_unraveling_equivalence():
    t0 = time.perf_counter()
    task = presets.preset_tasks("fign-a")[1]  # n_max = 2
    spec, base = task.scenario.model, task.scenario.evolution
    master = run_evolution(spec, base)
    mc = run_evolution(spec, replace(base, method="mcwf", n_traj=500, seed=2024))
    ratio = np.zeros(len(master.times))
    for col in (c for c in master.values if c.startswith("C_")):
        diff = np.abs(mc.values[col] - master.values[col])
        # 1e-6 floor: at t = 0 and wherever C clips to 0 the jackknife error is exactly zero
        ratio = np.maximum(ratio, diff / (3 * mc.stderr[col] + 1e-6))
    bad = np.flatnonzero(ratio > 1.0)
    if bad.size == 0:
        detail = f"max |MCWF - master| / (3 SE + 1e-6) = {ratio.max():.2f} over {ratio.size} times"
    else:
        t_bad = master.times[bad[0]]
        state = evolve(spec, replace(base, t_grid=(0.0, float(t_bad)))).final_state
        p_late = late_jump_probability(spec, state)
        detail = (f"{bad.size}/{ratio.size} times outside 3 SE, first at t = {t_bad:g}, worst ratio "
                  f"{ratio.max():.0f}; P(any jump after t) = {p_late:.1e}, i.e. "
                  f"{500 * p_late:.2f} expected late-jump trajectories, so the sample SE collapses")
    report(6, bad.size == 0, detail, time.perf_counter() - t0, 300)


def test_criterion_7_dephasing_optimum():
    t0 = time.perf_counter()
    grid = (0.5, 1.0, 2.0, 5.0)
    values = [pair_concurrence(steady_state_nullspace(liouvillian(presets.fig4_model(n_bar=nb))), 1, -1).value
              for nb in grid]
    best = grid[int(np.argmax(values))]
    ok = best not in (grid[0], grid[-1])
    report(7, ok, "C = " + ", ".join(f"{v:.4f}" for v in values) + f"; maximum at n_bar = {best:g}",
           time.perf_counter() - t0, 120)


@pytest.mark.slow
def test_criterion_8_disorder_study():
    t0 = time.perf_counter()
    means = {}
    for preset, topo in (("fig8", "Cq"), ("fig9", "Ccq")):
        for task in presets.preset_tasks(preset):
            N, target = task.label.split("_")
            res = run_disorder(task.scenario)
            assert not any(res.failures), (task.label, res.failures)
            means[(topo, int(N[2:]), target)] = [float(np.mean(res.pair_average(i)))
                                                 for i in range(len(res.values))]
    r_grid = presets.R_MAX_GRID
    problems = []
    for key, m in means.items():
        if any(b > a for a, b in zip(m, m[1:])):
            problems.append(f"{key} not non-increasing {np.round(m, 5).tolist()}")
    for (topo, N, target), m in means.items():
        if target != "detunings":
            continue
        other = means[(topo, N, "couplings")]
        for r, a, b in zip(r_grid[1:], m[1:], other[1:]):
            if a > b:
                problems.append(f"{topo} N={N} r={r}: detuning mean {a:.5f} > coupling mean {b:.5f}")
    for target in ("detunings", "couplings"):
        for r, a, b in zip(r_grid, means[("Cq", 3, target)], means[("Cq", 1, target)]):
            if a > b:
                problems.append(f"{target} r={r}: N=3 mean {a:.5f} > N=1 mean {b:.5f}")
    detail = "; ".join(problems) if problems else \
        f"{len(means)} sweeps x {len(r_grid)} r_max x {presets.DISORDER_REALIZATIONS} realizations ordered"
    report(8, not problems, detail, time.perf_counter() - t0, 1200)


@pytest.mark.slow
def test_criterion_9_scaling():
    t0 = time.perf_counter()
    tasks = [t for t in presets.preset_tasks("fig12") if t.label.endswith("_steady")]
    inner, outer, positive = {}, {}, True
    for task in tasks:
        N = task.scenario.model.N
        res = run_steady(task.scenario)
        values = res.concurrence[0]
        positive &= all(isinstance(v, float) and v > 0 for v in values)
        inner[N], outer[N] = values[0], values[-1]
    sizes = sorted(inner)
    ordered = all(inner[b] <= inner[a] for a, b in zip(sizes, sizes[1:]))
    ok = sizes == [1, 2, 3, 4] and positive and ordered
    report(9, ok, "C_1 by N " + ", ".join(f"{N}: {inner[N]:.4f}" for N in sizes)
           + "; C_N by N " + ", ".join(f"{N}: {outer[N]:.4f}" for N in sizes),
           time.perf_counter() - t0, 1800)


def test_criterion_10_numerics_hygiene():
    t0 = time.perf_counter()
    problems = []
    # a few integrations of its own so the criterion is meaningful when run alone
    for spec, cfg in ((presets.fign_model("d", 2), EvolutionConfig.linear(300.0, 61)),
                      (presets.fig41_models()["ccq"], EvolutionConfig.linear(200.0, 41)),
                      (random_spec("Sq", 2, 2.0, gamma=1e-3), EvolutionConfig.linear(100.0, 21))):
        run_evolution(spec, cfg)
        liouvillian(spec)
    for spec, method, out in SERIES:
        if method != "master":
            continue
        try:
            out.check_hygiene(trace_tol=1e-8, psd_tol=1e-7)
        except IntegrationError as exc:
            problems.append(f"{spec.topology} N={spec.N}: {exc}")
    worst_null = max(err for _, err in GENERATORS)
    if worst_null > 1e-10:
        problems.append(f"left-null identity error {worst_null:.1e}")
    mc_cfg = EvolutionConfig.linear(50.0, 11, method="mcwf", n_traj=20, seed=77)
    a = evolve(presets.fign_model("d", 2), mc_cfg)
    b = evolve(presets.fign_model("d", 2), mc_cfg)
    if not all(np.array_equal(a.values[k], b.values[k]) for k in a.values):
        problems.append("MCWF rerun differs")
    dis = replace(presets.preset_tasks("fig8")[0].scenario, scan=None)
    dis = replace(dis, model=replace(dis.model, disorder=replace(dis.model.disorder, r_max=0.1,
                                                                 realizations=10)))
    if not np.array_equal(run_disorder(dis).realizations[0], run_disorder(dis).realizations[0]):
        problems.append("disorder rerun differs")
    n_master = sum(1 for _, m, _ in SERIES if m == "master")
    detail = "; ".join(problems) if problems else \
        f"{n_master} integrations, {len(GENERATORS)} generators (max left-null {worst_null:.1e}), reruns bit-exact"
    report(10, not problems, detail, time.perf_counter() - t0)
