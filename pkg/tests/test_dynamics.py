import math

import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from entpairs.dynamics import (
    EvolutionConfig,
    FitRefused,
    IntegrationError,
    Observables,
    TimeSeries,
    default_fit_window,
    default_initial_state,
    evolve,
    fit_decay_rate,
    integrate_master,
    integrate_system,
    mcwf_system,
    mcwf_trajectories,
)
from entpairs.entanglement import analytic_pair_concurrence
from entpairs.liouvillian import (
    Superoperator,
    build_liouvillian,
    leading_eigenvalues,
    steady_state_nullspace,
    trace_distance,
)
from entpairs.models import ModelSpec, build_space
from entpairs.tensor import (
    SIGMA_MINUS,
    SIGMA_X,
    SIGMA_Y,
    HilbertSpace,
    SiteDescriptor,
    boson_annihilate,
    local_embed,
)

CAVITY = Observables(occupations=(("c", 0),))


def single_mode(n_max=1, kappa=1.0):
    space = HilbertSpace((SiteDescriptor("boson", 0, n_max + 1),))
    b = sp.csr_matrix(boson_annihilate(n_max))
    return Superoperator(space, sp.csr_matrix((n_max + 1, n_max + 1)), ((b, kappa),), kappa)


def fign_a(n_max=2, gamma=0.0):
    return ModelSpec("Cq", 1, gamma=gamma, delta_q=(-0.193,), g=(0.36,), n_max=(n_max,))


def two_qubit_xy():
    space = HilbertSpace(tuple(SiteDescriptor("qubit", j, 2) for j in (-1, 1)))
    e = lambda j, m: local_embed(space, ("q", j), m).matrix
    H = 0.3 * (e(-1, SIGMA_X) @ e(1, SIGMA_X) + e(-1, SIGMA_Y) @ e(1, SIGMA_Y)) + 0.2 * e(1, SIGMA_X)
    return space, sp.csr_matrix(H)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            EvolutionConfig((0.0, 1.0, 1.0))
        with pytest.raises(ValueError):
            EvolutionConfig((0.5, 1.0))
        with pytest.raises(ValueError):
            EvolutionConfig((0.0, 1.0), method="rk4")
        with pytest.raises(ValueError):
            EvolutionConfig((0.0, 1.0), n_traj=0)

    def test_round_trip(self):
        cfg = EvolutionConfig.linear(10.0, 5, method="mcwf", n_traj=20, seed=3)
        assert EvolutionConfig.from_dict(cfg.to_dict()) == cfg
        assert cfg.t_grid == (0.0, 2.5, 5.0, 7.5, 10.0)

    def test_default_initial_state(self):
        spec = fign_a()
        psi = default_initial_state(spec)
        space = build_space(spec)
        # |-> on both qubits, cavity vacuum: index (1, 0, 1)
        assert psi.vector[space.basis_index([1, 0, 1])] == 1.0
        qubits = default_initial_state(ModelSpec("Sq", 1, delta_q=(0.1,), g=(0.3,), n_max=(1,)))
        assert qubits.vector[-1] == 1.0


class TestMasterEquation:
    def test_amplitude_damping_closed_form(self):
        t = np.linspace(0, 8, 17)
        rho0 = np.diag([0.0, 1.0]).astype(complex)
        out = integrate_system(single_mode(), rho0, EvolutionConfig(tuple(t)), CAVITY)
        np.testing.assert_allclose(out.values["n_c_0"], np.exp(-t), atol=1e-8)
        out.check_hygiene()

    def test_frozen_without_generator(self):
        space, _ = two_qubit_xy()
        L = Superoperator(space, sp.csr_matrix((4, 4)), ())
        rho0 = np.diag([0.1, 0.2, 0.3, 0.4]).astype(complex)
        obs = Observables(pairs=((-1, 1),), occupations=(("q", 1),))
        out = integrate_system(L, rho0, EvolutionConfig.linear(5.0, 6), obs)
        np.testing.assert_array_equal(out.final_state, rho0)
        assert np.all(out.values["n_q_1"] == out.values["n_q_1"][0])

    def test_unitary_matches_expm(self):
        space, H = two_qubit_xy()
        L = Superoperator(space, H, ())
        rho0 = np.zeros((4, 4), complex)
        rho0[3, 3] = 1.0
        out = integrate_system(L, rho0, EvolutionConfig.linear(3.0, 4), Observables())
        U = scipy.linalg.expm(-3j * H.toarray())
        np.testing.assert_allclose(out.final_state, U @ rho0 @ U.conj().T, atol=1e-7)

    def test_relaxes_to_analytic_concurrence(self):
        spec = fign_a()
        gap = leading_eigenvalues(build_liouvillian(spec)).gap
        out = evolve(spec, EvolutionConfig.linear(30 / gap, 31))
        assert out.values["C_1_-1"][-1] == pytest.approx(analytic_pair_concurrence(1.0), abs=1e-6)
        out.check_hygiene()

    def test_long_time_state_matches_null_space(self):
        spec = fign_a(gamma=5e-4)
        L = build_liouvillian(spec)
        gap = leading_eigenvalues(L).gap
        out = evolve(spec, EvolutionConfig.linear(20 / gap, 11))
        assert trace_distance(out.final_state, steady_state_nullspace(L).matrix) < 1e-6

    def test_hygiene_diagnostics(self):
        out = evolve(fign_a(gamma=5e-4), EvolutionConfig.linear(100.0, 51))
        d = out.diagnostics
        assert d["trace_error"].max() < 1e-8
        assert d["hermiticity_error"].max() < 1e-10
        assert d["min_eigenvalue"].min() > -1e-7
        assert np.all((out.values["C_1_-1"] >= 0) & (out.values["C_1_-1"] <= 1))

    def test_tolerance_convergence(self):
        spec = fign_a()
        coarse = evolve(spec, EvolutionConfig.linear(200.0, 11, rel_tol=1e-6, abs_tol=1e-8))
        fine = evolve(spec, EvolutionConfig.linear(200.0, 11, rel_tol=5e-7, abs_tol=5e-9))
        for col in ("C_1_-1", "n_c_0"):
            assert abs(coarse.values[col][-1] - fine.values[col][-1]) < 1e-6

    def test_repeatable(self):
        a = evolve(fign_a(), EvolutionConfig.linear(50.0, 6))
        b = evolve(fign_a(), EvolutionConfig.linear(50.0, 6))
        for col in a.values:
            np.testing.assert_array_equal(a.values[col], b.values[col])

    def test_method_checks(self):
        with pytest.raises(ValueError):
            integrate_master(fign_a(), default_initial_state(fign_a()),
                             EvolutionConfig((0.0, 1.0), method="mcwf"))
        with pytest.raises(ValueError):
            integrate_master(fign_a(), np.eye(12) / 6, EvolutionConfig((0.0, 1.0)))
        with pytest.raises(TypeError):
            mcwf_trajectories(fign_a(), np.eye(12) / 12, EvolutionConfig((0.0, 1.0), method="mcwf"))


class TestTrajectories:
    def test_poisson_decay_law(self):
        t = np.linspace(0, 3, 7)
        cfg = EvolutionConfig(tuple(t), method="mcwf", n_traj=2000, seed=11)
        out = mcwf_system(single_mode(), np.array([0, 1], complex), cfg, CAVITY)
        expected = 1 - np.exp(-t)
        se = out.stderr["jumped"]
        assert out.values["jumped"][0] == 0.0
        assert np.all(np.abs(out.values["jumped"][1:] - expected[1:]) < 3 * se[1:])
        # occupation is the complement: one photon before the jump, none after
        np.testing.assert_allclose(out.values["n_c_0"], 1 - out.values["jumped"], atol=1e-12)
        assert out.diagnostics["total_jumps"] == round(2000 * out.values["jumped"][-1])

    def test_no_jumps_is_schroedinger(self):
        space, H = two_qubit_xy()
        L = Superoperator(space, H, ())
        psi0 = np.array([0, 0, 0, 1], complex)
        obs = Observables(pairs=((-1, 1),), occupations=(("q", 1),))
        t = np.linspace(0, 4, 5)
        out = mcwf_system(L, psi0, EvolutionConfig(tuple(t), method="mcwf", n_traj=5), obs)
        assert out.diagnostics["total_jumps"] == 0
        assert out.stderr["n_q_1"].max() < 1e-15
        n_op = local_embed(space, ("q", 1), SIGMA_MINUS).matrix
        n_op = (n_op.conj().T @ n_op).toarray()
        for k, tk in enumerate(t):
            psi = scipy.linalg.expm(-1j * tk * H.toarray()) @ psi0
            assert out.values["n_q_1"][k] == pytest.approx(np.vdot(psi, n_op @ psi).real, abs=1e-9)

    def test_seeded_runs_are_bit_identical(self):
        spec = fign_a(gamma=1e-2)
        cfg = EvolutionConfig.linear(40.0, 5, method="mcwf", n_traj=20, seed=99)
        a = evolve(spec, cfg)
        b = evolve(spec, cfg)
        c = evolve(spec, EvolutionConfig.linear(40.0, 5, method="mcwf", n_traj=20, seed=99, threads=2))
        for col in a.values:
            assert a.values[col].tobytes() == b.values[col].tobytes() == c.values[col].tobytes()
            assert a.stderr[col].tobytes() == c.stderr[col].tobytes()
        d = evolve(spec, EvolutionConfig.linear(40.0, 5, method="mcwf", n_traj=20, seed=100))
        assert d.values["jumped"].tobytes() != a.values["jumped"].tobytes() or \
            d.values["C_1_-1"].tobytes() != a.values["C_1_-1"].tobytes()

    def test_agrees_with_master_equation(self):
        spec = fign_a(gamma=5e-3)
        t = np.linspace(0, 60, 7)
        master = evolve(spec, EvolutionConfig(tuple(t)))
        traj = evolve(spec, EvolutionConfig(tuple(t), method="mcwf", n_traj=200, seed=5))
        for col in ("C_1_-1", "n_c_0"):
            se = traj.stderr[col]
            diff = np.abs(traj.values[col] - master.values[col])
            assert np.all(diff <= 3 * se + 1e-6), (col, diff, se)

    def test_input_checks(self):
        cfg = EvolutionConfig((0.0, 1.0), method="mcwf", n_traj=2)
        with pytest.raises(ValueError):
            mcwf_system(single_mode(), np.array([1.0, 1.0], complex), cfg, CAVITY)
        with pytest.raises(ValueError):
            mcwf_system(single_mode(), np.array([1.0, 0, 0], complex), cfg, CAVITY)


class TestTimeSeries:
    def test_write_read_round_trip(self, tmp_path):
        out = evolve(fign_a(), EvolutionConfig.linear(10.0, 3, method="mcwf", n_traj=4))
        csv, side = out.write(tmp_path / "run.csv")
        header = csv.read_text().splitlines()[0]
        assert header == "time,C_1_-1,C_1_-1_se,n_c_0,n_c_0_se,jumped,jumped_se"
        back = TimeSeries.read(csv)
        np.testing.assert_array_equal(back.times, out.times)
        for col in out.values:
            np.testing.assert_array_equal(back.values[col], out.values[col])
            np.testing.assert_array_equal(back.stderr[col], out.stderr[col])
        assert back.provenance["spec"] == fign_a().to_dict()
        assert ModelSpec.from_dict(back.provenance["spec"]) == fign_a()

    def test_invariants(self):
        with pytest.raises(ValueError):
            TimeSeries(np.array([0.0]), {"C_1_-1": np.array([1.2])})
        with pytest.raises(ValueError):
            TimeSeries(np.array([0.0]), {"n": np.array([0.2])}, {"n": np.array([-1e-3])})

    def test_hygiene_check_raises(self):
        bad = TimeSeries(np.array([0.0]), {}, diagnostics={"trace_error": np.array([1e-6])})
        with pytest.raises(IntegrationError):
            bad.check_hygiene()
        bad = TimeSeries(np.array([0.0]), {}, diagnostics={"min_eigenvalue": np.array([-1e-6])})
        with pytest.raises(IntegrationError):
            bad.check_hygiene()


def synthetic(c_ss, amp, rate, t):
    return TimeSeries(t, {"C": c_ss + amp * np.exp(-rate * t)})


class TestFit:
    def test_exact_exponential(self):
        t = np.linspace(0, 150, 301)
        assert fit_decay_rate(synthetic(0.9, 0.3, 0.1, t), "C", 0.9) == pytest.approx(0.1, abs=1e-6)

    @settings(max_examples=30, deadline=None)
    @given(shift=st.floats(-5, 5), rate=st.floats(0.01, 1.0))
    def test_shift_invariance(self, shift, rate):
        t = np.linspace(0, 12 / rate, 400)
        base = fit_decay_rate(synthetic(0.5, -0.4, rate, t), "C", 0.5)
        moved = fit_decay_rate(synthetic(0.5 + shift, -0.4, rate, t), "C", 0.5 + shift)
        assert moved == pytest.approx(base, abs=1e-9)
        assert base == pytest.approx(rate, rel=1e-6)

    def test_default_window(self):
        t = np.linspace(0, 100, 101)
        dev = np.exp(-0.1 * t)
        lo, hi = default_fit_window(t, dev)
        assert lo == 7.0  # first point below one half
        assert hi == 93.0  # first point at or below 1e-4

    def test_refusals(self):
        t = np.linspace(0, 100, 201)
        wobbly = TimeSeries(t, {"C": 0.5 + 0.3 * np.exp(-0.1 * t) * (1.5 + np.cos(t))})
        with pytest.raises(FitRefused) as exc:
            fit_decay_rate(wobbly, "C", 0.5)
        assert exc.value.diagnostic["max_rise"] > 0
        short = synthetic(0.5, 0.3, 0.01, np.linspace(0, 100, 101))
        with pytest.raises(FitRefused):
            fit_decay_rate(short, "C", 0.5)
        flat = TimeSeries(t, {"C": np.full(t.size, 0.7)})
        with pytest.raises(FitRefused):
            fit_decay_rate(flat, "C", 0.5)

    def test_matches_gap_on_fig4_model(self):
        spec = ModelSpec("Cq", 1, delta_q=(0.197,), g=(0.36,), n_max=(2,))
        gap = leading_eigenvalues(build_liouvillian(spec)).gap
        out = evolve(spec, EvolutionConfig.linear(20 / gap, 401))
        rate = fit_decay_rate(out, "C_1_-1", analytic_pair_concurrence(1.0))
        assert rate == pytest.approx(gap, rel=0.05)
        assert math.isfinite(rate)
