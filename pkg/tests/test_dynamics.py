"""Master-equation propagation and quantum-jump trajectory sampling."""

import warnings

import numpy as np
import pytest

from qdcount.dynamics import (
    EmissionRecords,
    ExcitationModel,
    QuantumState,
    collective_operator,
    emission_rate,
    excitation_number_operator,
    interaction_hamiltonian,
    lindblad_propagate,
    lowering_operator,
    quantum_jump_trajectory,
    simulate_pulsed_experiment,
)
from qdcount.ensemble import CouplingMatrix, collective_modes, coupling_uniform

from conftest import uniform_modes

GAMMA0 = 0.02  # 1/ns, i.e. a 50 ns intrinsic lifetime


class TestQuantumState:
    def test_pure_requires_unit_norm(self):
        with pytest.raises(ValueError, match="norm"):
            QuantumState.pure(np.array([1.0, 1.0]))

    def test_density_requires_unit_trace(self):
        with pytest.raises(ValueError, match="trace"):
            QuantumState.density(np.eye(2))

    def test_density_requires_hermitian(self):
        m = np.array([[0.5, 0.3], [0.1, 0.5]], dtype=complex)
        with pytest.raises(ValueError, match="[Hh]ermitian"):
            QuantumState.density(m)

    def test_fully_excited_population(self):
        s = QuantumState.fully_excited(3)
        assert s.n == 3
        assert s.excitation() == pytest.approx(3.0)

    def test_ground_state_is_dark(self):
        s = QuantumState.ground(2)
        assert s.excitation() == 0.0

    def test_pattern_selects_emitters(self):
        s = QuantumState.from_pattern(3, 0b101)
        assert s.excitation() == pytest.approx(2.0)


class TestOperators:
    def test_lowering_operator_annihilates_ground(self):
        sm = lowering_operator(2, 0)
        ground = QuantumState.ground(2).data
        np.testing.assert_array_equal(sm @ ground, 0.0)

    def test_collective_operator_combines_modes(self):
        _, modes = uniform_modes(2, GAMMA0, 1.0)
        bright = collective_operator(modes, 0)
        # bright mode of two emitters is (s0 + s1)/sqrt(2)
        expect = (lowering_operator(2, 0) + lowering_operator(2, 1)) / np.sqrt(2)
        assert min(
            np.abs(bright - expect).max(), np.abs(bright + expect).max()
        ) < 1e-12

    def test_interaction_hamiltonian_hermitian(self):
        g = np.full((3, 3), 0.3 * GAMMA0)
        np.fill_diagonal(g, GAMMA0)
        j = np.full((3, 3), 0.1 * GAMMA0)
        np.fill_diagonal(j, 0.0)
        h = interaction_hamiltonian(CouplingMatrix(gamma=g, j=j))
        np.testing.assert_allclose(h, h.conj().T, atol=1e-15)


class TestLindbladPropagate:
    def test_single_emitter_exponential(self):
        coup, modes = uniform_modes(1, GAMMA0, 0.0)
        t = np.linspace(0.0, 100.0, 21)
        states = lindblad_propagate(coup, modes, QuantumState.fully_excited(1), t)
        pops = np.array([s.excitation() for s in states])
        np.testing.assert_allclose(pops, np.exp(-GAMMA0 * t), atol=1e-6)

    def test_uncoupled_pair_decays_independently(self):
        coup, modes = uniform_modes(2, GAMMA0, 0.0)
        t = np.linspace(0.0, 120.0, 25)
        states = lindblad_propagate(coup, modes, QuantumState.fully_excited(2), t)
        pops = np.array([s.excitation() for s in states])
        np.testing.assert_allclose(pops, 2.0 * np.exp(-GAMMA0 * t), atol=2e-6)

    def test_coupled_pair_radiates_all_excitation(self):
        coup, modes = uniform_modes(2, GAMMA0, 1.0)
        t = np.array([0.0, 2000.0])
        states = lindblad_propagate(coup, modes, QuantumState.fully_excited(2), t)
        emitted = states[0].excitation() - states[-1].excitation()
        assert emitted == pytest.approx(2.0, abs=1e-6)

    def test_emitted_photons_match_integrated_rate(self):
        coup, modes = uniform_modes(3, GAMMA0, 0.6)
        t = np.linspace(0.0, 400.0, 2001)
        states = lindblad_propagate(coup, modes, QuantumState.fully_excited(3), t)
        rates = np.array([emission_rate(s, modes) for s in states])
        emitted = states[0].excitation() - states[-1].excitation()
        assert np.trapezoid(rates, t) == pytest.approx(emitted, rel=1e-5)

    def test_grid_refinement_converges(self):
        coup, modes = uniform_modes(2, GAMMA0, 0.8)
        coarse = np.linspace(0.0, 50.0, 11)
        fine = np.linspace(0.0, 50.0, 21)
        rho_c = lindblad_propagate(coup, modes, QuantumState.fully_excited(2), coarse)
        rho_f = lindblad_propagate(coup, modes, QuantumState.fully_excited(2), fine)
        diff = rho_c[-1].data - rho_f[-1].data
        assert np.abs(diff).sum() < 1e-8

    def test_scale_cap(self):
        coup, modes = uniform_modes(7, GAMMA0, 0.0)
        with pytest.raises(ValueError, match="6"):
            lindblad_propagate(coup, modes, QuantumState.fully_excited(7), [0.0, 1.0])

    def test_pure_input_promoted(self):
        coup, modes = uniform_modes(1, GAMMA0, 0.0)
        out = lindblad_propagate(
            coup, modes, QuantumState.pure(np.array([0.0, 1.0], dtype=complex)),
            [0.0, 10.0],
        )
        assert out[-1].kind == "density"


class TestEmissionRate:
    def test_fully_excited_equals_total_rate(self, rng):
        g0 = rng.uniform(0.01, 0.05, size=4)
        g = np.diag(g0)
        coup = CouplingMatrix(gamma=g, j=np.zeros((4, 4)))
        modes = collective_modes(coup)
        r = emission_rate(QuantumState.fully_excited(4), modes)
        assert r == pytest.approx(g0.sum(), rel=1e-12)

    def test_fully_excited_rate_is_coupling_independent(self):
        for kappa in (0.0, 0.5, 1.0):
            _, modes = uniform_modes(3, GAMMA0, kappa)
            r = emission_rate(QuantumState.fully_excited(3), modes)
            assert r == pytest.approx(3 * GAMMA0, rel=1e-12)

    def test_ground_state_silent(self):
        _, modes = uniform_modes(2, GAMMA0, 1.0)
        assert emission_rate(QuantumState.ground(2), modes) == 0.0

    def test_symmetric_single_excitation_superradiates(self):
        _, modes = uniform_modes(2, GAMMA0, 1.0)
        vec = np.zeros(4, dtype=complex)
        vec[0b01] = vec[0b10] = 1.0 / np.sqrt(2.0)
        r = emission_rate(QuantumState.pure(vec), modes)
        assert r == pytest.approx(2 * GAMMA0, rel=1e-9)


class TestQuantumJumpTrajectory:
    def test_single_emitter_one_event_per_pulse(self):
        # period of 24 lifetimes: truncation odds ~ 4e3 * e^-24 ~ 1e-7
        coup, modes = uniform_modes(1, GAMMA0, 0.0)
        exc = ExcitationModel(period_ns=1200.0, p_excite=1.0, n_pulses=4000)
        rec = quantum_jump_trajectory(coup, modes, exc, seed=5)
        assert len(rec.times_ns) == 4000
        counts = np.bincount(rec.pulse_indices, minlength=4000)
        assert (counts == 1).all()
        # exponential delay: the sample mean estimates the lifetime
        tau_hat = rec.times_ns.mean()
        se = (1.0 / GAMMA0) / np.sqrt(4000)
        assert abs(tau_hat - 1.0 / GAMMA0) < 3 * se

    def test_uncoupled_triple_conserves_photons(self):
        coup, modes = uniform_modes(3, GAMMA0, 0.0)
        exc = ExcitationModel(period_ns=2000.0, p_excite=1.0, n_pulses=800)
        rec = quantum_jump_trajectory(coup, modes, exc, seed=6)
        counts = np.bincount(rec.pulse_indices, minlength=800)
        assert (counts == 3).all()

    def test_partial_excitation_conserves_photons(self):
        coup, modes = uniform_modes(4, GAMMA0, 0.7)
        exc = ExcitationModel(period_ns=3000.0, p_excite=0.6, n_pulses=1500)
        rec = quantum_jump_trajectory(coup, modes, exc, seed=7)
        counts = np.bincount(rec.pulse_indices, minlength=1500)
        assert counts.max() <= 4
        mean = counts.mean()
        se = np.sqrt(4 * 0.6 * 0.4 / 1500)
        assert abs(mean - 2.4) < 4 * se

    def test_identical_seed_reproduces_stream(self):
        coup, modes = uniform_modes(3, GAMMA0, 0.5)
        exc = ExcitationModel(period_ns=1500.0, p_excite=1.0, n_pulses=300)
        a = quantum_jump_trajectory(coup, modes, exc, seed=42)
        b = quantum_jump_trajectory(coup, modes, exc, seed=42)
        assert a.times_ns.tobytes() == b.times_ns.tobytes()
        assert a.pulse_indices.tobytes() == b.pulse_indices.tobytes()
        assert a.channels.tobytes() == b.channels.tobytes()

    def test_different_seed_changes_stream(self):
        coup, modes = uniform_modes(2, GAMMA0, 0.5)
        exc = ExcitationModel(period_ns=1500.0, p_excite=1.0, n_pulses=100)
        a = quantum_jump_trajectory(coup, modes, exc, seed=1)
        b = quantum_jump_trajectory(coup, modes, exc, seed=2)
        assert a.times_ns.tobytes() != b.times_ns.tobytes()

    def test_sharding_by_pulse_offset_is_exact(self):
        # a pulse's randomness depends only on (seed, pulse index), so a
        # split run must reproduce the single run byte for byte
        coup, modes = uniform_modes(3, GAMMA0, 0.5)
        full = quantum_jump_trajectory(
            coup, modes, ExcitationModel(1500.0, 1.0, 400), seed=9
        )
        lo = quantum_jump_trajectory(
            coup, modes, ExcitationModel(1500.0, 1.0, 250), seed=9
        )
        hi = quantum_jump_trajectory(
            coup, modes, ExcitationModel(1500.0, 1.0, 150), seed=9, pulse_offset=250
        )
        assert np.concatenate([lo.times_ns, hi.times_ns]).tobytes() == full.times_ns.tobytes()
        assert np.concatenate([lo.pulse_indices, hi.pulse_indices]).tobytes() == full.pulse_indices.tobytes()

    def test_channels_index_modes(self):
        coup, modes = uniform_modes(2, GAMMA0, 1.0)
        exc = ExcitationModel(period_ns=2000.0, p_excite=1.0, n_pulses=500)
        rec = quantum_jump_trajectory(coup, modes, exc, seed=12)
        assert set(np.unique(rec.channels)) <= {0, 1}
        # ideal coupling funnels every jump through the bright channel
        assert (rec.channels == 0).all()

    def test_scale_cap(self):
        coup, modes = uniform_modes(17, GAMMA0, 0.0)
        with pytest.raises(ValueError, match="16"):
            quantum_jump_trajectory(
                coup, modes, ExcitationModel(100.0, 1.0, 1), seed=0
            )

    def test_short_period_warns(self):
        coup, modes = uniform_modes(2, GAMMA0, 0.0)
        with pytest.warns(UserWarning, match="period"):
            quantum_jump_trajectory(
                coup, modes, ExcitationModel(10.0, 1.0, 5), seed=0
            )

    def test_dark_modes_do_not_trigger_period_warning(self):
        # fully coupled ensembles have near-zero dark rates that must not
        # be mistaken for slow radiative channels
        coup, modes = uniform_modes(4, GAMMA0, 1.0)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            quantum_jump_trajectory(
                coup, modes, ExcitationModel(400.0, 1.0, 5), seed=0
            )


class TestSimulatePulsedExperiment:
    def test_zero_pulses_empty_stream(self):
        coup, modes = uniform_modes(1, GAMMA0, 0.0)
        s = simulate_pulsed_experiment(
            coup, modes, ExcitationModel(400.0, 1.0, 0), seed=1
        )
        assert len(s) == 0

    def test_single_emitter_stream_length(self):
        coup, modes = uniform_modes(1, GAMMA0, 0.0)
        s = simulate_pulsed_experiment(
            coup, modes, ExcitationModel(1500.0, 1.0, 10_000), seed=1
        )
        assert len(s) == 10_000
        assert (s.detector == -1).all()
        assert s.delay_ps.max() < 1_500_000
        t = s.absolute_times_ps()
        assert (np.diff(t) >= 0).all()

    def test_meta_records_provenance(self):
        coup, modes = uniform_modes(2, GAMMA0, 0.3)
        s = simulate_pulsed_experiment(
            coup, modes, ExcitationModel(500.0, 1.0, 10), seed=77
        )
        assert s.meta["seed"] == 77
        assert s.meta["period_ns"] == 500.0
        assert s.meta["n_pulses"] == 10
        assert isinstance(s.meta["config_hash"], str) and s.meta["config_hash"]

    def test_intermediate_coupling_rate_bracketed(self):
        from qdcount.detection import build_decay_histogram
        from qdcount.photstat import fit_decay

        coup, modes = uniform_modes(5, GAMMA0, 0.3)
        s = simulate_pulsed_experiment(
            coup, modes, ExcitationModel(1500.0, 1.0, 30_000), seed=3
        )
        assert len(s) == 150_000
        h = build_decay_histogram(s, 500)
        fit = fit_decay(h, model="biexp")
        g_fast = max(fit.gamma1, fit.gamma2 or 0.0)
        assert GAMMA0 < g_fast < 5 * GAMMA0


class TestBurstShape:
    def test_ideal_coupling_peaks_after_zero(self):
        from qdcount.detection import build_decay_histogram

        coup, modes = uniform_modes(5, 1.0 / 48.95, 1.0)
        s = simulate_pulsed_experiment(
            coup, modes, ExcitationModel(300.0, 1.0, 30_000), seed=21
        )
        h = build_decay_histogram(s, 1000)
        assert np.argmax(h.counts) > 0

    def test_uncoupled_peaks_at_zero(self):
        from qdcount.detection import build_decay_histogram

        coup, modes = uniform_modes(5, 1.0 / 48.95, 0.0)
        s = simulate_pulsed_experiment(
            coup, modes, ExcitationModel(1500.0, 1.0, 30_000), seed=22
        )
        h = build_decay_histogram(s, 1000)
        assert np.argmax(h.counts) == 0
