"""Release gate: end-to-end calibration of the whole toolkit.

Eight checks, each printing one PASS line with its measured numbers and
wall-clock time.  Together they walk the full chain: closed-form g2
expressions against a brute-force operator oracle, trajectory sampling
against the master equation, estimator calibration on ensembles with known
statistics, the cubic inversion round trip, the batch pipeline against the
simulator's own ground truth, peak-brightness and lifetime scaling laws,
and bi-exponential lifetime recovery at realistic count levels.

Budgets are part of the gate: every check asserts its wall-clock ceiling,
so a performance regression fails the suite even when the physics holds.
"""

import time

import numpy as np
import pytest
from scipy.stats import chi2

from conftest import random_coupling, uniform_modes
from qdcount.detection import (
    DecayHistogram,
    DetectorConfig,
    apply_detector_chain,
    build_coincidence_histogram,
    build_decay_histogram,
)
from qdcount.dynamics import (
    ExcitationModel,
    QuantumState,
    lindblad_propagate,
    quantum_jump_trajectory,
    simulate_pulsed_experiment,
)
from qdcount.ensemble import CollectiveModes, collective_modes, coupling_uniform
from qdcount.photstat import (
    estimate_g2_area_ratio,
    estimate_g2_instantaneous,
    fit_decay,
    fit_power_law,
    g2_analytic_modes,
    g2_dominant_channel,
    g2_oracle_fully_excited,
    peak_intensity,
)
from qdcount.pipeline import ExperimentConfig, run_pipeline
from qdcount.resolver import fit_lifetime_scaling, solve_n

GAMMA0 = 0.02


def modes_from_rates(rates):
    rates = np.asarray(rates, dtype=float)
    order = np.argsort(rates)[::-1]
    return CollectiveModes(rates=rates[order], vectors=np.eye(rates.size))


def detected(n, kappa, n_pulses, seed, gamma0, period_ns):
    coup = coupling_uniform(n, gamma0, kappa)
    modes = collective_modes(coup)
    exc = ExcitationModel(period_ns=period_ns, p_excite=1.0, n_pulses=n_pulses)
    raw = simulate_pulsed_experiment(coup, modes, exc, seed)
    return apply_detector_chain(raw, DetectorConfig(), seed)


def _gate(name, t0, budget_s, detail):
    elapsed = time.monotonic() - t0
    print(f"PASS {name}: {detail} ({elapsed:.1f} s, budget {budget_s:g} s)")
    assert elapsed < budget_s, f"{name} exceeded its {budget_s:g} s budget: {elapsed:.1f} s"


def test_analytic_g2_closed_forms():
    """Zero for a lone emitter, 1 - 1/N for flat spectra, and the
    single-bright-channel identity, all at working precision."""
    t0 = time.monotonic()
    _, single = uniform_modes(1, GAMMA0, 0.0)
    assert g2_analytic_modes(single, GAMMA0).value == 0.0
    for n in range(1, 21):
        flat = g2_analytic_modes(modes_from_rates(np.full(n, GAMMA0)), GAMMA0).value
        assert flat == pytest.approx(1.0 - 1.0 / n, abs=1e-12)
    gc = 1.7 * GAMMA0
    for n in range(2, 51):
        rel = np.zeros(n)
        rel[0] = gc / GAMMA0
        # population variance of {Gc, 0, ..., 0} relative to the mean rate
        assert n * rel.var() == pytest.approx(
            (n - 1) * gc**2 / (n * GAMMA0**2), rel=1e-12
        )
        spectrum = np.zeros(n)
        spectrum[0] = gc
        via_modes = g2_analytic_modes(modes_from_rates(spectrum), GAMMA0).value
        direct = g2_dominant_channel(n, gc, GAMMA0).value
        assert direct == pytest.approx(via_modes, abs=1e-12)
    _gate(
        "analytic g2 layer",
        t0,
        1.0,
        "N=1 exact zero, flat spectra N=1..20 at 1e-12, bright-channel identity N=2..50",
    )


def test_mode_formula_matches_brute_force_oracle():
    """Closed-form mode-variance g2 against explicit operator algebra in
    the full 2^N basis, on random positive-semidefinite decay matrices."""
    t0 = time.monotonic()
    rng = np.random.default_rng(20260814)
    worst = 0.0
    for n in (2, 3, 4, 5):
        for _ in range(50):
            coup = random_coupling(rng, n)
            modes = collective_modes(coup)
            brute = g2_oracle_fully_excited(modes).value
            closed = g2_analytic_modes(modes, float(np.diag(coup.gamma).mean())).value
            worst = max(worst, abs(brute - closed))
    assert worst < 1e-9
    _gate(
        "mode formula vs operator oracle",
        t0,
        10.0,
        f"200 random decay matrices, N in 2..5, max |diff| {worst:.2e}",
    )


def test_jump_sampling_matches_master_equation():
    """Event-time densities from 1e5 Monte Carlo pulses against the
    master-equation emission rate, for three sizes times three coupling
    strengths, plus exact photon-number conservation per pulse."""
    t0 = time.monotonic()
    n_pulses = 100_000
    edges = np.append(np.arange(0.0, 600.0 + 1e-9, 3.0), 2500.0)
    worst = ("", 0.0)
    for n in (2, 3, 4):
        for kappa in (0.0, 0.5, 1.0):
            coup = coupling_uniform(n, GAMMA0, kappa)
            modes = collective_modes(coup)
            exc = ExcitationModel(period_ns=2500.0, p_excite=1.0, n_pulses=n_pulses)
            rec = quantum_jump_trajectory(coup, modes, exc, seed=314159)

            per_pulse = np.bincount(rec.pulse_indices, minlength=n_pulses)
            assert (per_pulse == n).all(), f"photon count broken at N={n} kappa={kappa}"

            states = lindblad_propagate(coup, modes, QuantumState.fully_excited(n), edges)
            excitation = np.array([st.excitation() for st in states])
            expected = n_pulses * -np.diff(excitation)
            observed = np.histogram(rec.times_ns, bins=edges)[0].astype(float)

            # merge consecutive bins until each carries >= 10 expected counts
            exp_m, obs_m, acc_e, acc_o = [], [], 0.0, 0.0
            for e, o in zip(expected, observed):
                acc_e += e
                acc_o += o
                if acc_e >= 10.0:
                    exp_m.append(acc_e)
                    obs_m.append(acc_o)
                    acc_e = acc_o = 0.0
            exp_m[-1] += acc_e
            obs_m[-1] += acc_o
            exp_m = np.array(exp_m)
            obs_m = np.array(obs_m)

            stat = float(np.sum((obs_m - exp_m) ** 2 / exp_m))
            bound = float(chi2.ppf(0.99, len(exp_m)))
            assert stat < bound, (
                f"N={n} kappa={kappa}: chi2 {stat:.1f} over {len(exp_m)} bins "
                f"exceeds the 1% bound {bound:.1f}"
            )
            ratio = stat / len(exp_m)
            if ratio > worst[1]:
                worst = (f"N={n} kappa={kappa}", ratio)
    _gate(
        "trajectory sampling vs master equation",
        t0,
        300.0,
        f"9 cells consistent at 1% significance, worst chi2/bins {worst[1]:.2f} at {worst[0]}; "
        "photon number exact on every pulse",
    )


def test_estimator_calibration_on_known_ensembles():
    """Area-ratio g2 on four independent emitters, instantaneous g2 on a
    fully coupled and an uncoupled pair, all lossless."""
    t0 = time.monotonic()
    four = detected(4, 0.0, 1_000_000, seed=424242, gamma0=0.02, period_ns=1500.0)
    area = estimate_g2_area_ratio(build_coincidence_histogram(four, 500, k_periods=5))
    assert area.value == pytest.approx(0.75, abs=0.02)

    inst = {}
    for kappa in (1.0, 0.0):
        # slow dynamics keep pair-gap suppression inside the window small
        s = detected(2, kappa, 2_000_000, seed=424242, gamma0=0.01, period_ns=3000.0)
        est = estimate_g2_instantaneous(s, build_decay_histogram(s, 100), 1250.0)
        inst[kappa] = est.value
    assert inst[1.0] == pytest.approx(1.0, abs=0.05)
    assert inst[0.0] == pytest.approx(0.5, abs=0.05)
    _gate(
        "estimator calibration",
        t0,
        300.0,
        f"area-ratio {area.value:.4f} (want 0.75 +- 0.02), instantaneous "
        f"{inst[1.0]:.4f} on a coupled pair (want 1.00 +- 0.05) and "
        f"{inst[0.0]:.4f} uncoupled (want 0.50 +- 0.05)",
    )


def test_cubic_inversion_round_trip_is_exhaustive():
    """Forward g2 then invert, for every emitter number 1..10 crossed with
    lifetime ratios 1.0..3.0; the integer and the real root must both come
    back."""
    t0 = time.monotonic()
    tau0 = 48.0
    ratios = np.arange(1.0, 3.0 + 1e-9, 0.2)
    for n in range(1, 11):
        for r in ratios:
            g2 = g2_dominant_channel(n, r / tau0, 1.0 / tau0).value
            est = solve_n(g2, tau0 / r, tau0)
            assert est.n_int == n, f"N={n} r={r:.1f}: resolved {est.n_int}"
            assert abs(est.n_real - n) < 1e-6, f"N={n} r={r:.1f}: root {est.n_real}"
    _gate(
        "cubic inversion round trip",
        t0,
        1.0,
        f"{10 * ratios.size} (N, ratio) pairs recovered exactly",
    )


def test_pipeline_resolves_configured_emitter_numbers(tmp_path):
    """Full batch run over N = 1..10 with collective rates following the
    fitted lifetime-scaling curve; at a 1e5-pulse budget at least 9 of 10
    records must resolve to their configured emitter number."""
    t0 = time.monotonic()
    # calibration pairs (N, tau1(ns)) fix the scaling curve tau1 = b + a/N
    scaling = fit_lifetime_scaling([(1, 48.95), (2, 31.42), (5, 24.72), (10, 19.39)])
    records = []
    for n in range(1, 11):
        tau0 = n * (scaling.b_ns + scaling.a_ns / n)
        records.append(
            {
                "label": f"n{n:02d}",
                "n_emitters": n,
                "coupling": "uniform",
                "kappa": 1.0,
                "tau0_ns": tau0,
                "tau0_ref_ns": tau0,
            }
        )
    cfg = ExperimentConfig.from_dict(
        {
            "schema_version": 1,
            "seed": 1234,
            "excitation": {"period_ns": 300.0, "p_excite": 1.0, "n_pulses": 100_000},
            "analysis": {
                "estimator": "instantaneous",
                "g2_window_ps": 2500.0,
                "decay_bin_width_ps": 500,
                "decay_model": "mono",
                "decay_mode": "first_photon",
            },
            "nanoparticles": records,
        }
    )
    report = run_pipeline(cfg, out_dir=tmp_path)
    resolved = {}
    for n in range(1, 11):
        est = report.record(f"n{n:02d}")["n_estimate"]
        resolved[n] = None if est is None else est["n_int"]
    hits = sum(resolved[n] == n for n in resolved)
    assert hits >= 9, f"only {hits}/10 records resolved correctly: {resolved}"
    _gate(
        "end-to-end number resolution",
        t0,
        900.0,
        f"{hits}/10 records correct, misses "
        f"{ {n: v for n, v in resolved.items() if v != n} or 'none'}",
    )


def test_peak_scaling_and_lifetime_floor():
    """Peak brightness grows superlinearly with N for fully coupled
    ensembles and linearly for independent ones; fitted collective
    lifetimes follow a positive 1/N slope with a non-negative floor."""
    t0 = time.monotonic()
    dicke_pts, unc_pts, life_pts = [], [], []
    for n in range(2, 7):
        for kappa, sink in ((1.0, dicke_pts), (0.0, unc_pts)):
            s = detected(n, kappa, 40_000, seed=777 + n, gamma0=GAMMA0, period_ns=1500.0)
            h = build_decay_histogram(s, 500)
            sink.append((n, peak_intensity(h).value))
            if kappa == 1.0:
                life_pts.append((n, fit_decay(h, "mono").tau1_ns))
    coupled = fit_power_law(dicke_pts)
    independent = fit_power_law(unc_pts)
    scaling = fit_lifetime_scaling(life_pts)
    assert coupled.exponent > 1.0
    assert 0.9 <= independent.exponent <= 1.1
    assert scaling.a_ns > 0.0
    assert scaling.b_ns >= 0.0
    _gate(
        "brightness and lifetime scaling",
        t0,
        600.0,
        f"peak exponent {coupled.exponent:.2f} coupled (want > 1) vs "
        f"{independent.exponent:.2f} independent (want 0.9..1.1); lifetime slope "
        f"a {scaling.a_ns:.1f} ns, floor b {scaling.b_ns:.1f} ns",
    )


def test_biexponential_recovery_from_poisson_counts():
    """Bi-exponential fit recovers tau1 = 30 ns and tau2 = 5 ns from a
    synthetic histogram with 1e6 Poisson counts, within 5 percent."""
    t0 = time.monotonic()
    t = np.arange(1000) * 0.1
    shape = 1000.0 * np.exp(-t / 30.0) + 400.0 * np.exp(-t / 5.0)
    counts = np.random.default_rng(0).poisson(1e6 / shape.sum() * shape)
    h = DecayHistogram(
        bin_width_ps=100, counts=counts, n_pulses=10**6, period_ns=100.0
    )
    fit = fit_decay(h, "biexp")
    tau1 = fit.tau1_ns
    tau2 = 1.0 / fit.gamma2
    assert fit.gamma1 < fit.gamma2
    assert tau1 == pytest.approx(30.0, rel=0.05)
    assert tau2 == pytest.approx(5.0, rel=0.05)
    _gate(
        "bi-exponential lifetime recovery",
        t0,
        30.0,
        f"tau1 {tau1:.2f} ns (want 30 +- 5%), tau2 {tau2:.2f} ns (want 5 +- 5%), "
        "rate ordering enforced",
    )
