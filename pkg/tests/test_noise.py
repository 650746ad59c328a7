import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import constants as sc

from conftest import random_system
from reitrans.coop import cooperativities
from reitrans.harness.lm import FitError
from reitrans.noise import (NoiseBudget, PhononBathParams, bose_occupation,
                            bottleneck_coefficient, direct_process_rate, fit_hemt,
                            hemt_output_power, mode_collection_fraction, noise_budget, output_psd,
                            output_psd_resonant, pl_count_rate, read_thermometry_csv,
                            spin_susceptibility)
from reitrans.params import TWO_PI, ParameterError
from reitrans.scattering import added_noise_rti, single_atom_result

seeds = st.integers(min_value=0, max_value=2**32 - 1)
OMEGA = TWO_PI * 3.37e9

# high-precision oracle values (mpmath), frozen
BOSE_05K = 2.61839537677477
BOTTLENECK = 174405484.4354772
DIRECT_RATE = 0.0114675290864338
PL_EMITTED = 768561.17616571


def paper_bath(**kw):
    args = dict(rho=4e24, nu=4e3, omega=OMEGA, Gamma=TWO_PI * 160e3, T_spin=0.5, tau1=1e-6,
                L_crystal=4e-3)
    args.update(kw)
    return PhononBathParams.from_crystal(**args)


# thermal occupation

def test_bose_zero_temperature():
    assert bose_occupation(OMEGA, 0.0) == 0.0


def test_bose_ln2_identity():
    T = sc.hbar * OMEGA / (sc.k * math.log(2))
    assert bose_occupation(OMEGA, T) == pytest.approx(1.0, rel=1e-14)


def test_bose_device_point():
    n = bose_occupation(OMEGA, 0.5)
    assert n == pytest.approx(BOSE_05K, rel=1e-8)
    high_t = sc.k * 0.5 / (sc.hbar * OMEGA) - 0.5
    assert n == pytest.approx(high_t, rel=0.02)
    assert n == pytest.approx(2.66, rel=0.02)


def test_bose_negative_temperature_rejected():
    with pytest.raises(ParameterError):
        bose_occupation(OMEGA, -1.0)


def test_bose_vectorized():
    out = bose_occupation(OMEGA, np.array([0.0, 0.1, 1.0]))
    assert out.shape == (3,) and out[0] == 0.0 and np.all(np.diff(out) > 0)


@given(omega=st.floats(1e6, 1e12), T=st.floats(0.0, 1e3))
def test_bose_vacuum_bound(omega, T):
    n = bose_occupation(omega, T)
    assert n + 0.5 >= max(n, 0.5)


@given(omega=st.floats(1e6, 1e12), factor=st.floats(20.0, 1e4))
def test_bose_high_temperature_limit(omega, factor):
    T = factor * sc.hbar * omega / sc.k
    n = bose_occupation(omega, T)
    assert n == pytest.approx(sc.k * T / (sc.hbar * omega) - 0.5, rel=0.01)


# HEMT calibration

def test_hemt_vacuum_term():
    G, B, N = 1e7, 1e6, 8.0
    assert hemt_output_power(0.0, G, B, N, OMEGA) == pytest.approx(
        sc.hbar * OMEGA * G * B * (N + 0.5), rel=1e-15)


def test_hemt_linear_in_bandwidth():
    assert hemt_output_power(1.0, 1e7, 2e6, 8.0, OMEGA) == pytest.approx(
        2 * hemt_output_power(1.0, 1e7, 1e6, 8.0, OMEGA), rel=1e-15)


def test_hemt_rejects_bad_gain():
    with pytest.raises(ParameterError):
        hemt_output_power(1.0, 0.0, 1e6, 8.0, OMEGA)


T_GRID = np.geomspace(0.02, 4.0, 20)


def synthetic_hemt(G, N, B, noise=0.0, rng=None):
    P = hemt_output_power(T_GRID, G, B, N, OMEGA)
    if noise:
        P = P * (1 + noise * rng.standard_normal(P.size))
    return list(zip(T_GRID, P))


@pytest.mark.parametrize("G,N", [(1e7, 8.0), (3.2e6, 15.0), (1e8, 0.5)])
def test_fit_hemt_noiseless_exact(G, N):
    Gf, Nf, cov = fit_hemt(synthetic_hemt(G, N, 1e6), OMEGA, 1e6)
    assert Gf == pytest.approx(G, rel=1e-6)
    assert Nf == pytest.approx(N, rel=1e-6)
    assert cov.shape == (2, 2)


def test_fit_hemt_noisy_within_three_sigma():
    rng = np.random.default_rng(5)
    G, N = 1e7, 8.0
    Gf, Nf, cov = fit_hemt(synthetic_hemt(G, N, 1e6, 0.01, rng), OMEGA, 1e6)
    err = np.sqrt(np.diag(cov))
    assert abs(Gf - G) <= 3 * err[0]
    assert abs(Nf - N) <= 3 * err[1]
    assert Gf == pytest.approx(G, rel=0.01) and Nf == pytest.approx(N, rel=0.05)


@pytest.mark.slow
def test_fit_hemt_coverage():
    rng = np.random.default_rng(17)
    G, N = 1e7, 8.0
    hits = np.zeros(2)
    reps = 200
    for _ in range(reps):
        Gf, Nf, cov = fit_hemt(synthetic_hemt(G, N, 1e6, 0.01, rng), OMEGA, 1e6)
        err = np.sqrt(np.diag(cov))
        hits += np.abs([Gf - G, Nf - N]) <= err
    assert np.all(hits / reps >= 0.6)


def test_fit_hemt_degenerate():
    P = hemt_output_power(0.5, 1e7, 1e6, 8.0, OMEGA)
    with pytest.raises(FitError):
        fit_hemt([(0.5, P), (0.5, P), (0.5, P)], OMEGA, 1e6)
    with pytest.raises(FitError):
        fit_hemt([(0.5, P), (1.0, 2 * P)], OMEGA, 1e6)
    with pytest.raises(FitError):
        fit_hemt([(0.1, P), (0.5, -P), (1.0, P)], OMEGA, 1e6)


def test_read_thermometry_csv(tmp_path):
    path = tmp_path / "cal.csv"
    rows = synthetic_hemt(1e7, 8.0, 1e6)
    path.write_text("T_K,P_W,freq_Hz,bandwidth_Hz\n"
                    + "".join(f"{float(T)!r},{float(P)!r},3.37e9,1e6\n" for T, P in rows))
    samples, omega, B = read_thermometry_csv(path)
    assert omega == OMEGA and B == 1e6 and len(samples) == 20
    G, N, _ = fit_hemt(samples, omega, B)
    assert G == pytest.approx(1e7, rel=1e-6) and N == pytest.approx(8.0, rel=1e-6)


def test_read_thermometry_csv_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("T,P\n1,2\n")
    with pytest.raises(ParameterError):
        read_thermometry_csv(bad)
    text = tmp_path / "text.csv"
    text.write_text("T_K,P_W,freq_Hz,bandwidth_Hz\n1,one,3e9,1e6\n")
    with pytest.raises(ParameterError):
        read_thermometry_csv(text)
    mixed = tmp_path / "mixed.csv"
    mixed.write_text("T_K,P_W,freq_Hz,bandwidth_Hz\n1,1,3e9,1e6\n2,2,4e9,1e6\n")
    with pytest.raises(ParameterError):
        read_thermometry_csv(mixed)


# output noise spectrum

def test_susceptibility_absorptive(paper):
    p, _ = paper
    C = spin_susceptibility(p, np.linspace(-1e7, 1e7, 11))
    assert np.all(C.real >= 0)
    assert spin_susceptibility(p, 0.0).real > 0


def test_psd_bare_critical_cavity_emits_bath(paper):
    p, _ = paper
    q = p.replace(g_e_tot=0.0, kappa_e_ext=1e6, kappa_e_int=1e6)
    assert output_psd(q, 0.0, 0.0, 0.3, 1.7) == pytest.approx(1.7, rel=1e-14)


def test_psd_bare_cavity_filter_on_grid(paper):
    p, _ = paper
    q = p.replace(g_e_tot=0.0)
    kc, ki = q.kappa_e_ext, q.kappa_e_int
    D = np.linspace(-5 * q.kappa_e, 5 * q.kappa_e, 201)
    Nw, Nr = 0.4, 2.5
    den = (kc + ki) ** 2 / 4 + D**2
    expected = (((kc - ki) ** 2 / 4 + D**2) * Nw + kc * ki * Nr) / den
    np.testing.assert_allclose(output_psd(q, D, 0.0, Nw, Nr), expected, rtol=1e-12)


def test_psd_resonant_form_device(paper):
    p, _ = paper
    Ce = cooperativities(p, delta_e=0.0).C_e.real
    direct = output_psd(p, 0.0, 0.0, 0.2, 1.1)
    assert direct == pytest.approx(output_psd_resonant(Ce, p.kappa_e_ext, p.kappa_e_int, 0.2, 1.1),
                                   rel=1e-12)


@settings(max_examples=1000)
@given(seed=seeds, Nw=st.floats(0, 100), Nr=st.floats(0, 100))
def test_psd_resonant_matches_full(seed, Nw, Nr):
    p = random_system(np.random.default_rng(seed), passive=True)
    Ce = 4 * p.g_e_tot**2 * p.pop_spin / (p.kappa_e * p.Gamma_e)
    full = output_psd(p, 0.0, 0.0, Nw, Nr)
    assert full == pytest.approx(output_psd_resonant(Ce, p.kappa_e_ext, p.kappa_e_int, Nw, Nr),
                                 rel=1e-12, abs=1e-300)


def test_psd_strong_coupling_tends_to_waveguide(paper):
    p, _ = paper
    kc, ki = p.kappa_e_ext, p.kappa_e_int
    vals = [output_psd_resonant(Ce, kc, ki, 1.0, 5.0) for Ce in (1e2, 1e4, 1e6)]
    assert abs(vals[-1] - 1.0) < abs(vals[0] - 1.0)
    assert vals[-1] == pytest.approx(1.0, rel=1e-4)


# phonon bottleneck and photoluminescence

def test_phonon_escape_time():
    b = paper_bath()
    assert b.tau_ph == pytest.approx(500e-9, rel=1e-15)


def test_bath_params_positive():
    with pytest.raises(ParameterError):
        paper_bath(T_spin=0.0)


def test_bottleneck_device_band():
    b = bottleneck_coefficient(paper_bath())
    assert b == pytest.approx(BOTTLENECK, rel=1e-8)
    assert 1e7 <= b <= 1e9


def test_bottleneck_half_argument_variant():
    printed = bottleneck_coefficient(paper_bath())
    half = bottleneck_coefficient(paper_bath(), half_argument=True)
    x = sc.hbar * OMEGA / (sc.k * 0.5)
    assert half / printed == pytest.approx((math.tanh(x / 2) / math.tanh(x)) ** 2, rel=1e-12)


def test_bottleneck_limits():
    assert bottleneck_coefficient(paper_bath(T_spin=1e9)) < 1e-8 * BOTTLENECK
    assert bottleneck_coefficient(paper_bath(rho=8e24)) == pytest.approx(2 * BOTTLENECK,
                                                                         rel=1e-8)


def test_direct_rate():
    b = paper_bath()
    R = direct_process_rate(b)
    assert R == pytest.approx(DIRECT_RATE, rel=1e-8)
    assert 10e-3 <= R <= 200e-3
    assert direct_process_rate(b, bottleneck=0.0) == 1.0 / (b.tau1 + b.tau_ph)


def test_pl_count_rate_device():
    V = math.pi * (20e-6) ** 2 * 8e-6
    emitted = pl_count_rate(DIRECT_RATE, 20e-6, 4e24, V, 0.05, 600e-6, 1.0)
    assert emitted == pytest.approx(PL_EMITTED, rel=1e-8)
    from reitrans.harness.context import PL_DETECTION_EFF
    detected = pl_count_rate(direct_process_rate(paper_bath()), 20e-6, 4e24, V, 0.05, 600e-6,
                             PL_DETECTION_EFF)
    assert 1.0 <= detected <= 100.0


def test_pl_count_rate_trivial():
    V = 1e-14
    assert pl_count_rate(0.0, 20e-6, 4e24, V, 0.05, 600e-6, 0.1) == 0.0
    one = pl_count_rate(0.01, 20e-6, 4e24, V, 0.05, 600e-6, 0.1)
    assert pl_count_rate(0.01, 20e-6, 4e24, V, 0.05, 600e-6, 0.2) == pytest.approx(2 * one,
                                                                                   rel=1e-15)
    with pytest.raises(ParameterError):
        pl_count_rate(0.01, 0.0, 4e24, V, 0.05, 600e-6, 0.1)


def test_mode_collection_fraction():
    theta = 1e-6 / (math.pi * 2.0 * 10e-6)
    assert mode_collection_fraction(1e-6, 10e-6, 2.0, passes=1) == pytest.approx(theta**2 / 4)
    assert mode_collection_fraction(1e-6, 10e-6, 2.0) == pytest.approx(theta**2 / 2)


# budget

def test_budget_zero_noise():
    assert noise_budget(0.01, 0.0, 0.0).N_add_RTI == 0.0


def test_budget_reference_shape():
    b = noise_budget(0.01, 0.0100, 0.0024)
    assert b.N_add_RTI == pytest.approx(1.24, rel=1e-12)
    assert b == NoiseBudget(0.0100, 0.0024, b.N_add_RTI, 0.01)


def test_budget_errors():
    with pytest.raises(ZeroDivisionError):
        noise_budget(0.0, 1.0, 1.0)
    with pytest.raises(ParameterError):
        noise_budget(0.1, -1.0, 0.0)


@given(eta=st.floats(1e-6, 1.0), nth=st.floats(0, 10), npl=st.floats(0, 10))
def test_budget_invariants(eta, nth, npl):
    b = noise_budget(eta, nth, npl)
    assert min(b.N_th, b.N_PL, b.N_add_RTI, b.eta_used) >= 0
    assert b.N_add_RTI == pytest.approx((nth + npl) / eta, rel=1e-15)


def test_scattering_path_agrees_with_budget(paper):
    p, _ = paper
    # resonator temperature as if fitted from a thermometry sweep
    samples = synthetic_hemt(1e7, 8.0, 1e6)
    G, N, _ = fit_hemt(samples, OMEGA, 1e6)
    T_res = 0.12
    N_wg = bose_occupation(p.omega_e, 0.014)
    N_res = bose_occupation(p.omega_e, T_res)
    r = single_atom_result(p, TWO_PI * 0.2e6)
    idx = r.index
    # thermal photons arriving at the optical output from both microwave baths
    N_th_out = (abs(r.element(idx.a_ext, idx.b_ext)) ** 2 * N_wg
                + abs(r.element(idx.a_ext, idx.b_int)) ** 2 * N_res)
    budget = noise_budget(r.eta_m2o, N_th_out, 0.0)
    assert budget.N_add_RTI == pytest.approx(added_noise_rti(r, p, N_wg, N_res), rel=1e-10)
    assert G > 0 and N > 0
