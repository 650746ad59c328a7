import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_system
from reitrans.coop import cooperativities, efficiency_single_atom_exact
from reitrans.ensemble import (CSV_COLUMNS, EnsembleSpec, MonteCarloError, convergence_csv,
                               convergence_scan, mc_efficiency, mc_run, paper_spec,
                               sample_ensemble, trial_rng)
from reitrans.params import FWHM_PER_SIGMA, TWO_PI, ParameterError
from reitrans.scattering import solve

seeds = st.integers(min_value=0, max_value=2**32 - 1)
TINY = 1e-9


def homogeneous_spec(n_groups=10, n_trials=5, seed=0):
    return EnsembleSpec(TINY, TINY, math.inf, None, n_groups, n_trials, seed)


def closed_form_homogeneous(p, probe=0.0):
    return efficiency_single_atom_exact(cooperativities(p, probe=probe, homogeneous=True), p)


@pytest.mark.parametrize("kwargs", [dict(n_groups=0), dict(n_trials=0), dict(sigma_opt=0.0),
                                    dict(sigma_spin=-1.0), dict(beam_waist=0.0),
                                    dict(seed=-1), dict(mw_profile=((1.0, 0.5), (1.0, 1.0))),
                                    dict(mw_profile=((0.0, 1.0), (1.0,)))])
def test_spec_validation(kwargs):
    base = dict(sigma_opt=1.0, sigma_spin=1.0, beam_waist=1e-5)
    base.update(kwargs)
    with pytest.raises(ParameterError):
        EnsembleSpec(**base)


def test_trial_streams_are_independent_and_reproducible():
    a = trial_rng(7, 3).random(4)
    assert np.array_equal(a, trial_rng(7, 3).random(4))
    assert not np.array_equal(a, trial_rng(7, 4).random(4))
    assert not np.array_equal(a, trial_rng(8, 3).random(4))


def test_same_seed_bitwise_identical(paper):
    p, _ = paper
    spec = paper_spec(p, n_groups=50, seed=11)
    s1 = sample_ensemble(spec, p, 5)
    s2 = sample_ensemble(spec, p, 5)
    assert s1.groups == s2.groups and s1.seed_used == 11 and s1.trial == 5


@given(seed=seeds, k=st.integers(1, 200), waist=st.one_of(st.just(math.inf),
                                                           st.floats(1e-6, 1e-3)))
def test_coupling_conservation(seed, k, waist):
    from reitrans.params import default_paper_params
    p, _ = default_paper_params()
    spec = EnsembleSpec(1e6, 1e4, waist, ((0.0, 2e-5, 4e-5), (1.0, 0.9, 0.5)), k, 1, seed)
    groups = sample_ensemble(spec, p).groups
    assert math.fsum(g.weight * g.g_o**2 for g in groups) == pytest.approx(p.g_o_tot**2,
                                                                           rel=1e-6)
    assert math.fsum(g.weight * g.g_e**2 for g in groups) == pytest.approx(p.g_e_tot**2,
                                                                           rel=1e-6)
    assert math.fsum(g.Omega**2 for g in groups) / k == pytest.approx(p.Omega_pump**2, rel=1e-6)


def test_detunings_truncated_and_stratified(paper):
    p, _ = paper
    spec = EnsembleSpec(2.0, 3.0, 20e-6, None, 1000, 1, 4)
    groups = sample_ensemble(spec, p).groups
    d_o = np.array([g.delta_o for g in groups])
    d_e = np.array([g.delta_e for g in groups])
    assert np.all(np.abs(d_o) <= 4 * 2.0) and np.all(np.abs(d_e) <= 4 * 3.0)
    # one draw per equal-probability stratum: sorted quantiles sit in their own bins
    from scipy import stats
    u = np.sort(stats.norm.cdf(d_o / 2.0))
    lo, hi = stats.norm.cdf(-4), stats.norm.cdf(4)
    bins = np.floor((u - lo) / (hi - lo) * 1000).astype(int)
    assert np.array_equal(bins, np.arange(1000))
    assert abs(np.std(d_e) / 3.0 - 1) < 0.02


def test_optical_amplitude_follows_beam(paper):
    p, _ = paper
    groups = sample_ensemble(EnsembleSpec(1.0, 1.0, 20e-6, None, 400, 1, 0), p).groups
    g_o = np.array([g.g_o for g in groups])
    om = np.array([g.Omega for g in groups])
    np.testing.assert_allclose(om / g_o, (p.Omega_pump / p.g_o_tot) * math.sqrt(400),
                               rtol=1e-12)
    # equal-energy annuli of the intensity profile: intensity ratio spread uniformly in (0, 1]
    inten = (g_o / g_o.max()) ** 2
    assert inten.min() < 0.01 and inten.max() == 1.0


def test_flat_mw_profile_default(paper):
    p, _ = paper
    groups = sample_ensemble(EnsembleSpec(1.0, 1.0, 20e-6, None, 50, 1, 0), p).groups
    assert len({g.g_e for g in groups}) == 1


def test_homogeneous_limit_single_sample(paper):
    p, _ = paper
    sample = sample_ensemble(homogeneous_spec(25), p)
    assert len({(g.g_o, g.g_e, g.Omega) for g in sample.groups}) == 1
    r = solve(sample.groups, p, 0.0)
    assert r.eta_m2o == pytest.approx(closed_form_homogeneous(p), rel=1e-9)


@settings(max_examples=50)
@given(seed=seeds, k=st.integers(1, 30), probe=st.floats(-1e7, 1e7))
def test_homogeneous_limit_equivalence(seed, k, probe):
    p = random_system(np.random.default_rng(seed))
    mean, _ = mc_efficiency(homogeneous_spec(k, 2, seed), p, probe)
    assert mean == pytest.approx(closed_form_homogeneous(p, probe), rel=1e-9, abs=1e-300)


def test_single_trial_has_no_stderr(paper):
    p, _ = paper
    mean, err = mc_efficiency(paper_spec(p, n_groups=10, n_trials=1), p)
    assert err is None and mean > 0


def test_homogeneous_zero_variance(paper):
    p, _ = paper
    mean, err = mc_efficiency(homogeneous_spec(20, 20), p)
    assert err < 1e-12 * mean


def test_single_group_scan_matches_closed_form(paper):
    p, _ = paper
    rows = convergence_scan(homogeneous_spec(1, 3), p, 0.0, [1])
    assert rows[0]["mean_eta"] == pytest.approx(closed_form_homogeneous(p), rel=1e-9)


def test_scan_requires_ascending_counts(paper):
    p, _ = paper
    with pytest.raises(ParameterError):
        convergence_scan(homogeneous_spec(), p, 0.0, [10, 10])
    with pytest.raises(ParameterError):
        convergence_scan(homogeneous_spec(), p, 0.0, [])


def test_serial_and_parallel_agree(paper):
    p, _ = paper
    spec = paper_spec(p, n_groups=20, n_trials=40, seed=3)
    serial = mc_run(spec, p, TWO_PI * 1e5)
    parallel = mc_run(spec, p, TWO_PI * 1e5, workers=2)
    assert serial == parallel


def test_failures_abort(paper, monkeypatch):
    import reitrans.ensemble as ens
    p, _ = paper
    calls = iter(range(100))

    def flaky(args):
        return None if next(calls) % 10 == 0 else (0.1, 0.5)

    monkeypatch.setattr(ens, "_trial", flaky)
    with pytest.raises(MonteCarloError):
        mc_run(paper_spec(p, n_groups=5, n_trials=100), p)


def test_inhomogeneous_spin_broadening_lowers_efficiency(paper):
    p, _ = paper
    q = p.replace(gamma_s=p.Gamma_e / 10)
    hom = mc_run(EnsembleSpec(TINY, TINY, math.inf, None, 20, 10, 1), q)
    inh = mc_run(EnsembleSpec(TINY, p.Gamma_e / FWHM_PER_SIGMA, math.inf, None, 20, 200, 1), q)
    assert inh.mean < hom.mean - 5 * inh.stderr


@pytest.fixture(scope="module")
def paper_scan():
    from reitrans.params import default_paper_params
    p, _ = default_paper_params()
    return p, convergence_scan(paper_spec(p, n_trials=200), p, 0.0, [10, 30, 100, 300])


@pytest.mark.slow
def test_scan_stderr_shrinks(paper_scan):
    _, rows = paper_scan
    errs = [r["stderr"] for r in rows]
    assert all(b < a for a, b in zip(errs, errs[1:]))


@pytest.mark.slow
def test_scan_consistent_past_convergence(paper_scan):
    _, rows = paper_scan
    a, b = rows[2], rows[3]
    assert abs(a["mean_eta"] - b["mean_eta"]) <= 2 * math.hypot(a["stderr"], b["stderr"])


@pytest.mark.slow
def test_device_mc_within_factor_two_of_single_atom(paper):
    p, _ = paper
    mean, err = mc_efficiency(paper_spec(p, n_groups=200, n_trials=1000), p, 0.0)
    single = efficiency_single_atom_exact(cooperativities(p), p)
    assert 0.5 <= mean / single <= 2.0


def test_convergence_csv_columns(paper_scan):
    _, rows = paper_scan
    text = convergence_csv(rows)
    reader = list(csv.reader(io.StringIO(text)))
    assert tuple(reader[0]) == CSV_COLUMNS == ("n_groups", "mean_eta", "stderr", "n_trials",
                                               "seed")
    assert [int(r[0]) for r in reader[1:]] == [10, 30, 100, 300]
    assert float(reader[3][1]) == pytest.approx(rows[2]["mean_eta"], rel=1e-11)
