import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from reitrans.params import TWO_PI, SystemParams, default_paper_params

settings.register_profile("default", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def paper():
    return default_paper_params()


def log_uniform(rng, lo, hi):
    return math.exp(rng.uniform(math.log(lo), math.log(hi)))


def random_system(rng, *, symmetric_pops=False, passive=False, detuned=True) -> SystemParams:
    """Random physical parameter set spanning weak to strong coupling.

    ``symmetric_pops`` forces n_g = n_e1 (the reciprocal case); ``passive``
    keeps n_e1 <= n_g so that no port sees gain.
    """
    ko = TWO_PI * log_uniform(rng, 1e6, 1e11)
    ke = TWO_PI * log_uniform(rng, 1e4, 1e8)
    Go = TWO_PI * log_uniform(rng, 1e5, 1e9)
    Ge = TWO_PI * log_uniform(rng, 1e3, 1e7)
    pops = sorted(rng.dirichlet([1.0, 1.0, 1.0, 1.0])[:3])
    n_e2 = pops[0]
    hi_pop, lo_pop = pops[2], pops[1]
    if passive or rng.random() < 0.5:
        n_g, n_e1 = hi_pop, lo_pop
    else:
        n_g, n_e1 = lo_pop, hi_pop
    if symmetric_pops:
        n_g = n_e1 = 0.5 * (n_g + n_e1)
    det = (lambda s: rng.normal(0.0, s)) if detuned else (lambda s: 0.0)
    return SystemParams(
        kappa_o_ext=ko * rng.uniform(0.05, 0.95), kappa_o_int=ko * rng.uniform(0.05, 0.95),
        kappa_e_ext=ke * rng.uniform(0.05, 0.95), kappa_e_int=ke * rng.uniform(0.05, 0.95),
        gamma_o=Go * rng.uniform(0.01, 1.0), gamma_s=Ge * rng.uniform(0.01, 1.0),
        Gamma_o=Go, Gamma_e=Ge, omega_e=TWO_PI * 3e9,
        g_o_tot=math.sqrt(ko * Go) * log_uniform(rng, 1e-3, 10.0),
        g_e_tot=math.sqrt(ke * Ge) * log_uniform(rng, 1e-3, 10.0),
        Omega_pump=math.sqrt(Go * Ge) * log_uniform(rng, 1e-3, 10.0),
        delta_oc=det(ko), delta_ec=det(ke),
        n_g=float(n_g), n_e1=float(n_e1), n_e2=float(n_e2), manifold_fraction=1.0,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
