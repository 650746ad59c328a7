"""Closed-form cooperativities, efficiencies and material figures of merit."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import constants as sc
from scipy import integrate

from .params import TWO_PI, MaterialParams, ParameterError, SystemParams


@dataclass(frozen=True)
class Cooperativities:
    """Complex cooperativities at one operating point.

    ``delta_e`` and ``delta_o`` are the microwave/optical cavity detunings the
    values were evaluated at (relative to the probe), kept so the exact
    single-atom efficiency can rebuild its extraction factors.
    """

    C_e: complex
    C_o: complex
    C_a: complex
    C_a_mod: complex
    delta_e: float = 0.0
    delta_o: float = 0.0

    def magnitudes(self) -> dict[str, float]:
        return {k: abs(getattr(self, k)) for k in ("C_e", "C_o", "C_a", "C_a_mod")}


def cooperativities(p: SystemParams, delta_e: float | None = None,
                    delta_o: float | None = None, *, probe: float = 0.0,
                    homogeneous: bool = False) -> Cooperativities:
    """Ensemble cooperativities with cavity detunings and an optional probe offset.

    C_e = 4 g_e^2 (n_e1 - n_e2) / ((kappa_e + 2i delta_e)(Gamma_e - 2i probe)),
    C_o likewise with (n_g - n_e2), C_a = 4 Omega^2 / ((Gamma_o - 2i probe)(Gamma_e - 2i probe)).
    The cavity detunings default to ``p.delta_ec``/``p.delta_oc``. With
    ``homogeneous=True`` the single-atom dephasing rates replace the
    inhomogeneous linewidths.
    """
    de = p.delta_ec if delta_e is None else delta_e
    do = p.delta_oc if delta_o is None else delta_o
    lw_o, lw_s = (p.gamma_o, p.gamma_s) if homogeneous else (p.Gamma_o, p.Gamma_e)
    if lw_o <= 0 or lw_s <= 0:
        raise ParameterError("linewidth", "atomic linewidths must be > 0")
    if p.kappa_e <= 0 or p.kappa_o <= 0:
        raise ParameterError("kappa", "cavity decay rates must be > 0")
    de -= probe
    do -= probe
    at_o = complex(lw_o, -2.0 * probe)
    at_s = complex(lw_s, -2.0 * probe)
    C_e = 4.0 * p.g_e_tot**2 * p.pop_spin / (complex(p.kappa_e, 2.0 * de) * at_s)
    C_o = 4.0 * p.g_o_tot**2 * p.pop_optical / (complex(p.kappa_o, 2.0 * do) * at_o)
    C_a = 4.0 * p.Omega_pump**2 / (at_o * at_s)
    C_a_mod = C_a / ((1.0 + C_e) * (1.0 + C_o))
    return Cooperativities(C_e, C_o, C_a, C_a_mod, de, do)


def extraction_factors(p: SystemParams) -> tuple[float, float]:
    """Default (r_e, r_o): the external fraction of each cavity's decay."""
    return p.kappa_e_ext / p.kappa_e, p.kappa_o_ext / p.kappa_o


def efficiency_approx(c: Cooperativities, r_e: float, r_o: float) -> float:
    """Three-stage product estimate of the end-to-end conversion efficiency.

    The complex product is formed first and its modulus returned.
    """
    for name, r in (("r_e", r_e), ("r_o", r_o)):
        if not 0.0 <= r <= 1.0:
            raise ParameterError(name, "extraction factor must lie in [0, 1]")
    value = (r_e * r_o * (c.C_e / (1.0 + c.C_e))
             * (4.0 * c.C_a_mod / (1.0 + c.C_a_mod) ** 2)
             * (c.C_o / (1.0 + c.C_o)))
    return abs(value)


def efficiency_single_atom_exact(c: Cooperativities, p: SystemParams) -> float:
    """Exact single-atom microwave-to-optical efficiency.

    ``c`` must come from :func:`cooperativities` on the same ``p`` (its
    cooperativities already carry the population differences).
    """
    if p.pop_optical == 0.0:
        raise ParameterError("populations", "degenerate population factor: n_g == n_e2")
    k_o = p.kappa_o_ext / abs(complex(p.kappa_o, 2.0 * c.delta_o))
    k_e = p.kappa_e_ext / abs(complex(p.kappa_e, 2.0 * c.delta_e))
    pop = p.pop_spin / p.pop_optical
    denom = (1.0 + c.C_e) * (1.0 + c.C_o) + c.C_a
    return k_o * k_e * pop * abs(4.0 * c.C_e * c.C_o * c.C_a / denom**2)


def efficiency_single_atom_factored(c: Cooperativities, p: SystemParams) -> float:
    """Same quantity written as three stage efficiencies (C_a' form)."""
    if p.pop_optical == 0.0:
        raise ParameterError("populations", "degenerate population factor: n_g == n_e2")
    k_o = p.kappa_o_ext / abs(complex(p.kappa_o, 2.0 * c.delta_o))
    k_e = p.kappa_e_ext / abs(complex(p.kappa_e, 2.0 * c.delta_e))
    stages = (c.C_e / (1.0 + c.C_e)) * (4.0 * c.C_a_mod / (1.0 + c.C_a_mod) ** 2) \
        * (c.C_o / (1.0 + c.C_o))
    return k_o * k_e * (p.pop_spin / p.pop_optical) * abs(stages)


def chi2_eff(m: MaterialParams, p: SystemParams) -> float:
    """Effective resonant chi(2) in pm/V.

    Uses Planck's h with the linewidths expressed in Hz (Gamma / 2pi), which
    is the combination that keeps the low-cooperativity efficiency relation
    consistent with 4 C_e C_o C_a.
    """
    gamma_e_hz = p.Gamma_e / TWO_PI
    gamma_o_hz = p.Gamma_o / TWO_PI
    chi = (4.0 / (sc.epsilon_0 * sc.c * sc.h**2)
           * m.rho * m.d_p * m.d_o * m.mu_spin / (gamma_e_hz * gamma_o_hz))
    return chi * 1e12


def efficiency_low_coop_from_chi2(chi2: float, pump_power: float,
                                  cavity_rates: tuple[float, float, float],
                                  mode_volume: float, omega_e: float,
                                  omega_o: float) -> float:
    """Low-cooperativity efficiency from a chi(2) value (pm/V).

    ``cavity_rates`` is (kappa_e, kappa_o, kappa_p) in rad/s. Only meaningful
    when every cooperativity is well below one.
    """
    kappa_e, kappa_o, kappa_p = cavity_rates
    if chi2 < 0 or pump_power < 0:
        raise ParameterError("chi2", "chi2 and pump power must be non-negative")
    if min(kappa_e, kappa_o, kappa_p, mode_volume, omega_e, omega_o) <= 0:
        raise ParameterError("cavity_rates", "rates, volume and frequencies must be > 0")
    chi = chi2 * 1e-12
    return (4.0 * omega_e * omega_o / (sc.epsilon_0 * mode_volume)
            * chi**2 * pump_power / (kappa_e * kappa_o * kappa_p))


def couplings_from_mode(m: MaterialParams, mode_volume: float, omega_e: float,
                        omega_o: float, pump_power: float,
                        kappa_p: float) -> tuple[float, float, float]:
    """(g_e_tot, g_o_tot, Omega) for ions filling a mode of volume ``mode_volume``.

    Zero-point fields in vacuum permittivity; the pump cavity is taken as
    critically coupled from two sides, so the intracavity photon number is
    2 P / (hbar omega_p kappa_p) and Omega = (d_p / hbar) sqrt(P / (eps0 V kappa_p)).
    """
    g_e = m.mu_spin * math.sqrt(m.rho * sc.mu_0 * omega_e / (2.0 * sc.hbar))
    g_o = m.d_o * math.sqrt(m.rho * omega_o / (2.0 * sc.hbar * sc.epsilon_0))
    omega = m.d_p / sc.hbar * math.sqrt(pump_power / (sc.epsilon_0 * mode_volume * kappa_p))
    return g_e, g_o, omega


def co_from_absorption(m: MaterialParams) -> float:
    """Optical cooperativity from the peak absorption of a Lorentzian line."""
    return m.alpha_peak * m.crystal_length * m.finesse * m.optical_confinement / math.pi


def rho_ee_steady(Delta, Omega: float, gamma1: float, gamma2: float):
    """Steady-state excited population of a driven two-level atom."""
    if gamma1 <= 0 or gamma2 <= 0:
        raise ParameterError("gamma", "gamma1 and gamma2 must be > 0")
    Delta = np.asarray(Delta, dtype=float)
    sat = Omega**2 / (gamma2 * gamma1)
    out = 0.5 * sat / (1.0 + (Delta / gamma2) ** 2 + sat)
    return float(out) if out.ndim == 0 else out


def obe_rates(T1: float, T2: float) -> tuple[float, float]:
    """(gamma1, gamma2) for the Bloch steady state from lifetimes.

    gamma2 follows the dephasing-rate convention of the mode equations,
    where a coherence decays as exp(-gamma t / 2): gamma2 = 2 / T2.
    """
    return 1.0 / T1, 2.0 / T2


class QuadratureError(RuntimeError):
    pass


def rho_ee_ensemble(Omega: float, gamma1: float, gamma2: float, sigma_inhom: float,
                    rtol: float = 1e-6) -> float:
    """Excited population averaged over a Gaussian detuning distribution.

    Integrates over +-5 sigma and normalizes by the Gaussian mass in that window.
    """
    if sigma_inhom <= 0:
        raise ParameterError("sigma_inhom", "must be > 0")
    if Omega == 0:
        return 0.0

    def weight(d):
        return math.exp(-0.5 * (d / sigma_inhom) ** 2)

    def integrand(d):
        return rho_ee_steady(d, Omega, gamma1, gamma2) * weight(d)

    lim = 5.0 * sigma_inhom
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            num, _ = integrate.quad(integrand, -lim, lim, points=[0.0],
                                    epsrel=rtol, epsabs=0.0, limit=400)
            den, _ = integrate.quad(weight, -lim, lim, epsrel=rtol, epsabs=0.0, limit=400)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"quadrature did not converge: {exc}") from None
    return num / den


def ge_tot(m: MaterialParams, p: SystemParams, excited_fraction: float) -> float:
    """Ensemble spin-resonator coupling (rad/s) for a given excited fraction.

    g^2 = (omega_e mu0 / 2 hbar) mu^2 rho eta * excited_fraction * manifold_fraction.
    """
    if not 0.0 <= excited_fraction <= 1.0:
        raise ParameterError("excited_fraction", "must lie in [0, 1]")
    g2 = (p.omega_e * sc.mu_0 / (2.0 * sc.hbar) * m.mu_spin**2 * m.rho * m.confinement_eta
          * excited_fraction * p.manifold_fraction)
    return math.sqrt(g2)
