"""Noise channels: thermal occupations, HEMT calibration, output noise spectrum,
spin-phonon relaxation and photoluminescence, and the added-noise budget."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import constants as sc

from .harness.lm import FitError, levenberg_marquardt
from .params import ParameterError, SystemParams


@dataclass(frozen=True)
class NoiseBudget:
    N_th: float
    N_PL: float
    N_add_RTI: float
    eta_used: float


@dataclass(frozen=True)
class PhononBathParams:
    rho: float
    nu: float
    omega: float
    Gamma: float
    T_spin: float
    tau1: float
    tau_ph: float
    L_crystal: float

    def __post_init__(self):
        for name in ("rho", "nu", "omega", "Gamma", "T_spin", "tau1", "tau_ph", "L_crystal"):
            if not getattr(self, name) > 0:
                raise ParameterError(name, "phonon bath parameters must be > 0")

    @classmethod
    def from_crystal(cls, rho, nu, omega, Gamma, T_spin, tau1, L_crystal):
        """Phonon escape time taken as the crossing time L / (2 nu)."""
        return cls(rho, nu, omega, Gamma, T_spin, tau1, L_crystal / (2.0 * nu), L_crystal)


def bose_occupation(omega, T):
    """Bose-Einstein occupation 1 / (exp(hbar omega / kB T) - 1); zero at T = 0."""
    omega = np.asarray(omega, dtype=float)
    T = np.asarray(T, dtype=float)
    if np.any(T < 0):
        raise ParameterError("T", "temperature must be >= 0")
    with np.errstate(divide="ignore", over="ignore"):
        x = sc.hbar * omega / (sc.k * T)
        n = np.where(T > 0, 1.0 / np.expm1(x), 0.0)
    return float(n) if n.ndim == 0 else n


def hemt_output_power(T_N, G: float, B: float, N_HEMT: float, omega: float):
    """Output power of the amplification chain for a noise source at T_N."""
    if not (G > 0 and B > 0):
        raise ParameterError("G", "gain and bandwidth must be > 0")
    return sc.hbar * omega * G * B * (bose_occupation(omega, T_N) + N_HEMT + 0.5)


def fit_hemt(samples, omega: float, B: float):
    """Least-squares (G, N_HEMT) from (T, P) samples.

    Residuals are relative, (P_model - P) / P, appropriate for multiplicative
    noise. The start point comes from the linear form P = a (n + 1/2) + c.
    Returns (G, N_HEMT, covariance).
    """
    data = np.asarray(samples, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2 or data.shape[0] < 3:
        raise FitError("need at least three (T, P) samples")
    T, P = data[:, 0], data[:, 1]
    if np.any(P <= 0):
        raise FitError("output powers must be positive")
    nbar = bose_occupation(omega, T) + 0.5
    if np.unique(T).size < 2 or np.ptp(nbar) == 0:
        raise FitError("degenerate calibration data: temperatures do not vary")
    scale = sc.hbar * omega * B
    X = np.column_stack([nbar, np.ones_like(nbar)]) / P[:, None]
    coef, *_ = np.linalg.lstsq(X, np.ones_like(P), rcond=None)
    a, c = coef
    if not a > 0:
        raise FitError("calibration data do not increase with source temperature")
    G0, N0 = a / scale, c / a

    def resid(x):
        G, N = x
        return (scale * G * (nbar + N)) / P - 1.0

    res = levenberg_marquardt(resid, [G0, N0], bounds=([0.0, -0.5], [np.inf, np.inf]),
                              x_scale=[abs(G0), max(abs(N0), 1.0)])
    G, N = res.x
    return float(G), float(N), res.cov


def read_thermometry_csv(path: str | Path):
    """Rows of a CSV with columns T_K, P_W, freq_Hz, bandwidth_Hz.

    Returns (samples, omega, B); every row must share one frequency and bandwidth.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"T_K", "P_W", "freq_Hz", "bandwidth_Hz"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise ParameterError("columns", f"thermometry CSV needs columns {sorted(need)}")
        try:
            rows = [(float(r["T_K"]), float(r["P_W"]), float(r["freq_Hz"]),
                     float(r["bandwidth_Hz"])) for r in reader]
        except (TypeError, ValueError) as exc:
            raise ParameterError("rows", f"non-numeric thermometry entry: {exc}") from None
    if not rows:
        raise ParameterError("rows", "thermometry CSV has no data")
    freqs = {r[2] for r in rows}
    bws = {r[3] for r in rows}
    if len(freqs) != 1 or len(bws) != 1:
        raise ParameterError("freq_Hz", "mixed frequencies or bandwidths in one calibration")
    return [(r[0], r[1]) for r in rows], 2.0 * math.pi * freqs.pop(), bws.pop()


def spin_susceptibility(p: SystemParams, Delta_at):
    """C = g^2 N / (Gamma/2 - i Delta_at) with N = n_e1 - n_e2 the absorbing population."""
    C = p.g_e_tot**2 * p.pop_spin / (p.Gamma_e / 2.0 - 1j * np.asarray(Delta_at, dtype=float))
    if np.any(C.real < 0):
        raise ArithmeticError("spin susceptibility must be absorptive (Re C >= 0)")
    return C


def output_psd(p: SystemParams, Delta, Delta_at, N_wg: float, N_res: float):
    """Output noise occupation of the microwave port of a spin-loaded resonator.

    ``Delta`` is the offset from the resonator, ``Delta_at`` from the spin line.
    """
    C = spin_susceptibility(p, Delta_at)
    Delta = np.asarray(Delta, dtype=float)
    kc, ki = p.kappa_e_ext, p.kappa_e_int
    kappa = kc + ki
    CR, Ci = C.real, C.imag
    den = (kappa / 2 + CR) ** 2 + (Delta - Ci) ** 2
    s = (((kc - ki - 2 * CR) ** 2 / 4 + (Delta - Ci) ** 2) / den * N_wg
         + ki * kc / den * N_res)
    return float(s) if np.ndim(s) == 0 else s


def output_psd_resonant(C_e: float, kappa_c: float, kappa_i: float, N_wg: float, N_res: float):
    """Output noise occupation with resonator, spins and probe all coincident."""
    kappa = kappa_c + kappa_i
    return ((1 - 2 * kappa_i / kappa - C_e) ** 2 / (1 + C_e) ** 2 * N_wg
            + 4 * kappa_i * kappa_c / kappa**2 / (1 + C_e) ** 2 * N_res)


def bottleneck_coefficient(b: PhononBathParams, *, half_argument: bool = False) -> float:
    """Phonon bottleneck coefficient rho 2 pi nu^3 / (2 omega^2 Gamma) tanh^2(x).

    x = hbar omega / kB T by default; ``half_argument=True`` uses the textbook
    hbar omega / (2 kB T) instead.
    """
    x = sc.hbar * b.omega / (sc.k * b.T_spin)
    if half_argument:
        x /= 2.0
    return b.rho * 2.0 * math.pi * b.nu**3 / (2.0 * b.omega**2 * b.Gamma) * math.tanh(x) ** 2


def direct_process_rate(b: PhononBathParams, *, half_argument: bool = False,
                        bottleneck: float | None = None) -> float:
    """Direct-process relaxation rate 1 / (tau1 + (1 + b) tau_ph) in Hz."""
    bb = bottleneck_coefficient(b, half_argument=half_argument) if bottleneck is None else bottleneck
    return 1.0 / (b.tau1 + (1.0 + bb) * b.tau_ph)


def pl_count_rate(R: float, t_init: float, rho: float, V: float, rho_e: float,
                  T1: float, detection_eff: float) -> float:
    """Detected photoluminescence rate t_init R rho V rho_e / T1 * detection_eff."""
    if min(t_init, rho, V, T1) <= 0 or R < 0 or rho_e < 0 or detection_eff < 0:
        raise ParameterError("pl", "PL inputs must be positive")
    return t_init * R * rho * V * rho_e / T1 * detection_eff


def mode_collection_fraction(wavelength: float, waist: float, index: float,
                             passes: int = 2) -> float:
    """Fraction of isotropic emission captured by a Gaussian mode.

    Uses the far-field half-angle lambda / (pi n w) in the medium and the
    small-angle solid-angle fraction theta^2 / 4 per direction.
    """
    theta = wavelength / (math.pi * index * waist)
    return passes * theta**2 / 4.0


def noise_budget(eta: float, N_th_detected: float, N_pl_detected: float) -> NoiseBudget:
    if not eta > 0:
        raise ZeroDivisionError("efficiency must be > 0 to refer noise to the input")
    if N_th_detected < 0 or N_pl_detected < 0:
        raise ParameterError("noise", "detected noise must be >= 0")
    return NoiseBudget(N_th_detected, N_pl_detected,
                       (N_th_detected + N_pl_detected) / eta, eta)
