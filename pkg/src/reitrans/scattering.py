"""Exact input-output solver for k atom groups coupled to an optical and a microwave cavity.

Mode vector ordering is (a, sigma_o[0..k-1], sigma_s[0..k-1], b). Ports are
the columns of B: optical external/internal, one zero column per coherence,
then microwave external/internal. All element access goes through
:class:`IndexMap`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg
from scipy.linalg import lapack

from .params import ParameterError, SystemParams

COND_WARN = 1e12
REFINE_STEPS = 2


class SingularSystemError(np.linalg.LinAlgError):
    def __init__(self, probe_detuning: float, detail: str = ""):
        self.probe_detuning = probe_detuning
        msg = f"singular input-output system at probe detuning {probe_detuning!r} rad/s"
        super().__init__(msg + (f": {detail}" if detail else ""))


class IllConditionedWarning(UserWarning):
    pass


@dataclass(frozen=True)
class AtomGroup:
    """A group of ``weight`` identical atoms; couplings are per atom."""

    delta_o: float
    delta_e: float
    g_o: float
    g_e: float
    Omega: float
    n_g: float = 0.5
    n_e1: float = 0.5
    n_e2: float = 0.0
    weight: float = 1

    def __post_init__(self):
        if not self.weight >= 1:
            raise ParameterError("weight", f"group weight must be >= 1, got {self.weight}")
        pops = (self.n_g, self.n_e1, self.n_e2)
        if any(not 0.0 <= x <= 1.0 for x in pops) or sum(pops) > 1.0 + 1e-12:
            raise ParameterError("populations", f"invalid group populations {pops}")
        if min(self.g_o, self.g_e, self.Omega) < 0:
            raise ParameterError("coupling", "group couplings must be >= 0")


def single_group(p: SystemParams, delta_o: float = 0.0, delta_e: float = 0.0) -> AtomGroup:
    """One group carrying the full ensemble couplings and populations of ``p``."""
    return AtomGroup(delta_o, delta_e, p.g_o_tot, p.g_e_tot, p.Omega_pump,
                     p.n_g, p.n_e1, p.n_e2, 1)


def identical_groups(p: SystemParams, k: int) -> list[AtomGroup]:
    """k identical groups sharing the ensemble coupling (g / sqrt(k) each)."""
    s = 1.0 / math.sqrt(k)
    return [AtomGroup(0.0, 0.0, p.g_o_tot * s, p.g_e_tot * s, p.Omega_pump,
                      p.n_g, p.n_e1, p.n_e2, 1) for _ in range(k)]


@dataclass(frozen=True)
class IndexMap:
    k: int

    @property
    def a(self) -> int:
        return 0

    def sigma_o(self, i: int) -> int:
        return 1 + i

    def sigma_s(self, i: int) -> int:
        return 1 + self.k + i

    @property
    def b(self) -> int:
        return 2 * self.k + 1

    @property
    def n_modes(self) -> int:
        return 2 * self.k + 2

    @property
    def n_ports(self) -> int:
        return 2 * self.k + 4

    # ports (columns of B / rows and columns of S)
    @property
    def a_ext(self) -> int:
        return 0

    @property
    def a_int(self) -> int:
        return 1

    @property
    def b_ext(self) -> int:
        return 2 * self.k + 2

    @property
    def b_int(self) -> int:
        return 2 * self.k + 3

    @property
    def cavity_ports(self) -> tuple[int, int, int, int]:
        return (self.a_ext, self.a_int, self.b_ext, self.b_int)


@dataclass(frozen=True)
class LinearSystem:
    A: np.ndarray
    B: np.ndarray
    k: int
    index: IndexMap
    probe_detuning: float = 0.0


@dataclass(frozen=True)
class ScatteringResult:
    S: np.ndarray
    eta_m2o: float
    eta_o2m: float
    refl_mw: float
    refl_opt: float
    noise_ratio: float
    index: IndexMap
    probe_detuning: float = 0.0
    condition: float = field(default=float("nan"))

    def element(self, out_port: int, in_port: int) -> complex:
        return complex(self.S[out_port, in_port])


def build_system(groups: Sequence[AtomGroup], p: SystemParams, probe_detuning: float = 0.0,
                 *, linewidths: tuple[float, float] | None = None) -> LinearSystem:
    """Assemble the drift matrix A and input matrix B.

    Atomic coherences decay at the homogeneous rates (gamma_o, gamma_s) of
    ``p`` unless ``linewidths`` overrides them. Detunings are transition minus
    probe, so the probe offset enters every diagonal entry as -(-i * probe).
    """
    k = len(groups)
    if k == 0:
        raise ParameterError("groups", "at least one atom group is required")
    lw_o, lw_s = (p.gamma_o, p.gamma_s) if linewidths is None else linewidths
    if lw_o < 0 or lw_s < 0:
        raise ParameterError("linewidths", "negative dephasing rate")
    idx = IndexMap(k)
    d = probe_detuning

    delta_o = np.array([g.delta_o for g in groups], dtype=float)
    delta_e = np.array([g.delta_e for g in groups], dtype=float)
    sw = np.sqrt(np.array([g.weight for g in groups], dtype=float))
    g_o = np.array([g.g_o for g in groups], dtype=float) * sw
    g_e = np.array([g.g_e for g in groups], dtype=float) * sw
    om = np.array([g.Omega for g in groups], dtype=float)
    pop_o = np.array([g.n_g - g.n_e2 for g in groups], dtype=float)
    pop_s = np.array([g.n_e1 - g.n_e2 for g in groups], dtype=float)

    n = idx.n_modes
    A = np.zeros((n, n), dtype=complex)
    so = np.arange(1, 1 + k)
    ss = np.arange(1 + k, 1 + 2 * k)
    a, b = idx.a, idx.b

    A[a, a] = -1j * (p.delta_oc - d) - p.kappa_o / 2
    A[b, b] = -1j * (p.delta_ec - d) - p.kappa_e / 2
    A[so, so] = -1j * (delta_o - d) - lw_o / 2
    A[ss, ss] = -1j * (delta_e - d) - lw_s / 2
    A[a, so] = -1j * g_o
    A[so, a] = -1j * g_o * pop_o
    A[so, ss] = 1j * om
    A[ss, so] = 1j * om
    A[ss, b] = -1j * g_e * pop_s
    A[b, ss] = -1j * g_e

    B = np.zeros((n, idx.n_ports))
    B[a, idx.a_ext] = math.sqrt(p.kappa_o_ext)
    B[a, idx.a_int] = math.sqrt(p.kappa_o_int)
    B[b, idx.b_ext] = math.sqrt(p.kappa_e_ext)
    B[b, idx.b_int] = math.sqrt(p.kappa_e_int)
    return LinearSystem(A, B, k, idx, probe_detuning)


def solve_scattering(sys: LinearSystem) -> ScatteringResult:
    """S = B^T (-A)^{-1} B - I in the rotating frame (omega = 0).

    LU with partial pivoting plus residual refinement; only the four nonzero
    columns of B are solved for.
    """
    idx = sys.index
    M = -sys.A
    ports = np.array(idx.cavity_ports)
    with warnings.catch_warnings():
        warnings.simplefilter("error", linalg.LinAlgWarning)
        try:
            lu, piv = linalg.lu_factor(M, check_finite=True)
        except (linalg.LinAlgWarning, ValueError) as exc:
            raise SingularSystemError(sys.probe_detuning, str(exc)) from None
    anorm = np.linalg.norm(M, 1)
    rcond, info = lapack.zgecon(lu, anorm, norm="1")
    if info != 0 or not np.isfinite(rcond) or rcond == 0.0:
        raise SingularSystemError(sys.probe_detuning, f"rcond={rcond}")
    cond = 1.0 / rcond
    if cond > COND_WARN:
        warnings.warn(f"condition number {cond:.3e} at probe detuning {sys.probe_detuning!r}",
                      IllConditionedWarning, stacklevel=2)
    Bp = sys.B[:, ports].astype(complex)
    X = linalg.lu_solve((lu, piv), Bp)
    # small transfer elements lose relative accuracy next to O(1) reflections;
    # refine against an extended-precision residual
    M_ext = M.astype(np.clongdouble)
    for _ in range(REFINE_STEPS):
        R = (Bp - M_ext @ X).astype(complex)
        X = X + linalg.lu_solve((lu, piv), R)
    S = -np.eye(idx.n_ports, dtype=complex)
    S[np.ix_(ports, ports)] += Bp.T @ X

    eta_m2o = abs(S[idx.a_ext, idx.b_ext]) ** 2
    eta_o2m = abs(S[idx.b_ext, idx.a_ext]) ** 2
    leak = abs(S[idx.a_ext, idx.b_int]) ** 2
    noise_ratio = leak / eta_m2o if eta_m2o > 0 else float("nan")
    return ScatteringResult(S, eta_m2o, eta_o2m, abs(S[idx.b_ext, idx.b_ext]) ** 2,
                            abs(S[idx.a_ext, idx.a_ext]) ** 2, noise_ratio, idx,
                            sys.probe_detuning, cond)


def solve(groups: Sequence[AtomGroup], p: SystemParams, probe_detuning: float = 0.0,
          **kw) -> ScatteringResult:
    return solve_scattering(build_system(groups, p, probe_detuning, **kw))


def single_atom_result(p: SystemParams, probe_detuning: float = 0.0, *,
                       homogeneous: bool = False) -> ScatteringResult:
    """Single-group solve; by default the coherences use the inhomogeneous widths."""
    lw = None if homogeneous else (p.Gamma_o, p.Gamma_e)
    return solve([single_group(p)], p, probe_detuning, linewidths=lw)


def added_noise_rti(r: ScatteringResult, p: SystemParams, N_wg: float,
                    N_res_int: float, rtol: float = 1e-8) -> float:
    """Microwave input noise referred to the input: N_wg + (kappa_int/kappa_ext) N_res."""
    if not r.eta_m2o > 0:
        raise ZeroDivisionError("added noise is undefined when eta_m2o = 0")
    expected = p.kappa_e_int / p.kappa_e_ext
    if not math.isclose(r.noise_ratio, expected, rel_tol=rtol, abs_tol=1e-300):
        raise ArithmeticError(
            f"noise transfer ratio {r.noise_ratio!r} differs from kappa_int/kappa_ext {expected!r}")
    return N_wg + r.noise_ratio * N_res_int


def reflection_closed_form(Delta, kappa_ext: float, kappa_int: float, delta_ec: float,
                           g2: float, linewidth: float, delta_at: float = 0.0):
    """Microwave reflection of a resonator loaded by an absorbing spin ensemble.

    ``Delta`` is the probe detuning from the spin line, ``delta_ec`` the
    resonator offset from it, ``g2`` the population-weighted g_e^2 and
    ``delta_at`` the spin offset from its nominal line.
    """
    Delta = np.asarray(Delta, dtype=float)
    kappa = kappa_ext + kappa_int
    dp = Delta - delta_ec
    C = g2 / (linewidth / 2 - 1j * (Delta - delta_at))
    r = np.asarray((kappa_ext - kappa / 2 + 1j * dp - C) / (kappa / 2 - 1j * dp + C))
    return complex(r) if r.ndim == 0 else r


def mw_reflection_spectrum(groups: Sequence[AtomGroup], p: SystemParams,
                           detuning_grid, **kw) -> list[tuple[float, complex]]:
    """Complex microwave reflection S(b_ext <- b_ext) on a probe-detuning grid."""
    grid = [float(x) for x in detuning_grid]
    if not grid:
        raise ParameterError("detuning_grid", "grid must be nonempty")
    out = []
    for d in grid:
        r = solve(groups, p, d, **kw)
        out.append((d, r.element(r.index.b_ext, r.index.b_ext)))
    return out


def single_atom_reflection(p: SystemParams, probe_detuning: float = 0.0, *,
                           homogeneous: bool = False) -> complex:
    """Closed-form S(b_ext <- b_ext) of the single-group system, optical branch included."""
    lw_o, lw_s = (p.gamma_o, p.gamma_s) if homogeneous else (p.Gamma_o, p.Gamma_e)
    d = probe_detuning
    K_a = complex(p.kappa_o / 2, p.delta_oc - d)
    K_b = complex(p.kappa_e / 2, p.delta_ec - d)
    G_o = complex(lw_o / 2, -d)
    G_s = complex(lw_s / 2, -d)
    optical = G_o + p.g_o_tot**2 * p.pop_optical / K_a
    spin = G_s + p.Omega_pump**2 / optical
    return p.kappa_e_ext / (K_b + p.g_e_tot**2 * p.pop_spin / spin) - 1.0
