"""Inhomogeneous ensemble sampling and Monte-Carlo averaged conversion efficiency."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from .params import ParameterError, SystemParams
from .scattering import AtomGroup, SingularSystemError, solve

TRUNCATION = 4.0
MAX_FAILURE_FRACTION = 0.01


class MonteCarloError(RuntimeError):
    pass


@dataclass(frozen=True)
class EnsembleSpec:
    """Sampling recipe.

    ``beam_waist`` is the 1/e^2 intensity radius of the optical beams;
    ``math.inf`` gives a flat optical profile. ``mw_profile`` is None for a
    flat microwave coupling or a pair (radii in m, relative coupling) that is
    interpolated linearly and held constant beyond the last radius.
    """

    sigma_opt: float
    sigma_spin: float
    beam_waist: float
    mw_profile: tuple[tuple[float, ...], tuple[float, ...]] | None = None
    n_groups: int = 100
    n_trials: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.n_groups < 1 or self.n_trials < 1:
            raise ParameterError("n_groups", "n_groups and n_trials must be >= 1")
        if not (self.sigma_opt > 0 and self.sigma_spin > 0):
            raise ParameterError("sigma", "inhomogeneous widths must be > 0")
        if not self.beam_waist > 0:
            raise ParameterError("beam_waist", "must be > 0")
        if not 0 <= self.seed < 2**64:
            raise ParameterError("seed", "seed must be a 64-bit unsigned integer")
        if self.mw_profile is not None:
            r, g = (np.asarray(x, dtype=float) for x in self.mw_profile)
            if r.ndim != 1 or r.shape != g.shape or r.size == 0:
                raise ParameterError("mw_profile", "radii and values must be equal-length 1-D")
            if np.any(np.diff(r) <= 0) or np.any(g < 0):
                raise ParameterError("mw_profile", "radii must increase and values be >= 0")

    def replace(self, **changes) -> "EnsembleSpec":
        from dataclasses import replace
        return replace(self, **changes)


@dataclass(frozen=True)
class EnsembleSample:
    groups: list[AtomGroup]
    seed_used: int
    trial: int = 0


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """PCG64 stream for one trial: child ``trial`` of SeedSequence(seed)."""
    ss = np.random.SeedSequence(seed, spawn_key=(trial,))
    return np.random.Generator(np.random.PCG64(ss))


def _strata(rng: np.random.Generator, k: int) -> np.ndarray:
    """One uniform draw in each of k equal-probability strata, in random order."""
    return (rng.permutation(k) + rng.random(k)) / k


def _truncated_normal(u: np.ndarray, sigma: float) -> np.ndarray:
    lo = special.ndtr(-TRUNCATION)
    hi = special.ndtr(TRUNCATION)
    return sigma * special.ndtri(lo + u * (hi - lo))


def _mw_profile(spec: EnsembleSpec, r: np.ndarray) -> np.ndarray:
    if spec.mw_profile is None:
        return np.ones_like(r)
    rr, gg = (np.asarray(x, dtype=float) for x in spec.mw_profile)
    return np.interp(r, rr, gg, left=gg[0], right=gg[-1])


def sample_ensemble(spec: EnsembleSpec, p: SystemParams, trial: int = 0) -> EnsembleSample:
    """Draw one stratified ensemble of ``spec.n_groups`` equal-weight groups.

    Detunings come from equal-probability strata of a normal truncated at
    +-4 sigma, radii from equal-energy annuli of the beam intensity profile.
    Couplings are rescaled so sum(g_o^2) and sum(g_e^2) equal the ensemble
    totals of ``p`` and the mean of Omega^2 equals Omega_pump^2.
    """
    k = spec.n_groups
    rng = trial_rng(spec.seed, trial)
    d_o = _truncated_normal(_strata(rng, k), spec.sigma_opt)
    d_e = _truncated_normal(_strata(rng, k), spec.sigma_spin)
    u_r = _strata(rng, k)
    if math.isinf(spec.beam_waist):
        r = np.zeros(k)
        amp = np.ones(k)
    else:
        w = spec.beam_waist
        r = np.sqrt(-0.5 * w * w * np.log1p(-u_r))
        amp = np.exp(-(r / w) ** 2)
    ge_rel = _mw_profile(spec, r)

    s2 = float(np.sum(amp**2))
    g_o = amp * (p.g_o_tot / math.sqrt(s2))
    Om = amp * (p.Omega_pump * math.sqrt(k / s2))
    se = float(np.sum(ge_rel**2))
    if se == 0.0:
        raise ParameterError("mw_profile", "microwave profile vanishes over the beam")
    g_e = ge_rel * (p.g_e_tot / math.sqrt(se))
    groups = [AtomGroup(float(d_o[i]), float(d_e[i]), float(g_o[i]), float(g_e[i]),
                        float(Om[i]), p.n_g, p.n_e1, p.n_e2, 1) for i in range(k)]
    return EnsembleSample(groups, spec.seed, trial)


def _trial(args) -> tuple[float, float] | None:
    spec, p, probe, trial = args
    sample = sample_ensemble(spec, p, trial)
    try:
        r = solve(sample.groups, p, probe)
    except SingularSystemError:
        return None
    return r.eta_m2o, r.refl_mw


@dataclass(frozen=True)
class MCResult:
    mean: float
    stderr: float | None
    n_trials: int
    n_failed: int
    seed: int
    refl_mean: float = float("nan")


def mc_run(spec: EnsembleSpec, p: SystemParams, probe: float = 0.0,
           workers: int = 1) -> MCResult:
    """Monte-Carlo average of eta_m2o over ``spec.n_trials`` independent samples."""
    tasks = [(spec, p, probe, t) for t in range(spec.n_trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            values = list(ex.map(_trial, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        values = [_trial(t) for t in tasks]
    pairs = [v for v in values if v is not None]
    ok = [v[0] for v in pairs]
    n_failed = len(values) - len(ok)
    if n_failed > MAX_FAILURE_FRACTION * len(values):
        raise MonteCarloError(f"{n_failed} of {len(values)} trials failed to solve")
    if not ok:
        raise MonteCarloError("no successful trials")
    n = len(ok)
    mean = math.fsum(ok) / n
    stderr = None
    if n > 1:
        var = math.fsum((v - mean) ** 2 for v in ok) / (n - 1)
        stderr = math.sqrt(var / n)
    refl = math.fsum(v[1] for v in pairs) / n
    return MCResult(mean, stderr, n, n_failed, spec.seed, refl)


def mc_efficiency(spec: EnsembleSpec, p: SystemParams, probe: float = 0.0,
                  workers: int = 1) -> tuple[float, float | None]:
    """(mean, stderr) of eta_m2o; stderr is None for a single trial."""
    r = mc_run(spec, p, probe, workers)
    return r.mean, r.stderr


def convergence_scan(spec: EnsembleSpec, p: SystemParams, probe: float,
                     group_counts: Sequence[int], workers: int = 1) -> list[dict]:
    counts = list(group_counts)
    if not counts or any(b <= a for a, b in zip(counts, counts[1:])):
        raise ParameterError("group_counts", "must be nonempty and strictly ascending")
    rows = []
    for n in counts:
        r = mc_run(spec.replace(n_groups=int(n)), p, probe, workers)
        rows.append({"n_groups": int(n), "mean_eta": r.mean,
                     "stderr": r.stderr if r.stderr is not None else float("nan"),
                     "n_trials": r.n_trials, "seed": r.seed})
    return rows


CSV_COLUMNS = ("n_groups", "mean_eta", "stderr", "n_trials", "seed")


def convergence_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in rows:
        w.writerow([row["n_groups"], f"{row['mean_eta']:.11e}", f"{row['stderr']:.11e}",
                    row["n_trials"], row["seed"]])
    return buf.getvalue()


def paper_spec(p: SystemParams, n_groups: int = 100, n_trials: int = 1000,
               seed: int = 0, beam_waist: float = 20e-6) -> EnsembleSpec:
    """Spec with Gaussian widths matching the inhomogeneous FWHMs of ``p``."""
    from .params import FWHM_PER_SIGMA
    return EnsembleSpec(p.Gamma_o / FWHM_PER_SIGMA, p.Gamma_e / FWHM_PER_SIGMA,
                        beam_waist, None, n_groups, n_trials, seed)
