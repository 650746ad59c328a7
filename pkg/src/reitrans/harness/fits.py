"""Phenomenological fits: Lorentzians, cascaded efficiency, interference envelope,
hybridized microwave reflection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..params import SystemParams
from ..scattering import reflection_closed_form
from .lm import FitError, LMResult, levenberg_marquardt


@dataclass
class FitResult:
    model: str
    parameters: dict[str, float]
    stderr: dict[str, float]
    residual_norm: float
    n_points: int
    at_bound: list[str] = field(default_factory=list)
    covariance: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.residual_norm >= 0:
            raise ValueError("residual_norm must be >= 0")

    def rows(self) -> list[tuple[str, float, float]]:
        return [(k, v, self.stderr.get(k, float("nan"))) for k, v in self.parameters.items()]


def _xy(points, min_points: int, what: str):
    data = np.asarray(points, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise FitError(f"{what}: points must be (x, y) pairs")
    if data.shape[0] < min_points:
        raise FitError(f"{what}: need at least {min_points} points, got {data.shape[0]}")
    order = np.argsort(data[:, 0], kind="stable")
    return data[order, 0], data[order, 1]


def _result(model, names, res: LMResult, n_points, extra=None) -> FitResult:
    err = res.stderr
    return FitResult(model, {n: float(v) for n, v in zip(names, res.x)},
                     {n: float(e) for n, e in zip(names, err)}, res.residual_norm, n_points,
                     [n for n, b in zip(names, res.at_bound) if b], res.cov, extra or {})


# ---------------------------------------------------------------------------
# Lorentzians

def lorentzian(x, center: float, fwhm: float):
    """Unit-height Lorentzian."""
    return 1.0 / (1.0 + ((np.asarray(x, dtype=float) - center) / (fwhm / 2.0)) ** 2)


def lorentzian_sum(x, params: Sequence[float]):
    """offset + sum of amplitude * lorentzian; params = (offset, A1, c1, w1, A2, c2, w2, ...)."""
    offset = params[0]
    out = np.full(np.shape(x), offset, dtype=float)
    for i in range(1, len(params), 3):
        A, c, w = params[i:i + 3]
        out = out + A * lorentzian(x, c, w)
    return out


def _peak_guess(x, y):
    """(amplitude, center, fwhm) of the dominant feature of y above/below its baseline."""
    base = np.median(np.concatenate([y[: max(1, len(y) // 10)], y[-max(1, len(y) // 10):]]))
    dev = y - base
    i = int(np.argmax(np.abs(dev)))
    A = dev[i]
    if A == 0:
        return 0.0, float(x[i]), float(np.ptp(x) / 4 or 1.0), float(base)
    half = np.abs(dev) >= abs(A) / 2
    lo = i
    while lo > 0 and half[lo - 1]:
        lo -= 1
    hi = i
    while hi < len(x) - 1 and half[hi + 1]:
        hi += 1
    w = float(x[hi] - x[lo])
    if w <= 0:
        w = float(np.min(np.diff(x))) if len(x) > 1 else 1.0
    return float(A), float(x[i]), w, float(base)


def fit_lorentzian(points, n_peaks: int = 1) -> FitResult:
    """Sum of ``n_peaks`` Lorentzians plus a constant offset."""
    if n_peaks not in (1, 2):
        raise FitError("n_peaks must be 1 or 2")
    x, y = _xy(points, 3 * n_peaks + 1, "fit_lorentzian")
    A1, c1, w1, base = _peak_guess(x, y)
    p0 = [base, A1, c1, w1]
    if n_peaks == 2:
        r = y - lorentzian_sum(x, p0)
        A2, c2, w2, _ = _peak_guess(x, r + base)
        if c2 == c1:
            c2 = c1 + w1
        p0 += [A2, c2, w2]
    span = float(np.ptp(x)) or 1.0
    wmin = 1e-12 * span
    lo = [-np.inf] + [-np.inf, -np.inf, wmin] * n_peaks
    hi = [np.inf] * (1 + 3 * n_peaks)
    yscale = float(np.max(np.abs(y))) or 1.0
    scale = [yscale] + [yscale, span, span] * n_peaks

    def resid(p):
        return lorentzian_sum(x, p) - y

    res = levenberg_marquardt(resid, p0, bounds=(lo, hi), x_scale=scale)
    names = ["offset"]
    for k in range(1, n_peaks + 1):
        names += [f"amplitude{k}", f"center{k}", f"fwhm{k}"]
    return _result(f"lorentzian{n_peaks}", names, res, len(x))


# ---------------------------------------------------------------------------
# cascaded transduction

def cascade_model(f, A: float, c1: float, w1: float, c2: float, w2: float):
    return A * lorentzian(f, c1, w1) * lorentzian(f, c2, w2)


def cascade_eta(f, eta_o2m: Callable | np.ndarray, eta_m2o: Callable | np.ndarray,
                link_loss: float):
    """Forward model of two chips in series: eta_O2M(f) * eta_M2O(f) * link_loss."""
    if not 0.0 <= link_loss <= 1.0:
        raise ValueError("link_loss must lie in [0, 1]")
    f = np.asarray(f, dtype=float)
    e1 = eta_o2m(f) if callable(eta_o2m) else np.asarray(eta_o2m, dtype=float)
    e2 = eta_m2o(f) if callable(eta_m2o) else np.asarray(eta_m2o, dtype=float)
    return e1 * e2 * link_loss


def fit_cascade(points) -> FitResult:
    """A * L1(f) * L2(f) with unit-height Lorentzians; labels ordered so c1 <= c2."""
    x, y = _xy(points, 7, "fit_cascade")
    _, c0, w0, _ = _peak_guess(x, y)
    A0 = float(y[np.argmax(np.abs(y))])
    span = float(np.ptp(x)) or 1.0
    lo = [-np.inf, -np.inf, 1e-12 * span, -np.inf, 1e-12 * span]
    hi = [np.inf] * 5
    yscale = float(np.max(np.abs(y))) or 1.0
    scale = [yscale, span, span, span, span]

    def resid(p):
        return cascade_model(x, *p) - y

    best = None
    wi = w0 / math.sqrt(math.sqrt(2.0) - 1.0)
    for split in (0.0, 0.25, 0.5, 1.0):
        p0 = [A0, c0 - split * w0, wi, c0 + split * w0, wi * (1.1 if split == 0.0 else 1.0)]
        try:
            res = levenberg_marquardt(resid, p0, bounds=(lo, hi), x_scale=scale)
        except FitError:
            continue
        if best is None or res.cost < best.cost:
            best = res
    if best is None:
        raise FitError("fit_cascade did not converge from any start")
    names = ["amplitude", "center1", "fwhm1", "center2", "fwhm2"]
    out = _result("cascade", names, best, len(x))
    if out.parameters["center1"] > out.parameters["center2"]:
        for a, b in (("center1", "center2"), ("fwhm1", "fwhm2")):
            out.parameters[a], out.parameters[b] = out.parameters[b], out.parameters[a]
            out.stderr[a], out.stderr[b] = out.stderr[b], out.stderr[a]
    return out


# ---------------------------------------------------------------------------
# interference envelope

def interference_trace(delta_f: float, delta_phi: float, tau_corr: float, visibility: float,
                       t_grid, offset: float = 1.0) -> np.ndarray:
    """offset * (1 + V cos(2 pi delta_f t + delta_phi) exp(-t^2 / (2 tau^2)))."""
    if not 0.0 <= visibility <= 1.0:
        raise ValueError("visibility must lie in [0, 1]")
    if not tau_corr > 0:
        raise ValueError("tau_corr must be > 0")
    t = np.asarray(t_grid, dtype=float)
    env = np.exp(-0.5 * (t / tau_corr) ** 2)
    return offset * (1.0 + visibility * np.cos(2.0 * math.pi * delta_f * t + delta_phi) * env)


def _envelope_start(t, y):
    """Grid search over (delta_f, tau) with the linear parameters solved exactly."""
    span = float(np.ptp(t))
    n = len(t)
    dt = span / (n - 1)
    tu = np.linspace(t[0], t[-1], max(n, 64))
    yu = np.interp(tu, t, y)
    spec = np.abs(np.fft.rfft((yu - yu.mean()) * np.hanning(len(yu))))
    freqs = np.fft.rfftfreq(len(yu), tu[1] - tu[0])
    spec[0] = 0.0
    f_peak = freqs[int(np.argmax(spec))]
    df = freqs[1] - freqs[0]
    f_grid = np.linspace(max(f_peak - 2 * df, 0.0), f_peak + 2 * df, 41)
    tau_grid = np.geomspace(max(span / 50, dt), 50 * span, 60)
    best = (np.inf, None)
    ones = np.ones_like(t)
    for f in f_grid:
        cs = np.cos(2 * math.pi * f * t)
        sn = np.sin(2 * math.pi * f * t)
        for tau in tau_grid:
            env = np.exp(-0.5 * (t / tau) ** 2)
            X = np.column_stack([ones, cs * env, sn * env])
            coef, *_ = np.linalg.lstsq(X, y, rcond=None)
            r = X @ coef - y
            cost = float(r @ r)
            if cost < best[0]:
                best = (cost, (f, tau, coef))
    f, tau, (c0, c1, c2) = best[1]
    offset = c0 if c0 != 0 else 1.0
    V = math.hypot(c1, c2) / abs(offset)
    phi = math.atan2(-c2, c1)
    return f, phi, tau, min(V, 1.0), offset


def fit_envelope(points) -> FitResult:
    """Fit (delta_f, delta_phi, tau, V, offset) of :func:`interference_trace`."""
    t, y = _xy(points, 8, "fit_envelope")
    f0, phi0, tau0, V0, off0 = _envelope_start(t, y)
    span = float(np.ptp(t))
    if f0 * span < 1.0:
        raise FitError("insufficient span: data cover less than one oscillation")

    def resid(p):
        f, phi, tau, V, off = p
        env = np.exp(-0.5 * (t / tau) ** 2)
        return off * (1.0 + V * np.cos(2 * math.pi * f * t + phi) * env) - y

    lo = [0.0, -np.inf, 1e-12 * span, 0.0, -np.inf]
    hi = [np.inf, np.inf, np.inf, 1.0, np.inf]
    scale = [max(f0, 1.0 / span), 1.0, tau0, 1.0, abs(off0) or 1.0]
    res = levenberg_marquardt(resid, [f0, phi0, tau0, V0, off0], bounds=(lo, hi), x_scale=scale)
    res.x[1] = (res.x[1] + math.pi) % (2 * math.pi) - math.pi
    tau = res.x[2]
    if span <= 0.5 * tau:
        raise FitError(f"insufficient span: data cover {span:.3g} s, less than half of tau={tau:.3g} s")
    names = ["delta_f", "delta_phi", "tau", "visibility", "offset"]
    return _result("envelope", names, res, len(t))


# ---------------------------------------------------------------------------
# hybridized microwave reflection

def fit_reflection(points, p0: SystemParams) -> FitResult:
    """Fit the spin-loaded resonator reflection for (g_e_tot, kappa_ext, kappa_int, delta_ec, Gamma_e).

    ``points`` are (probe detuning from the spin line in rad/s, reflection)
    with complex reflection coefficients or real magnitudes. ``p0`` supplies
    the starting point. The reported ``g_e_tot`` is the population-weighted
    collective coupling that sets the reflection, sqrt(g^2 (n_e1 - n_e2));
    internally g^2 is fitted so that zero coupling is an interior-safe bound.
    """
    data = list(points)
    if len(data) < 10:
        raise FitError(f"fit_reflection: need at least 10 points, got {len(data)}")
    x = np.array([float(d[0]) for d in data])
    yv = np.array([d[1] for d in data])
    is_complex = np.iscomplexobj(yv) and np.any(np.imag(yv) != 0)
    order = np.argsort(x, kind="stable")
    x, yv = x[order], yv[order]

    g2_0 = p0.g_e_tot**2 * p0.pop_spin
    start = [g2_0, p0.kappa_e_ext, p0.kappa_e_int, p0.delta_ec, p0.Gamma_e]
    k0 = p0.kappa_e
    scale = [max(g2_0, (k0 / 4) ** 2), k0, k0, k0, max(p0.Gamma_e, 1e-3 * k0)]

    if is_complex:
        target = np.concatenate([yv.real, yv.imag])

        def resid(p):
            r = reflection_closed_form(x, p[1], p[2], p[3], p[0], p[4])
            return np.concatenate([r.real, r.imag]) - target
    else:
        mag = np.abs(yv).astype(float)

        def resid(p):
            return np.abs(reflection_closed_form(x, p[1], p[2], p[3], p[0], p[4])) - mag

    lo = [0.0, 0.0, 0.0, -np.inf, 1e-9 * scale[4]]
    hi = [np.inf] * 5
    res = levenberg_marquardt(resid, start, bounds=(lo, hi), x_scale=scale)
    g2, sg2 = res.x[0], res.stderr[0]
    g = math.sqrt(g2)
    # delta method, falling back to sqrt of the g^2 error near zero
    g_err = sg2 / (2.0 * g) if g2 > sg2 else math.sqrt(sg2)
    names = ["g_e_tot", "kappa_ext", "kappa_int", "delta_ec", "Gamma_e"]
    out = _result("reflection", names, res, len(x),
                  {"complex_data": bool(is_complex), "g2": float(g2), "g2_stderr": float(sg2)})
    out.parameters["g_e_tot"] = g
    out.stderr["g_e_tot"] = float(g_err)
    return out
