"""Bounded Levenberg-Marquardt least squares with finite-difference Jacobians."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

_EPS = np.finfo(float).eps


class FitError(RuntimeError):
    pass


@dataclass
class LMResult:
    x: np.ndarray
    cov: np.ndarray
    residuals: np.ndarray
    jac: np.ndarray
    cost: float
    n_iter: int
    n_eval: int
    at_bound: np.ndarray
    message: str

    @property
    def residual_norm(self) -> float:
        return float(np.linalg.norm(self.residuals))

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))


def _jacobian(fun, x, r0, lo, hi, typ):
    n = x.size
    J = np.empty((r0.size, n))
    h_base = np.sqrt(_EPS)
    for j in range(n):
        h = h_base * max(abs(x[j]), typ[j])
        xj = x.copy()
        if x[j] + h > hi[j]:
            h = -h
        xj[j] = x[j] + h
        h = xj[j] - x[j]  # exact representable step
        J[:, j] = (fun(xj) - r0) / h
    return J


def levenberg_marquardt(fun: Callable[[np.ndarray], np.ndarray], x0, *,
                        bounds=None, x_scale=None, max_iter: int = 500,
                        xtol: float = 1e-13, ftol: float = 1e-15,
                        gtol: float = 1e-14) -> LMResult:
    """Minimize 0.5 * ||fun(x)||^2 subject to box bounds.

    Steps come from the augmented least-squares system [J; sqrt(mu) D] s = -[r; 0]
    with Marquardt's column scaling D and Nielsen's damping update. Variables
    sitting on a bound with the gradient pointing outward are held fixed for
    the step, and each trial point is projected onto the box. ``x_scale``
    sets the typical magnitude used for finite-difference steps on
    parameters that start at zero.
    """
    x = np.array(x0, dtype=float)
    n = x.size
    if bounds is None:
        lo = np.full(n, -np.inf)
        hi = np.full(n, np.inf)
    else:
        lo = np.broadcast_to(np.asarray(bounds[0], dtype=float), (n,)).copy()
        hi = np.broadcast_to(np.asarray(bounds[1], dtype=float), (n,)).copy()
    if np.any(lo > hi):
        raise FitError("lower bound exceeds upper bound")
    typ = np.abs(x) if x_scale is None else np.abs(np.broadcast_to(x_scale, (n,))).astype(float)
    typ = np.where(typ > 0, typ, 1.0)
    x = np.clip(x, lo, hi)

    r = np.asarray(fun(x), dtype=float)
    if r.ndim != 1 or not np.all(np.isfinite(r)):
        raise FitError("residuals at the initial point are not finite")
    m = r.size
    n_eval = 1
    cost = 0.5 * float(r @ r)
    J = _jacobian(fun, x, r, lo, hi, typ)
    n_eval += n
    D = np.linalg.norm(J, axis=0)
    D = np.where(D > 0, D, 1.0)
    mu = 1e-3 * float(np.max(D**2))
    nu = 2.0
    message = "maximum iterations reached"
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g = J.T @ r
        # projected gradient: ignore components pushing into an active bound
        free = ~(((x <= lo) & (g > 0)) | ((x >= hi) & (g < 0)))
        if cost == 0.0 or np.max(np.abs(g[free] * typ[free]), initial=0.0) <= gtol * max(cost, _EPS):
            message, converged = "gradient tolerance", True
            break
        # active-set step: variables held at a bound stay fixed
        Jf = J[:, free]
        aug = np.vstack([Jf, np.diag(np.sqrt(mu) * D[free])])
        rhs = -np.concatenate([r, np.zeros(Jf.shape[1])])
        step = np.zeros(n)
        step[free] = np.linalg.lstsq(aug, rhs, rcond=None)[0]
        x_new = np.clip(x + step, lo, hi)
        s = x_new - x
        if np.all(s == 0):
            message, converged = "step vanished at bounds", True
            break
        r_new = np.asarray(fun(x_new), dtype=float)
        n_eval += 1
        cost_new = 0.5 * float(r_new @ r_new) if np.all(np.isfinite(r_new)) else np.inf
        lin = r + J @ s
        pred = cost - 0.5 * float(lin @ lin)
        actual = cost - cost_new
        rho = actual / pred if pred > 0 else -1.0
        if rho > 0:
            small_step = np.linalg.norm(s / typ) <= xtol * (np.linalg.norm(x / typ) + xtol)
            small_gain = actual <= ftol * cost
            x, r, cost = x_new, r_new, cost_new
            mu *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
            nu = 2.0
            J = _jacobian(fun, x, r, lo, hi, typ)
            n_eval += n
            D = np.maximum(D, np.linalg.norm(J, axis=0))
            if small_step or small_gain:
                message, converged = "converged", True
                break
        else:
            if np.linalg.norm(s / typ) <= xtol * (np.linalg.norm(x / typ) + xtol):
                message, converged = "no further decrease possible", True
                break
            mu *= nu
            nu *= 2.0
            if not np.isfinite(mu) or mu > 1e300:
                message, converged = "damping overflow at local minimum", True
                break
    if not converged:
        raise FitError(f"Levenberg-Marquardt did not converge in {max_iter} iterations")

    dof = m - n
    s2 = 2.0 * cost / dof if dof > 0 else np.nan
    cov = s2 * np.linalg.pinv(J.T @ J)
    span = np.where(np.isfinite(hi - lo), hi - lo, np.maximum(np.abs(x), 1.0))
    tol = 1e-10 * span
    at_bound = (np.abs(x - lo) <= tol) | (np.abs(hi - x) <= tol)
    return LMResult(x, cov, r, J, cost, it, n_eval, at_bound, message)
