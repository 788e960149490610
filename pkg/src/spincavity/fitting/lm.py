"""Damped least squares (Levenberg-Marquardt) with bounds and multi-start."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class FitError(RuntimeError):
    pass


class ConvergenceError(FitError):
    pass


class SingularJacobianError(FitError):
    """The Jacobian at the optimum is rank deficient.

    ``params`` names the parameters spanning the unidentifiable directions.
    """

    def __init__(self, message, params=()):
        super().__init__(message)
        self.params = tuple(params)


LAMBDA_UP = 4.0
LAMBDA_DOWN = 2.0


@dataclass
class LMResult:
    x: np.ndarray
    cost: float
    jac: np.ndarray
    residuals: np.ndarray
    n_iter: int
    nfev: int
    converged: bool
    message: str
    cost_history: list = field(default_factory=list)


def forward_jacobian(fun, x, r0, rel_step=1e-7, lower=None, upper=None):
    """One-sided finite-difference Jacobian of ``fun`` at ``x``.

    Steps are ``rel_step * max(|x_j|, 1)``; they flip sign when the forward
    point would leave the upper bound.
    """
    n = x.size
    jac = np.empty((r0.size, n))
    for j in range(n):
        h = rel_step * max(abs(x[j]), 1.0)
        xp = x.copy()
        if upper is not None and x[j] + h > upper[j]:
            h = -h
        xp[j] = x[j] + h
        jac[:, j] = (fun(xp) - r0) / h
    return jac


def levenberg_marquardt(fun, x0, lower=None, upper=None, max_iter=400, ftol=1e-10, xtol=1e-8,
                        lam0=1e-3, rel_step=1e-7):
    """Minimize ``sum(fun(x)**2)``.

    ``x`` should be well scaled (order one). Bounds are enforced by
    projection; the cost never increases between accepted iterations.
    Convergence needs an accepted step with relative cost change below
    ``ftol`` and step norm below ``xtol`` (relative to ``|x|``), or a
    rejected step that is already that small.
    """
    x = np.array(x0, dtype=float)
    n = x.size
    lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    upper = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float)
    x = np.clip(x, lower, upper)
    r = np.asarray(fun(x), dtype=float)
    cost = float(r @ r)
    nfev = 1
    history = [cost]
    lam = lam0
    jac = None
    need_jac = True
    message = "maximum iterations reached"
    converged = False

    it = 0
    for it in range(1, max_iter + 1):
        if cost == 0.0:
            converged, message = True, "zero residual"
            break
        if need_jac:
            jac = forward_jacobian(fun, x, r, rel_step, lower, upper)
            nfev += n
            jtj = jac.T @ jac
            grad = jac.T @ r
            diag = np.diag(jtj).copy()
            diag[diag == 0] = 1.0
            need_jac = False
        # variables pinned at a bound that the descent direction pushes outward
        # stay put; solving for them too only yields projected crawling steps
        free = ~(((x <= lower) & (grad > 0)) | ((x >= upper) & (grad < 0)))
        step = np.zeros(n)
        if free.any():
            a = (jtj + lam * np.diag(diag))[np.ix_(free, free)]
            try:
                step[free] = -np.linalg.solve(a, grad[free])
            except np.linalg.LinAlgError:
                step[free] = -np.linalg.lstsq(a, grad[free], rcond=None)[0]
        x_new = np.clip(x + step, lower, upper)
        step = x_new - x
        small_step = np.linalg.norm(step) <= xtol * (np.linalg.norm(x) + xtol)
        r_new = np.asarray(fun(x_new), dtype=float)
        nfev += 1
        cost_new = float(r_new @ r_new) if np.all(np.isfinite(r_new)) else math.inf
        if cost_new < cost:
            rel = (cost - cost_new) / max(cost, np.finfo(float).tiny)
            x, r, cost = x_new, r_new, cost_new
            history.append(cost)
            lam = max(lam / LAMBDA_DOWN, 1e-12)
            need_jac = True
            if rel < ftol and small_step:
                converged, message = True, "converged"
                break
        else:
            if small_step or lam > 1e16:
                converged, message = True, "converged (no further decrease)"
                break
            lam *= LAMBDA_UP

    if need_jac or jac is None:
        jac = forward_jacobian(fun, x, r, rel_step, lower, upper)
        nfev += n
    return LMResult(x, cost, jac, r, it, nfev, converged, message, history)


def perturbed_starts(x0, n_starts, rng, positive, spread=0.3):
    """``x0`` followed by ``n_starts - 1`` perturbed copies.

    Positive parameters get a log-uniform factor in ``[1/(1+spread), 1+spread]``;
    the rest an additive uniform perturbation of ``spread * max(|x|, 1)``.
    """
    x0 = np.asarray(x0, dtype=float)
    starts = [x0.copy()]
    lim = math.log1p(spread)
    for _ in range(max(0, n_starts - 1)):
        u = rng.uniform(-1.0, 1.0, size=x0.size)
        x = np.where(positive, x0 * np.exp(lim * u), x0 + spread * np.maximum(np.abs(x0), 1.0) * u)
        starts.append(x)
    return starts


def rank_check(jac, names, rcond=1e-8):
    """Raise :class:`SingularJacobianError` if ``jac`` is numerically rank deficient."""
    if jac.size == 0:
        return
    _, s, vt = np.linalg.svd(jac, full_matrices=False)
    if s[0] == 0:
        raise SingularJacobianError("Jacobian vanishes at the optimum; no parameter is identifiable", names)
    weak = s < rcond * s[0]
    if not weak.any():
        return
    null = vt[weak]
    involved = [nm for j, nm in enumerate(names) if np.max(np.abs(null[:, j])) > 0.1]
    raise SingularJacobianError(
        "singular Jacobian at the optimum; unidentifiable parameters: " + ", ".join(involved),
        involved,
    )


def half_widths(jac, cost, n_data, z=1.959963984540054):
    """Normal-approximation 95% confidence half-widths from ``J^T J``."""
    dof = max(n_data - jac.shape[1], 1)
    sigma2 = cost / dof
    try:
        cov = np.linalg.inv(jac.T @ jac) * sigma2
    except np.linalg.LinAlgError:
        return np.full(jac.shape[1], np.inf)
    return z * np.sqrt(np.clip(np.diag(cov), 0, None))
