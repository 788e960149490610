"""Adaptive explicit Runge-Kutta integration with dense output.

Dormand-Prince 5(4) pair with FSAL, proportional-integral step-size control
(Hairer, Norsett & Wanner, *Solving ODEs I*, II.4) and the standard
fourth-order continuous extension for sampling between accepted steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "IntegrationError",
    "NonFiniteError",
    "OdeProblem",
    "Solution",
    "StepSizeUnderflowError",
    "integrate",
    "sample",
]


class IntegrationError(RuntimeError):
    """Integration could not be completed."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class StepSizeUnderflowError(IntegrationError):
    pass


class NonFiniteError(IntegrationError):
    pass


# Butcher tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.zeros((7, 7))
_A[1, :1] = [1 / 5]
_A[2, :2] = [3 / 40, 9 / 40]
_A[3, :3] = [44 / 45, -56 / 15, 32 / 9]
_A[4, :4] = [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]
_A[5, :5] = [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]
_A[6, :6] = [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]
_B = _A[6].copy()
# fifth-order minus embedded fourth-order weights
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# continuous extension
_D = np.array([
    -12715105075 / 11282082432, 0.0, 87487479700 / 32700410799,
    -10690763975 / 1880347072, 701980252875 / 199316789632,
    -1453857185 / 822651844, 69997945 / 29380423,
])

_SAFE = 0.9
_BETA = 0.04
_EXPO = 0.2 - 0.75 * _BETA
_FAC_MIN = 0.2   # hnew >= h * _FAC_MIN
_FAC_MAX = 10.0  # hnew <= h * _FAC_MAX


@dataclass
class OdeProblem:
    """Initial value problem ``y' = rhs(t, y)`` on ``t_span``."""

    rhs: Callable[[float, np.ndarray], np.ndarray]
    y0: np.ndarray
    t_span: tuple[float, float]
    rtol: float = 1e-8
    atol: float = 1e-10
    max_step: float = math.inf
    first_step: float | None = None
    max_steps: int = 2_000_000

    def __post_init__(self):
        self.y0 = np.array(self.y0, dtype=float).ravel()
        t0, t1 = map(float, self.t_span)
        if not t1 > t0:
            raise ValueError(f"need t1 > t0, got span {self.t_span!r}")
        self.t_span = (t0, t1)
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("tolerances must be > 0")
        if not self.max_step > 0:
            raise ValueError("max_step must be > 0")


@dataclass
class Solution:
    """Accepted step mesh, states and dense-output coefficients."""

    t: np.ndarray
    y: np.ndarray
    coeffs: np.ndarray = field(repr=False)
    n_accepted: int = 0
    n_rejected: int = 0
    nfev: int = 0

    @property
    def t_span(self):
        return float(self.t[0]), float(self.t[-1])

    @property
    def y_final(self):
        return self.y[-1]

    def __call__(self, times):
        return sample(self, times)


def _rms(x):
    return math.sqrt(float(np.dot(x, x)) / x.size)


def _initial_step(rhs, t0, y0, f0, rtol, atol, hmax):
    sk = atol + rtol * np.abs(y0)
    d0 = _rms(y0 / sk)
    d1 = _rms(f0 / sk)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, hmax)
    f1 = rhs(t0 + h0, y0 + h0 * f0)
    d2 = _rms((np.asarray(f1, dtype=float) - f0) / sk) / h0
    dmax = max(d1, d2)
    h1 = max(1e-6, h0 * 1e-3) if dmax <= 1e-15 else (0.01 / dmax) ** 0.2
    return min(100 * h0, h1, hmax)


def integrate(problem: OdeProblem) -> Solution:
    """Integrate ``problem`` and keep everything needed for dense sampling.

    Raises
    ------
    NonFiniteError
        The right-hand side returned NaN/inf (``.t`` holds the time).
    StepSizeUnderflowError
        The step size fell below floating-point resolution, usually a sign of
        stiffness; reduce ``max_step`` or shorten the span.
    IntegrationError
        ``max_steps`` was exceeded.
    """
    rhs = problem.rhs
    rtol, atol = problem.rtol, problem.atol
    t0, tend = problem.t_span
    span = tend - t0
    hmax = min(problem.max_step, span)
    y = problem.y0.copy()
    n = y.size

    f = np.asarray(rhs(t0, y), dtype=float)
    if f.shape != y.shape:
        raise ValueError(f"rhs returned shape {f.shape}, expected {y.shape}")
    if not np.all(np.isfinite(f)) or not np.all(np.isfinite(y)):
        raise NonFiniteError(f"non-finite state or derivative at t={t0!r}", t0)
    nfev = 1

    if problem.first_step is not None:
        h = min(problem.first_step, hmax)
    else:
        h = _initial_step(rhs, t0, y, f, rtol, atol, hmax)
        nfev += 1

    ts = [t0]
    ys = [y.copy()]
    coeffs = []
    k = np.empty((7, n))
    a, c, e, d = _A, _C, _E, _D
    facold = 1e-4
    reject = False
    n_acc = n_rej = 0
    t = t0
    eps = np.finfo(float).eps

    while t < tend:
        if n_acc + n_rej >= problem.max_steps:
            raise IntegrationError(
                f"exceeded {problem.max_steps} steps at t={t!r}; the problem may be stiff", t)
        if 0.1 * h <= eps * max(abs(t), span):
            raise StepSizeUnderflowError(
                f"step size underflow at t={t!r} (h={h:.3e}); the problem is likely stiff "
                "for an explicit solver, reduce max_step or the integration span", t)
        last = t + 1.01 * h >= tend
        if last:
            h = tend - t

        k[0] = f
        for i in range(1, 6):
            k[i] = rhs(t + c[i] * h, y + h * (a[i, :i] @ k[:i]))
        ynew = y + h * (a[6, :6] @ k[:6])
        k[6] = rhs(t + h, ynew)
        nfev += 6

        sk = atol + rtol * np.maximum(np.abs(y), np.abs(ynew))
        err = _rms(h * (e @ k) / sk)
        if not math.isfinite(err):
            raise NonFiniteError(f"non-finite derivative in step from t={t!r}", t)

        fac11 = err ** _EXPO
        fac = fac11 / facold ** _BETA / _SAFE
        fac = min(1.0 / _FAC_MIN, max(1.0 / _FAC_MAX, fac))
        hnew = h / fac

        if err <= 1.0:
            facold = max(err, 1e-4)
            n_acc += 1
            # continuous-extension coefficients
            dy = ynew - y
            bspl = h * k[0] - dy
            coeffs.append(np.stack((y, dy, bspl, dy - h * k[6] - bspl, h * (d @ k))))
            t = tend if last else t + h
            y = ynew
            f = k[6].copy()
            ts.append(t)
            ys.append(y.copy())
            hnew = min(hnew, hmax)
            if reject:
                hnew = min(hnew, h)
            reject = False
        else:
            hnew = h / min(1.0 / _FAC_MIN, fac11 / _SAFE)
            reject = True
            n_rej += 1
        h = hnew

    return Solution(
        t=np.asarray(ts),
        y=np.asarray(ys),
        coeffs=np.asarray(coeffs).reshape(len(coeffs), 5, n),
        n_accepted=n_acc,
        n_rejected=n_rej,
        nfev=nfev,
    )


def sample(solution: Solution, times) -> np.ndarray:
    """Evaluate the dense output at ``times``; returns shape ``(len(times), n)``.

    Times that coincide with mesh points return the stored states exactly.
    """
    times = np.asarray(times, dtype=float).ravel()
    n = solution.y.shape[1]
    if times.size == 0:
        return np.empty((0, n))
    mesh = solution.t
    lo, hi = mesh[0], mesh[-1]
    if times.min() < lo or times.max() > hi:
        raise ValueError(f"sample times outside the solution span [{lo!r}, {hi!r}]")
    idx = np.searchsorted(mesh, times, side="right") - 1
    idx = np.clip(idx, 0, len(mesh) - 2)
    h = mesh[idx + 1] - mesh[idx]
    theta = ((times - mesh[idx]) / h)[:, None]
    th1 = 1.0 - theta
    r = solution.coeffs[idx]
    out = r[:, 0] + theta * (r[:, 1] + th1 * (r[:, 2] + theta * (r[:, 3] + th1 * r[:, 4])))
    exact = np.isin(times, mesh)
    if exact.any():
        out[exact] = solution.y[np.searchsorted(mesh, times[exact])]
    return out
