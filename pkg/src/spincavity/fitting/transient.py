"""Fit transient traces with the radiation-damping Bloch or MBE1 forward models."""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ..model import SystemParams
from ..protocol import DriveProtocol
from ..semiclassical import Model, RdbeParams, SimulationError, simulate
from ..trace import Trace
from ._validation import check_axis, check_target, check_weights
from .core import solve
from .lm import SingularJacobianError

# free-parameter names and units per forward model
MODEL_PARAMS = {
    Model.RDBE: (("tau_r", "omega1", "t2", "scale", "offset"), ("s", "rad/s", "s", "1", "1")),
    Model.MBE1: (("g", "kappa", "gamma2", "drive_amp", "scale", "offset"),
                 ("rad/s", "rad/s", "rad/s", "rad/s", "1", "1")),
}
# held parameters with their defaults
MODEL_FIXED = {
    Model.RDBE: {"t1": math.inf, "m_eq": 1.0},
    Model.MBE1: {"gamma1": 0.0},
}
INITIAL_T2_MULTIPLE = 3.0
# penalty returned when the forward model fails for a trial point
_FAILED = 1e6


def forward(model, values, times, rtol=1e-10, atol=1e-12):
    """Model signal ``scale * s(t) + offset`` at ``times`` (s, starting at 0).

    ``values`` maps every parameter of the model (free and held) to a value.
    For ``rdbe`` ``s`` is the reduced-drive magnitude (rad/s), for ``mbe1``
    it is ``|<a>|``. The drive is switched on at ``t = 0`` and held.
    """
    model = Model(model)
    duration = float(times[-1]) if times[-1] > 0 else 1.0
    if model is Model.RDBE:
        p = RdbeParams(tau_r=values["tau_r"], omega1=values["omega1"], t1=values["t1"],
                       t2=values["t2"], m_eq=values["m_eq"])
        amp = values["omega1"]
    elif model is Model.MBE1:
        p = SystemParams.resonant(g=values["g"], kappa=values["kappa"], gamma2=values["gamma2"],
                                  gamma1=values["gamma1"], drive_amp=values["drive_amp"])
        amp = values["drive_amp"]
    else:
        raise ValueError("transient fits support the rdbe and mbe1 models")
    proto = DriveProtocol.constant(duration, amp, max_duration=math.inf)
    tr = simulate(model, proto, p, sample_times=times, rtol=rtol, atol=atol)
    return values["scale"] * tr.signal + values["offset"]


def _default_t2(model, values):
    if model is Model.RDBE:
        return values.get("t2", math.inf)
    g2 = values.get("gamma2", 0.0)
    return 1.0 / g2 if g2 > 0 else math.inf


class TransientFitter(RegressorMixin, BaseEstimator):
    """Least-squares fit of a transient trace with a semiclassical forward model.

    Parameters
    ----------
    model : {"rdbe", "mbe1"}
        ``rdbe`` fits ``tau_r, omega1, t2, scale, offset``; ``mbe1`` fits
        ``g, kappa, gamma2, drive_amp, scale, offset``.
    guess : dict
        Initial values for every free parameter (SI units, rates in rad/s).
    bounds : dict, optional
        ``name -> (lower, upper)``. Defaults: physical parameters within a
        factor 100 of the guess, ``scale >= 0``, ``offset`` free.
    fixed : dict, optional
        Parameters held at a value instead of fitted (for example ``tau_r``
        derived from ``kappa/g**2``, or ``t1``).
    include_initial : bool
        By default samples earlier than ``3 * T2`` (from the guess) get zero
        weight, because neither model describes the first coherent
        oscillations; set ``True`` to fit them too.
    n_starts, random_state : int
        Number of starts (the guess plus perturbed copies) and their seed.
    n_jobs : int
        Starts run in parallel when ``> 1``.

    Notes
    -----
    Times are taken relative to the first sample, which is where the drive
    switches on, so a shifted time axis gives the same estimates.
    """

    def __init__(self, model="rdbe", guess=None, bounds=None, fixed=None, include_initial=False,
                 n_starts=8, random_state=0, n_jobs=1, max_iter=400, rtol=1e-10):
        self.model = model
        self.guess = guess
        self.bounds = bounds
        self.fixed = fixed
        self.include_initial = include_initial
        self.n_starts = n_starts
        self.random_state = random_state
        self.n_jobs = n_jobs
        self.max_iter = max_iter
        self.rtol = rtol

    def _split(self):
        model = Model(self.model)
        if model not in MODEL_PARAMS:
            raise ValueError("model must be 'rdbe' or 'mbe1'")
        names, units = MODEL_PARAMS[model]
        fixed = dict(MODEL_FIXED[model])
        fixed.update(self.fixed or {})
        free = [(n, u) for n, u in zip(names, units) if n not in fixed]
        return model, [n for n, _ in free], [u for _, u in free], fixed

    def fit(self, X, y, sample_weight=None):
        """Fit times ``X`` (s) and signal ``y``."""
        t = check_axis(X, "X", 8)
        y = check_target(y, t.size)
        w = check_weights(sample_weight, t.size)
        model, names, units, fixed = self._split()
        guess = dict(self.guess or {})
        missing = [n for n in names if n not in guess]
        if missing:
            raise ValueError("guess lacks: " + ", ".join(missing))
        unknown = set(guess) - set(names) - set(fixed)
        if unknown:
            raise ValueError("unknown parameters in guess: " + ", ".join(sorted(unknown)))
        rel = t - t[0]

        if not self.include_initial:
            t2 = _default_t2(model, {**fixed, **guess})
            if math.isfinite(t2):
                w = np.where(rel < INITIAL_T2_MULTIPLE * t2, 0.0, w)
                if not np.any(w > 0):
                    raise ValueError("the trace is shorter than the excluded initial window")
        sw = np.sqrt(w)
        if np.ptp(y[w > 0]) == 0:
            # best fit is scale = 0, where every shape derivative vanishes
            shape = [n for n in names if n not in ("scale", "offset")]
            raise SingularJacobianError(
                "constant trace; unidentifiable parameters: " + ", ".join(shape), shape)

        x0 = np.array([guess[n] for n in names], dtype=float)
        yscale = float(np.max(np.abs(y))) or 1.0
        lower, upper, ref = [], [], []
        for n, g in zip(names, x0):
            lo, hi = (self.bounds or {}).get(n, (None, None))
            if n == "offset":
                lo = -np.inf if lo is None else lo
                hi = np.inf if hi is None else hi
                ref.append(max(abs(g), 1e-3 * yscale))
            elif n == "scale":
                lo = 0.0 if lo is None else lo
                hi = np.inf if hi is None else hi
                ref.append(abs(g) if g else 1.0)
            else:
                if not g > 0:
                    raise ValueError(f"guess for {n} must be > 0")
                lo = g / 100 if lo is None else lo
                hi = g * 100 if hi is None else hi
                ref.append(g)
            lower.append(lo)
            upper.append(hi)

        rtol = self.rtol

        def residual(x):
            vals = dict(fixed)
            vals.update(zip(names, x))
            try:
                m = forward(model, vals, rel, rtol=rtol, atol=rtol * 1e-2)
            except (SimulationError, ValueError):
                return np.full(t.size, _FAILED)
            return sw * (m - y)

        res = solve(residual, names, units, x0, lower, upper, ref, n_starts=self.n_starts,
                    seed=self.random_state, n_jobs=self.n_jobs, max_iter=self.max_iter,
                    rel_step=1e-6, fixed=fixed)
        if model is Model.RDBE:
            res.derived = {}
        else:
            res.derived = {"tau_r": res["kappa"] / res["g"] ** 2,
                           "omega1": 2 * res["g"] * res["drive_amp"] / res["kappa"]}
        self.result_ = res
        self.t0_ = float(t[0])
        self.params_ = {**fixed, **res.params}
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        t = check_axis(X, "X", 1)
        return forward(Model(self.model), self.params_, t - self.t0_, rtol=self.rtol,
                       atol=self.rtol * 1e-2)


def fit_transient(trace: Trace, model="rdbe", guess=None, bounds=None, weights=None, column="signal",
                  **kw):
    """Fit ``trace[column]`` against time; returns the FitResult."""
    est = TransientFitter(model=model, guess=guess, bounds=bounds, **kw)
    est.fit(trace.times, trace[column], sample_weight=weights)
    return est.result_
