"""Mean-field spin-cavity models.

Three vector fields are provided:

* ``mbe1``: first-order Maxwell-Bloch equations for the cavity quadratures
  ``(E, B)`` and collective spin ``(Jx, Jy, Jz)``, resonant case.
* ``backaction``: the spin-only equations left after adiabatically
  eliminating the cavity (bad-cavity limit).
* ``rdbe``: radiation-damping Bloch equations for a magnetization
  ``(Mx, My, Mz)`` with equilibrium at ``Mz = +1``.

Spin components keep the normalization ``Jx = J+ + J-``,
``Jy = -i (J+ - J-)`` with the ground state at ``Jz = -1``. The Bloch frame
is reached with ``(Mx, My, Mz) = (-Jx, Jy, -Jz)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import ode
from .model import ParameterError, SystemParams, adiabatic_map
from .protocol import DriveProtocol
from .trace import Trace


class Model(str, enum.Enum):
    MBE1 = "mbe1"
    BACKACTION = "backaction"
    RDBE = "rdbe"


class DetuningError(ParameterError):
    pass


class SimulationError(RuntimeError):
    """Integration of one protocol segment failed."""

    def __init__(self, message, segment=None, t=None):
        super().__init__(message)
        self.segment = segment
        self.t = t


@dataclass(frozen=True)
class MeanFieldState:
    e_field: float = 0.0
    b_field: float = 0.0
    jx: float = 0.0
    jy: float = 0.0
    jz: float = -1.0

    def __array__(self, dtype=None, copy=None):
        return np.array([self.e_field, self.b_field, self.jx, self.jy, self.jz], dtype=dtype)

    @classmethod
    def from_array(cls, y):
        return cls(*map(float, y))


@dataclass(frozen=True)
class BlochState:
    mx: float = 0.0
    my: float = 0.0
    mz: float = 1.0

    def __array__(self, dtype=None, copy=None):
        return np.array([self.mx, self.my, self.mz], dtype=dtype)

    @classmethod
    def from_array(cls, y):
        return cls(*map(float, y))


@dataclass(frozen=True)
class RdbeParams:
    """Radiation-damping Bloch parameters.

    ``tau_r`` may be ``inf`` (no back-action), as may ``t1`` and ``t2``.
    ``m_eq`` is the equilibrium magnetization, ``1 - 2p`` in
    polarization-aware use and 1 otherwise.
    """

    tau_r: float
    omega1: float = 0.0
    t1: float = math.inf
    t2: float = math.inf
    m_eq: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if not self.tau_r > 0:
            raise ParameterError(f"tau_r must be > 0, got {self.tau_r!r}")
        if not (self.t1 > 0 and self.t2 > 0):
            raise ParameterError("t1 and t2 must be > 0")
        if self.omega1 < 0:
            raise ParameterError("omega1 must be >= 0")


def _state(state, n):
    y = np.asarray(state, dtype=float).ravel()
    if y.size != n:
        raise ValueError(f"expected a state of length {n}, got {y.size}")
    if not np.all(np.isfinite(y)):
        raise ValueError("state has non-finite components")
    return y


def _require_resonant(params):
    if params.delta_c != 0 or params.delta_s != 0:
        raise DetuningError("detuning unsupported in v1: the mean-field equations assume delta_c = delta_s = 0")


def _inv(x):
    return 0.0 if math.isinf(x) else 1.0 / x


# ---------------------------------------------------------------------------
# vector fields
# ---------------------------------------------------------------------------

def mbe1_rhs(state, params: SystemParams, t=0.0, drive=None):
    """Time derivative of ``(E, B, Jx, Jy, Jz)``.

    ``drive`` is an optional ``(amplitude, phase)`` overriding
    ``params.drive_amp`` and ``params.drive_phase``.
    """
    _require_resonant(params)
    e, b, jx, jy, jz = _state(state, 5)
    amp, phase = drive if drive is not None else (params.drive_amp, params.drive_phase)
    g, k, g1, g2 = params.g_eff, params.kappa, params.gamma_1, params.gamma_2
    return np.array([
        -k * e + 0.5 * g * jx + amp * math.cos(phase),
        -k * b - 0.5 * g * jy + amp * math.sin(phase),
        -g2 * jx + 2 * g * e * jz,
        -g2 * jy - 2 * g * b * jz,
        -g1 * (1 + jz) - 2 * g * e * jx + 2 * g * b * jy,
    ])


def backaction_rhs(state, params: SystemParams, t=0.0, drive=None):
    """Time derivative of ``(Jx, Jy, Jz)`` with the cavity adiabatically eliminated."""
    if not params.kappa > 0:
        raise ParameterError("the back-action equations need kappa > 0")
    jx, jy, jz = _state(state, 3)
    amp, phase = drive if drive is not None else (params.drive_amp, params.drive_phase)
    g, k = params.g_eff, params.kappa
    rd = g * g / k
    wx = 2 * g * amp * math.cos(phase) / k
    wy = 2 * g * amp * math.sin(phase) / k
    g1, g2 = params.gamma_1, params.gamma_2
    m_eq = 1 - 2 * params.polarization
    return np.array([
        rd * jx * jz + wx * jz - g2 * jx,
        rd * jy * jz - wy * jz - g2 * jy,
        -rd * (jy * jy + jx * jx) - wx * jx + wy * jy - g1 * (jz + m_eq),
    ])


def reduced_drive(state, params: RdbeParams, omega1=None):
    """Drive seen by the spins once the back-action field is subtracted.

    Returns ``(omega1 cos(phase) - Mx / tau_r, omega1 sin(phase) - My / tau_r)``;
    the first component is the reduced Rabi drive for a drive along y.
    """
    mx, my = state[0], state[1]
    w = params.omega1 if omega1 is None else omega1
    inv_tr = _inv(params.tau_r)
    return (w * np.cos(params.phase) - mx * inv_tr, w * np.sin(params.phase) - my * inv_tr)


def rdbe_rhs(state, params: RdbeParams, t=0.0):
    """Time derivative of ``(Mx, My, Mz)`` under radiation damping."""
    mx, my, mz = _state(state, 3)
    wx, wy = reduced_drive((mx, my), params)
    r1, r2 = _inv(params.t1), _inv(params.t2)
    return np.array([
        -mx * r2 + mz * wx,
        -my * r2 + mz * wy,
        (params.m_eq - mz) * r1 - mx * wx - my * wy,
    ])


# ---------------------------------------------------------------------------
# conversions
# ---------------------------------------------------------------------------

def rdbe_from_meanfield(params: SystemParams) -> RdbeParams:
    """Bloch parameters equivalent to the back-action equations of ``params``.

    ``tau_r = kappa / g**2`` and ``omega1 = 2 g |E| / kappa``. The transverse
    time is ``1 / gamma_2``, the rate the mean-field equations use, so that
    the two vector fields coincide exactly under :func:`bloch_sign_map`.
    """
    tau_r, omega1 = adiabatic_map(params.g_eff, params.kappa, params.drive_amp)
    return RdbeParams(
        tau_r=tau_r,
        omega1=omega1,
        t1=_inv(params.gamma_1) if params.gamma_1 else math.inf,
        t2=_inv(params.gamma_2) if params.gamma_2 else math.inf,
        m_eq=1 - 2 * params.polarization,
        phase=params.drive_phase,
    )


def bloch_sign_map(spin):
    """Map ``(Jx, Jy, Jz)`` to ``(Mx, My, Mz) = (-Jx, Jy, -Jz)``.

    Works on a triple or on an array whose last axis has length 3. The map is
    its own inverse.
    """
    s = np.asarray(spin, dtype=float)
    return s * np.array([-1.0, 1.0, -1.0])


meanfield_from_bloch = bloch_sign_map


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

def _unit_rate(*preferred, fallback=()):
    for r in preferred:
        if r > 0 and math.isfinite(r):
            return r
    rates = [r for r in fallback if r > 0 and math.isfinite(r)]
    return max(rates) if rates else 1.0


def _scaled_field(model, params, amp, phase):
    """Right-hand side in dimensionless time ``s = rate * t``, and ``rate``."""
    ca, sa = math.cos(phase), math.sin(phase)
    if model is Model.MBE1:
        g, k, g1, g2 = params.g_eff, params.kappa, params.gamma_1, params.gamma_2
        u = _unit_rate(k, fallback=(g, g1, g2, amp))
        g, k, g1, g2 = g / u, k / u, g1 / u, g2 / u
        ex, ey = amp * ca / u, amp * sa / u
        hg = 0.5 * g

        def f(s, y):
            e, b, jx, jy, jz = y
            return np.array([
                -k * e + hg * jx + ex,
                -k * b - hg * jy + ey,
                -g2 * jx + 2 * g * e * jz,
                -g2 * jy - 2 * g * b * jz,
                -g1 * (1 + jz) - 2 * g * e * jx + 2 * g * b * jy,
            ])
        return f, u

    if model is Model.BACKACTION:
        g, k = params.g_eff, params.kappa
        rd = g * g / k
        u = _unit_rate(k, fallback=(rd,))
        rd = rd / u
        wx, wy = 2 * g * amp * ca / k / u, 2 * g * amp * sa / k / u
        g1, g2 = params.gamma_1 / u, params.gamma_2 / u
        m_eq = 1 - 2 * params.polarization

        def f(s, y):
            jx, jy, jz = y
            return np.array([
                rd * jx * jz + wx * jz - g2 * jx,
                rd * jy * jz - wy * jz - g2 * jy,
                -rd * (jy * jy + jx * jx) - wx * jx + wy * jy - g1 * (jz + m_eq),
            ])
        return f, u

    # RDBE: amplitude is the Rabi frequency omega1
    inv_tr = _inv(params.tau_r)
    r1, r2 = _inv(params.t1), _inv(params.t2)
    u = _unit_rate(inv_tr, fallback=(amp, r1, r2))
    a, r1, r2 = inv_tr / u, r1 / u, r2 / u
    wx, wy = amp * ca / u, amp * sa / u
    m_eq = params.m_eq

    def f(s, y):
        mx, my, mz = y
        rx = wx - mx * a
        ry = wy - my * a
        return np.array([-mx * r2 + mz * rx, -my * r2 + mz * ry, (m_eq - mz) * r1 - mx * rx - my * ry])
    return f, u


def default_initial(model, params):
    if model is Model.MBE1:
        return np.array([0.0, 0.0, 0.0, 0.0, -1.0])
    if model is Model.BACKACTION:
        return np.array([0.0, 0.0, -(1 - 2 * params.polarization)])
    return np.array([0.0, 0.0, params.m_eq])


def _observables(model, params, y, amps, phases):
    """Named columns for sampled states ``y`` (rows) and per-sample drive."""
    if model is Model.MBE1:
        e, b = y[:, 0], y[:, 1]
        return {"e": e, "b": b, "jx": y[:, 2], "jy": y[:, 3], "jz": y[:, 4],
                "signal": np.hypot(e, b)}
    if model is Model.BACKACTION:
        g, k = params.g_eff, params.kappa
        e = (0.5 * g * y[:, 0] + amps * np.cos(phases)) / k
        b = (-0.5 * g * y[:, 1] + amps * np.sin(phases)) / k
        return {"jx": y[:, 0], "jy": y[:, 1], "jz": y[:, 2], "e": e, "b": b,
                "signal": np.hypot(e, b)}
    inv_tr = _inv(params.tau_r)
    rx = amps * np.cos(phases) - y[:, 0] * inv_tr
    ry = amps * np.sin(phases) - y[:, 1] * inv_tr
    return {"mx": y[:, 0], "my": y[:, 1], "mz": y[:, 2], "signal": np.hypot(rx, ry)}


def simulate(model, protocol: DriveProtocol, params, initial=None, sample_times=None,
             rtol=1e-8, atol=1e-10, max_step=math.inf, n_samples=1001) -> Trace:
    """Integrate one model through a piecewise-constant drive protocol.

    Parameters
    ----------
    model : Model or str
        ``"mbe1"``, ``"backaction"`` or ``"rdbe"``.
    protocol : DriveProtocol
        Segment amplitudes are ``|E|`` (rad/s) for the cavity models and the
        Rabi frequency ``omega1`` for ``rdbe``; the segment phase rotates the
        drive in the transverse plane.
    params : SystemParams or RdbeParams
        ``RdbeParams`` for ``rdbe``, ``SystemParams`` otherwise.
    initial : array_like, optional
        Defaults to the thermal state of the model.
    sample_times : array_like, optional
        Times (s) within ``[0, protocol.total_duration]``; defaults to
        ``n_samples`` evenly spaced points.

    Returns
    -------
    Trace
        Model state columns plus ``signal``: the cavity amplitude ``|<a>|``
        for the cavity models and the magnitude of the reduced drive (rad/s)
        for ``rdbe``, which is ``2 g |<a>|`` in the bad-cavity limit.
    """
    model = Model(model)
    if model is Model.RDBE:
        if not isinstance(params, RdbeParams):
            raise TypeError("the rdbe model takes RdbeParams")
    else:
        if not isinstance(params, SystemParams):
            raise TypeError(f"the {model.value} model takes SystemParams")
        _require_resonant(params)
        if model is Model.BACKACTION and not params.kappa > 0:
            raise ParameterError("the back-action equations need kappa > 0")

    y = default_initial(model, params) if initial is None else _state(initial, 5 if model is Model.MBE1 else 3)
    bounds = protocol.boundaries
    t_end = bounds[-1]
    if sample_times is None:
        sample_times = np.linspace(0.0, t_end, n_samples)
    times = np.asarray(sample_times, dtype=float)
    if times.size and (times.min() < 0 or times.max() > t_end * (1 + 1e-12)):
        raise ValueError("sample times must lie within the protocol duration")

    out = np.empty((times.size, y.size))
    amps = np.empty(times.size)
    phases = np.empty(times.size)
    stats = {"n_accepted": 0, "n_rejected": 0, "nfev": 0}
    for i, seg in enumerate(protocol.segments):
        t0, t1 = bounds[i], bounds[i + 1]
        last = i == len(protocol.segments) - 1
        mask = (times >= t0) & ((times <= t1) if last else (times < t1))
        f, u = _scaled_field(model, params, seg.amplitude, seg.phase)
        problem = ode.OdeProblem(f, y, (t0 * u, t1 * u), rtol=rtol, atol=atol,
                                 max_step=max_step * u if math.isfinite(max_step) else math.inf)
        try:
            sol = ode.integrate(problem)
        except ode.IntegrationError as exc:
            t_fail = None if exc.t is None else exc.t / u
            raise SimulationError(f"segment {i}: {exc}", segment=i, t=t_fail) from exc
        if mask.any():
            out[mask] = ode.sample(sol, np.clip(times[mask] * u, sol.t[0], sol.t[-1]))
        amps[mask] = seg.amplitude
        phases[mask] = seg.phase
        y = sol.y_final.copy()
        stats["n_accepted"] += sol.n_accepted
        stats["n_rejected"] += sol.n_rejected
        stats["nfev"] += sol.nfev

    if model is not Model.RDBE and times.size:
        j0 = np.linalg.norm(default_initial(model, params)[-3:] if initial is None else np.asarray(initial)[-3:])
        jmax = max(j0, 1.0)
        if np.max(np.abs(out[:, -1])) > jmax * (1 + 1e-6):
            raise SimulationError(f"|Jz| exceeded its bound {jmax:g}; tighten tolerances")

    cols = _observables(model, params, out, amps, phases)
    md = {"model": model.value, "protocol_digest": protocol.digest(), "solver": stats}
    return Trace(times, cols, md)
