"""Transient-spectroscopy protocols, presaturation, sweeps and plateau metrics."""

from __future__ import annotations

import dataclasses
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from . import ode, quantum
from . import semiclassical as sc
from .model import (
    ParameterError,
    SystemParams,
    collective_coupling,
    kappa_from_q,
    population_difference,
    polarization,
    saturation_geff,
)
from .protocol import DriveProtocol, Presaturation
from .semiclassical import Model, RdbeParams
from .trace import Trace, TraceSet

log = logging.getLogger(__name__)

HIST_BINS = 64
VALLEY_FRACTION = 0.5
# smallest share of the off-saturation samples a plateau bin must hold
MIN_PLATEAU_SHARE = 0.02
MIN_PLATEAU_SAMPLES = 5
SWEEP_AXES = ("temperature", "drive_amp", "n_presat", "g_eff")


# ---------------------------------------------------------------------------
# plateau metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlateauMetrics:
    saturation_level: float
    plateau_level: float
    plateau_duration: float
    initial_transient_peak: float

    def as_dict(self):
        return dataclasses.asdict(self)


def _dwell_weights(t):
    # each sample owns half the gap to each neighbour
    if t.size == 1:
        return np.zeros(1)
    gaps = np.diff(t)
    w = np.zeros_like(t)
    w[:-1] += 0.5 * gaps
    w[1:] += 0.5 * gaps
    return w


def plateau_metrics(trace, band_fraction=0.02, column="signal", window=None, bins=HIST_BINS):
    """Locate the long-lived plateau of a driven transient.

    The saturation level is the mean of the last 5% of the window. Samples
    farther than ``2 * band_fraction * (max - min)`` from it are histogrammed
    over the observed range. The plateau level is the centre of the fullest
    bin that holds at least 2% of those samples (and no fewer than 5) and
    is separated from the saturation band by a valley, i.e. some bin in
    between holds at most half as many samples; this rules out plain
    exponential approaches. The plateau duration is the time spent within
    ``band_fraction * (max - min)`` of that level. Without such a bin the
    duration is 0 and the plateau level equals the saturation level.

    Parameters
    ----------
    trace : Trace or tuple of (times, values)
    window : (t_start, t_end), optional
        Drive window; defaults to the whole trace.
    """
    if isinstance(trace, Trace):
        t, s = trace.times, trace[column]
    else:
        t, s = (np.asarray(a, dtype=float) for a in trace)
    if window is not None:
        m = (t >= window[0]) & (t <= window[1])
        t, s = t[m], s[m]
    if t.size < 100:
        raise ValueError(f"plateau metrics need at least 100 samples in the drive window, got {t.size}")

    n_tail = max(1, int(math.ceil(0.05 * t.size)))
    sat = float(np.mean(s[-n_tail:]))
    lo, hi = float(np.min(s)), float(np.max(s))
    span = hi - lo
    peak_idx = int(np.argmax(np.abs(s[: max(1, t.size // 10)] - sat)))
    peak = float(s[peak_idx])
    if not span > 0:
        return PlateauMetrics(sat, sat, 0.0, peak)

    far = np.abs(s - sat) > 2 * band_fraction * span
    if not far.any():
        return PlateauMetrics(sat, sat, 0.0, peak)
    counts, edges = np.histogram(s[far], bins=bins, range=(lo, hi))
    centres = 0.5 * (edges[:-1] + edges[1:])
    outside = np.abs(centres - sat) > 2 * band_fraction * span
    # a monotone approach to saturation piles samples up next to the excluded
    # band; only a bin cut off from that band by a valley can be a plateau
    j, best = -1, max(MIN_PLATEAU_SHARE * np.count_nonzero(far), MIN_PLATEAU_SAMPLES - 1)
    for i in np.flatnonzero(counts):
        between = outside & (np.abs(centres - sat) < abs(centres[i] - sat)) & (
            (centres - sat) * (centres[i] - sat) > 0)
        if counts[i] > best and np.any(counts[between] <= VALLEY_FRACTION * counts[i]):
            j, best = int(i), counts[i]
    if j < 0:
        return PlateauMetrics(sat, sat, 0.0, peak)
    level = centres[j]
    inside = np.abs(s - level) <= band_fraction * span
    duration = float(np.sum(_dwell_weights(t)[inside]))
    return PlateauMetrics(sat, float(level), duration, peak)


# ---------------------------------------------------------------------------
# transient runs
# ---------------------------------------------------------------------------

def _fastest_rate(model, params, protocol):
    if isinstance(params, RdbeParams):
        rates = [1 / params.tau_r, protocol.max_amplitude, 1 / params.t2]
    else:
        rates = [params.kappa, params.g_eff, params.gamma_2]
        if model is Model.BACKACTION and params.kappa > 0:
            rates.append(params.g_eff ** 2 / params.kappa)
    return max(r for r in rates if math.isfinite(r)) if rates else 0.0


def reflection(e, b, drive_amp, kappa, kappa_e):
    """Reflected amplitude ``|1 - 2 kappa_e <a> / |E||`` for a one-port readout."""
    a = np.asarray(e) + 1j * np.asarray(b)
    return np.abs(1 - 2 * kappa_e * a / drive_amp)


def run_transient(model, params, protocol: DriveProtocol, sample_rate, observable="amplitude",
                  initial=None, **solver_kw) -> Trace:
    """Simulate a continuous-drive transient sampled at ``sample_rate`` (Hz).

    For ``model="rdbe"`` ``params`` may be ``RdbeParams`` (segment amplitudes
    are Rabi frequencies) or ``SystemParams`` (amplitudes are cavity drives,
    converted with ``omega1 = 2 g |E| / kappa`` and reported as ``|<a>|``).
    ``model="lindblad"`` delegates to :func:`spincavity.quantum.evolve` with
    ``params`` a ``(SystemParams, HilbertSpec)`` pair.

    ``observable="reflection"`` adds a ``reflection`` column (cavity models
    only) computed from the intracavity field and ``kappa_e``.
    """
    if not sample_rate > 0:
        raise ParameterError("sample_rate must be > 0")
    duration = protocol.total_duration
    n = int(math.floor(duration * sample_rate + 1e-9)) + 1
    times = np.arange(n) / sample_rate
    notes = []

    if str(model) in ("lindblad", "Model.LINDBLAD"):
        sp, spec = params
        tr = quantum.evolve(None, spec, sp, protocol, times)
        return tr.with_column("signal", np.abs(tr["a_re"] + 1j * tr["a_im"]))

    model = Model(model)
    signal_scale = 1.0
    if model is Model.RDBE and isinstance(params, SystemParams):
        sp = params
        rp = sc.rdbe_from_meanfield(sp)
        protocol = protocol.scaled(2 * sp.g_eff / sp.kappa)
        signal_scale = 1 / (2 * sp.g_eff)
        params = rp

    fastest = _fastest_rate(model, params, protocol)
    if sample_rate < 10 * fastest / (2 * math.pi):
        notes.append(
            f"sample rate {sample_rate:.3g} Hz does not resolve the fastest rate "
            f"{fastest / (2 * math.pi):.3g} Hz (want >= 10x)")

    tr = sc.simulate(model, protocol, params, initial=initial, sample_times=times, **solver_kw)
    if signal_scale != 1.0:
        tr = tr.with_column("signal", tr.signal * signal_scale)
    if observable == "reflection":
        if model is Model.RDBE:
            raise ParameterError("the reflection observable needs a cavity model")
        amp = protocol.max_amplitude
        if not amp > 0:
            raise ParameterError("the reflection observable needs a nonzero drive")
        tr = tr.with_column("reflection", reflection(tr["e"], tr["b"], amp, params.kappa, params.kappa_e))
    elif observable != "amplitude":
        raise ParameterError(f"unknown observable {observable!r}")
    if notes:
        for msg in notes:
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return tr.with_metadata(warnings=notes)


# ---------------------------------------------------------------------------
# presaturation
# ---------------------------------------------------------------------------

def apply_presaturation(params: SystemParams, presat: Presaturation | None, t2=None,
                        mode="parametric") -> SystemParams:
    """Replace ``g_eff`` by its value after a presaturation train.

    ``t2`` defaults to ``params.t2``; the delay must satisfy ``td >= 5 T2``
    so excited coherences have decayed between pulses. ``mode="cycles"``
    simulates every pulse and delay with the Bloch equations instead of
    using the closed-form law, as a cross-check.
    """
    if presat is None or presat.n == 0:
        return params
    t2 = params.t2 if t2 is None else t2
    if math.isfinite(t2) and presat.td < 5 * t2:
        raise ParameterError(f"presaturation delay td={presat.td:g} s is shorter than 5*T2={5 * t2:g} s")
    if mode == "parametric":
        g = saturation_geff(params.g_eff, presat.n, presat.omega1, presat.tp)
    elif mode == "cycles":
        frac = presaturation_cycles(presat, t2, t1=params.t1)[-1]
        g = params.g_eff * math.sqrt(max(frac, 0.0))
    else:
        raise ParameterError(f"unknown presaturation mode {mode!r}")
    md = dict(params.metadata)
    md.setdefault("g_eff_unsaturated", params.g_eff)
    md["presaturation_n"] = md.get("presaturation_n", 0) + presat.n
    return dataclasses.replace(params, g_eff=g, metadata=md)


def presaturation_cycles(presat: Presaturation, t2, tau_r=math.inf, t1=math.inf, rtol=1e-10):
    """Cycle-by-cycle Bloch simulation of a presaturation train.

    Returns the longitudinal magnetization fraction after each of the ``n``
    cycles (array of length ``n + 1`` starting at 1). The parametric law
    predicts ``cos(omega1 tp) ** k``; ``sqrt`` of the fraction is the
    coupling ratio ``g(k) / g(0)``.
    """
    m = np.array([0.0, 0.0, 1.0])
    out = [1.0]
    pulse = RdbeParams(tau_r=tau_r, omega1=presat.omega1, t1=t1, t2=t2)
    for _ in range(presat.n):
        for dur, amp in ((presat.tp, presat.omega1), (presat.td, 0.0)):
            if dur <= 0:
                continue
            f, u = sc._scaled_field(Model.RDBE, pulse, amp, 0.0)
            sol = ode.integrate(ode.OdeProblem(f, m, (0.0, dur * u), rtol=rtol, atol=rtol * 1e-2))
            m = sol.y_final.copy()
        out.append(m[2])
    return np.asarray(out)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

@dataclass
class JobSpec:
    """Everything needed for one transient run."""

    model: str
    params: object
    protocol: DriveProtocol
    sample_rate: float
    q_table: tuple | None = None
    observable: str = "amplitude"
    solver: dict = field(default_factory=dict)
    # keep the Rabi frequency 2 g |E| / kappa fixed when g or kappa change
    hold_rabi: bool = True


def _interp_q(q_table, temperature):
    tab = np.asarray(q_table, dtype=float)
    order = np.argsort(tab[:, 0])
    return float(np.interp(temperature, tab[order, 0], tab[order, 1]))


def params_at_temperature(params: SystemParams, temperature, q_table=None):
    """Re-derive thermal quantities of ``params`` at ``temperature``.

    The excited population ``p`` follows the two-level law; the collective
    coupling uses the population difference ``1 - 2p``. ``kappa`` is
    rescaled from a ``(T, Q)`` table when one is given, keeping the
    internal/external split.
    """
    f0 = params.omega_s / (2 * math.pi)
    if not f0 > 0:
        raise ParameterError("a temperature sweep needs omega_s > 0")
    p = polarization(f0, temperature)
    changes = {"temperature": temperature, "polarization": p}
    if params.g0 > 0 and params.n_spins > 0:
        changes["g_eff"] = collective_coupling(params.g0, params.n_spins, population_difference(f0, temperature))
    if q_table is not None:
        kappa = kappa_from_q(params.omega_c or params.omega_s, _interp_q(q_table, temperature))
        frac_e = params.kappa_e / params.kappa if params.kappa > 0 else 0.0
        changes["kappa_e"] = kappa * frac_e
        changes["kappa_i"] = kappa * (1 - frac_e)
    return params.replace(**changes)


def job_for_value(axis, value, base: JobSpec) -> JobSpec:
    if axis not in SWEEP_AXES:
        raise ParameterError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")
    p, proto = base.params, base.protocol
    if axis == "drive_amp":
        proto = proto.with_amplitude(value)
    elif axis == "g_eff":
        if isinstance(p, RdbeParams):
            raise ParameterError("a g_eff sweep needs SystemParams")
        p = p.replace(g_eff=value)
    elif axis == "temperature":
        p = params_at_temperature(p, value, base.q_table)
    elif axis == "n_presat":
        pre = proto.presaturation
        if pre is None:
            raise ParameterError("an n_presat sweep needs a presaturation block in the protocol")
        proto = proto.with_presaturation(dataclasses.replace(pre, n=int(value)))
    if base.hold_rabi and axis in ("g_eff", "temperature"):
        old, new = base.params, p
        if new.g_eff > 0 and old.kappa > 0 and new.kappa > 0:
            proto = proto.scaled((old.g_eff / old.kappa) / (new.g_eff / new.kappa))
    return dataclasses.replace(base, params=p, protocol=proto)


def run_job(job: JobSpec) -> Trace:
    params = job.params
    pre = job.protocol.presaturation
    if pre is not None and isinstance(params, SystemParams):
        params = apply_presaturation(params, pre)
    tr = run_transient(job.model, params, job.protocol, job.sample_rate,
                       observable=job.observable, **job.solver)
    if isinstance(params, SystemParams):
        tr = tr.with_metadata(g_eff=params.g_eff, kappa=params.kappa, gamma_2=params.gamma_2,
                              polarization=params.polarization)
    return tr


def _safe_run(axis, value, base):
    try:
        return run_job(job_for_value(axis, value, base)), None
    except Exception as exc:  # recorded per job, the sweep continues
        log.warning("sweep job %s=%r failed: %s", axis, value, exc)
        return None, f"{type(exc).__name__}: {exc}"


def sweep(axis, values, base: JobSpec, n_jobs=1) -> TraceSet:
    """Run ``base`` once per value along ``axis``; results keep input order.

    Failures are recorded in ``TraceSet.errors`` and do not stop the sweep.
    """
    values = list(values)
    if not values:
        raise ParameterError("a sweep needs at least one value")
    if axis not in SWEEP_AXES:
        raise ParameterError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")
    if n_jobs == 1:
        results = [_safe_run(axis, v, base) for v in values]
    else:
        results = Parallel(n_jobs=n_jobs)(delayed(_safe_run)(axis, v, base) for v in values)
    traces, errors = zip(*results)
    return TraceSet(axis, tuple(values), tuple(traces), tuple(errors))
