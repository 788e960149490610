import dataclasses
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from oracles import drive_sweep_durations, geff_sweep_durations
from spincavity.experiments import (
    JobSpec,
    apply_presaturation,
    params_at_temperature,
    plateau_metrics,
    presaturation_cycles,
    run_job,
    run_transient,
    sweep,
)
from spincavity.model import ParameterError, RegimeError, SystemParams, collective_coupling
from spincavity.protocol import DriveProtocol, Presaturation
from spincavity.quantum import HilbertSpec
from spincavity.semiclassical import RdbeParams
from spincavity.trace import Trace

TWO_PI = 2 * math.pi
PLATEAU_RDBE = RdbeParams(tau_r=400e-9, omega1=TWO_PI * 17.5e3, t1=1.0, t2=1.5e-6)


def piecewise(t):
    """Ramp to 0.8 over 0.1 ms, hold 2 ms, then relax to 0.5."""
    ramp, hold = 0.1e-3, 2.0e-3
    return np.where(t < ramp, 0.8 * t / ramp,
                    np.where(t < ramp + hold, 0.8,
                             0.5 + 0.3 * np.exp(-(t - ramp - hold) / 0.1e-3)))


# --- plateau metrics --------------------------------------------------------

def test_constant_trace_has_no_plateau():
    t = np.linspace(0, 1e-3, 500)
    m = plateau_metrics((t, np.full_like(t, 0.3)))
    assert m.plateau_duration == 0.0
    assert m.plateau_level == m.saturation_level == pytest.approx(0.3)


def test_piecewise_oracle():
    t = np.linspace(0, 4e-3, 40001)
    s = piecewise(t)
    m = plateau_metrics((t, s))
    band = 0.02 * (s.max() - s.min())
    assert abs(m.plateau_level - 0.8) <= band
    assert m.plateau_duration == pytest.approx(2.0e-3, rel=0.05)
    assert m.saturation_level == pytest.approx(0.5, abs=1e-6)


@pytest.mark.parametrize("tau", [0.05e-3, 0.3e-3, 1e-3])
def test_exponential_decay_has_no_plateau(tau):
    t = np.linspace(0, 5e-3, 5000)
    m = plateau_metrics((t, 0.2 + np.exp(-t / tau)))
    assert m.plateau_duration == 0.0


def test_rising_exponential_has_no_plateau():
    t = np.linspace(0, 5e-3, 5000)
    assert plateau_metrics((t, 1 - np.exp(-t / 0.4e-3))).plateau_duration == 0.0


def test_too_few_samples():
    t = np.linspace(0, 1, 99)
    with pytest.raises(ValueError, match="100 samples"):
        plateau_metrics((t, t))


def test_window_restricts_samples():
    t = np.linspace(0, 4e-3, 40001)
    m = plateau_metrics((t, piecewise(t)), window=(0.0, 1.5e-3))
    # the cut window ends on the plateau itself
    assert m.saturation_level == pytest.approx(0.8)


@settings(max_examples=30)
@given(st.floats(1e-6, 1e6))
def test_plateau_scale_invariance(alpha):
    t = np.linspace(0, 4e-3, 4001)
    s = piecewise(t)
    m1 = plateau_metrics((t, s))
    m2 = plateau_metrics((t, alpha * s))
    assert m2.plateau_duration == pytest.approx(m1.plateau_duration, rel=1e-9, abs=1e-12)
    assert m2.plateau_level == pytest.approx(alpha * m1.plateau_level, rel=1e-9)
    assert m2.saturation_level == pytest.approx(alpha * m1.saturation_level, rel=1e-9)


# --- transients -------------------------------------------------------------

@pytest.fixture(scope="module")
def plateau_trace():
    return run_transient("rdbe", PLATEAU_RDBE, DriveProtocol.constant(5e-3, PLATEAU_RDBE.omega1), 4e6)


def test_plateau_outlives_coherence(plateau_trace):
    m = plateau_metrics(plateau_trace)
    assert m.plateau_duration > 50 * PLATEAU_RDBE.t2
    # the plateau sits away from the saturated signal and decays toward it
    assert abs(m.plateau_level - m.saturation_level) > 0.04 * np.ptp(plateau_trace.signal)


def test_zero_drive_is_constant():
    sp = SystemParams.resonant(g=TWO_PI * 4.2e6, kappa=TWO_PI * 460e3, gamma2=TWO_PI * 670e3)
    tr = run_transient("mbe1", sp, DriveProtocol.constant(20e-6, 0.0), 5e7)
    assert np.all(tr.signal == 0.0)
    assert np.all(tr["jz"] == tr["jz"][0])
    assert plateau_metrics(tr).plateau_duration == 0.0


def test_no_backaction_matches_torrey():
    t2 = 1.5e-6
    w = TWO_PI * 17.5e3
    p = RdbeParams(tau_r=math.inf, omega1=w, t1=t2, t2=t2)
    tr = run_transient("rdbe", p, DriveProtocol.constant(2e-4, w), 4e6, rtol=1e-11, atol=1e-13)
    # linear Bloch equations on (mx, my, mz, 1)
    r = 1 / t2
    a = np.array([[-r, 0, w, 0], [0, -r, 0, 0], [-w, 0, -r, r], [0, 0, 0, 0]])
    ref = np.array([expm(a * t) @ [0, 0, 1, 1] for t in tr.times[::40]])
    got = np.column_stack([tr["mx"], tr["my"], tr["mz"]])[::40]
    assert np.max(np.abs(got - ref[:, :3])) < 1e-8
    assert plateau_metrics(tr).plateau_duration == 0.0
    assert plateau_metrics(tr, column="mx").plateau_duration == 0.0


def test_undersampling_warns():
    with pytest.warns(RuntimeWarning, match="does not resolve"):
        tr = run_transient("rdbe", PLATEAU_RDBE, DriveProtocol.constant(1e-4, PLATEAU_RDBE.omega1), 1e6)
    assert tr.metadata["warnings"]


def test_adequate_sampling_is_silent():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        tr = run_transient("rdbe", PLATEAU_RDBE, DriveProtocol.constant(1e-4, PLATEAU_RDBE.omega1), 4e6)
    assert tr.metadata["warnings"] == []


def test_rdbe_from_cavity_params_reports_field():
    sp = SystemParams.resonant(g=TWO_PI * 1.0e6, kappa=TWO_PI * 10e6, gamma2=1 / 1.5e-6,
                               gamma1=1.0)
    amp = TWO_PI * 17.5e3 * sp.kappa / (2 * sp.g_eff)
    tr = run_transient("rdbe", sp, DriveProtocol.constant(2e-5, amp), 2e8)
    mb = run_transient("mbe1", sp, DriveProtocol.constant(2e-5, amp), 2e8)
    # adiabatic elimination: |<a>| of the two agree once the cavity has settled
    late = tr.times > 10 / sp.kappa
    assert np.max(np.abs(tr.signal[late] - mb.signal[late])) < 0.02 * np.max(mb.signal)


def test_lindblad_path():
    sp = SystemParams.resonant(g=0.0, kappa=1.0, gamma2=0.0, omega=0.0)
    spec = HilbertSpec(fock_dim=12, n_spins=1)
    proto = DriveProtocol.constant(6.0, 0.5, max_duration=math.inf)
    tr = run_transient("lindblad", (sp, spec), proto, 20.0)
    # empty driven cavity: <a>(t) = E/kappa (1 - exp(-kappa t))
    assert np.allclose(tr.signal, 0.5 * (1 - np.exp(-tr.times)), atol=1e-6)


def test_reflection_observable():
    sp = SystemParams.resonant(g=TWO_PI * 4.2e6, kappa=TWO_PI * 460e3, gamma2=TWO_PI * 670e3,
                               kappa_e=TWO_PI * 230e3)
    tr = run_transient("mbe1", sp.replace(g_eff=0.0), DriveProtocol.constant(30e-6, 1e5), 2e7,
                       observable="reflection")
    # an empty critically coupled cavity reflects nothing in steady state
    assert tr["reflection"][-1] == pytest.approx(0.0, abs=1e-6)
    assert tr["reflection"][0] == pytest.approx(1.0)


def test_reflection_needs_cavity():
    with pytest.raises(ParameterError, match="cavity model"):
        run_transient("rdbe", PLATEAU_RDBE, DriveProtocol.constant(1e-5, PLATEAU_RDBE.omega1), 4e6,
                      observable="reflection")


# --- presaturation ----------------------------------------------------------

SAT_BASE = SystemParams.resonant(g=TWO_PI * 10.067e6, kappa=TWO_PI * 460e3, gamma2=1 / 0.4e-6)


def presat(n):
    return Presaturation(n=n, tp=800e-9, td=2e-6, omega1=TWO_PI * 10.3e3)


def test_presaturation_zero_pulses_is_identity():
    assert apply_presaturation(SAT_BASE, presat(0)) is SAT_BASE
    assert apply_presaturation(SAT_BASE, None) is SAT_BASE


def test_presaturation_500_pulses():
    out = apply_presaturation(SAT_BASE, presat(500))
    assert out.g_eff / TWO_PI / 1e6 == pytest.approx(7.20, abs=0.05)
    assert out.metadata["g_eff_unsaturated"] == SAT_BASE.g_eff
    assert out.metadata["presaturation_n"] == 500


def test_presaturation_delay_too_short():
    short = dataclasses.replace(presat(10), td=1.9e-6)
    with pytest.raises(ParameterError, match="5\\*T2"):
        apply_presaturation(SAT_BASE, short)


def test_presaturation_large_angle():
    big = dataclasses.replace(presat(3), tp=30e-6)
    with pytest.raises(RegimeError):
        apply_presaturation(SAT_BASE, big)


@given(st.integers(0, 400), st.integers(0, 400))
def test_presaturation_two_stage(n1, n2):
    one = apply_presaturation(SAT_BASE, presat(n1 + n2))
    two = apply_presaturation(apply_presaturation(SAT_BASE, presat(n1)), presat(n2))
    assert two.g_eff == pytest.approx(one.g_eff, rel=1e-12)


def test_presaturation_cycles_follow_cosine_law():
    # pulses much shorter than T2 with full dephasing in between: each pulse
    # keeps cos(omega1 tp) of Mz (same flip angle as the 800 ns pulses)
    p = Presaturation(n=20, tp=8e-9, td=2e-6, omega1=TWO_PI * 1.03e6)
    frac = presaturation_cycles(p, t2=0.4e-6)
    law = math.cos(p.omega1 * p.tp) ** np.arange(21)
    assert np.allclose(frac, law, rtol=0, atol=2e-4)
    cyc = apply_presaturation(SAT_BASE, p, mode="cycles")
    par = apply_presaturation(SAT_BASE, p)
    assert cyc.g_eff == pytest.approx(par.g_eff, rel=1e-4)


def test_presaturation_cycles_long_pulses_saturate_less():
    # dephasing during an 800 ns pulse (2 T2) blunts the rotation
    cyc = apply_presaturation(SAT_BASE, presat(50), mode="cycles")
    par = apply_presaturation(SAT_BASE, presat(50))
    assert par.g_eff < cyc.g_eff < SAT_BASE.g_eff


# --- sweeps -----------------------------------------------------------------

def drive_job(duration=2e-3):
    return JobSpec("rdbe", PLATEAU_RDBE, DriveProtocol.constant(duration, PLATEAU_RDBE.omega1), 4e6)


def test_singleton_sweep_matches_run_transient():
    job = drive_job(2e-4)
    ts = sweep("drive_amp", [PLATEAU_RDBE.omega1], job)
    ref = run_transient("rdbe", PLATEAU_RDBE, job.protocol, job.sample_rate)
    assert len(ts) == 1 and ts.errors == (None,)
    assert ts.traces[0].digest() == ref.digest()


def test_sweep_order_and_parallel_determinism():
    job = drive_job(2e-4)
    vals = [TWO_PI * 25e3, TWO_PI * 10e3, TWO_PI * 17.5e3]
    serial = sweep("drive_amp", vals, job)
    parallel = sweep("drive_amp", vals, job, n_jobs=2)
    rev = sweep("drive_amp", vals[::-1], job)
    assert serial.values == tuple(vals)
    assert [t.digest() for t in serial.traces] == [t.digest() for t in parallel.traces]
    assert [t.digest() for t in serial.traces] == [t.digest() for t in rev.traces][::-1]


def test_sweep_records_failures_and_continues():
    sp = SystemParams.resonant(g=TWO_PI * 1e6, kappa=TWO_PI * 10e6, gamma2=1e6)
    job = JobSpec("mbe1", sp, DriveProtocol.constant(1e-6, 1e6), 2e8)
    ts = sweep("g_eff", [TWO_PI * 1e6, -1.0, TWO_PI * 2e6], job)
    assert ts.traces[0] is not None and ts.traces[2] is not None
    assert ts.traces[1] is None and "ParameterError" in ts.errors[1]


def test_sweep_rejects_empty_and_unknown_axis():
    with pytest.raises(ParameterError, match="at least one"):
        sweep("drive_amp", [], drive_job())
    with pytest.raises(ParameterError, match="unknown sweep axis"):
        sweep("pressure", [1.0], drive_job())


def test_drive_sweep_plateau_decreases():
    d = drive_sweep_durations()
    assert all(a > b for a, b in zip(d, d[1:])), d


def test_n_presat_sweep():
    job = JobSpec("mbe1", SAT_BASE, DriveProtocol(
        [dict(duration=2e-6, amplitude=TWO_PI * 1e6)], presaturation=presat(0)), 2e8)
    ts = sweep("n_presat", [10, 100, 200, 500], job)
    got = [t.metadata["g_eff"] / TWO_PI / 1e6 for t in ts.traces]
    assert got == pytest.approx([10.00, 9.41, 8.80, 7.20], abs=0.05)


def test_temperature_sweep_ordering():
    f0 = 9.512e9
    base = SystemParams(omega_c=TWO_PI * f0, omega_s=TWO_PI * f0, omega_r=TWO_PI * f0,
                        g0=TWO_PI * 0.3, n_spins=1e15, kappa_i=TWO_PI * 225e3,
                        kappa_e=TWO_PI * 169e3, gamma_2=1 / 1.5e-6)
    temps = [4.13, 1.5, 0.45]
    ps = [params_at_temperature(base, T) for T in temps]
    pol = [1 - 2 * p.polarization for p in ps]
    g = [p.g_eff for p in ps]
    tau_r = [p.kappa / p.g_eff ** 2 for p in ps]
    assert pol[0] < pol[1] < pol[2]
    assert g[0] < g[1] < g[2]
    assert tau_r[0] > tau_r[1] > tau_r[2]
    assert g[2] == pytest.approx(collective_coupling(base.g0, base.n_spins, pol[2]))


def test_temperature_q_table():
    f0 = 9.512e9
    base = SystemParams(omega_c=TWO_PI * f0, omega_s=TWO_PI * f0, omega_r=TWO_PI * f0,
                        g0=1.0, n_spins=1e12, kappa_i=TWO_PI * 300e3, kappa_e=TWO_PI * 100e3)
    out = params_at_temperature(base, 2.0, q_table=[(0.45, 30000), (4.13, 20000)])
    q = np.interp(2.0, [0.45, 4.13], [30000, 20000])
    assert out.kappa == pytest.approx(TWO_PI * f0 / q)
    assert out.kappa_e / out.kappa == pytest.approx(0.25)


def test_temperature_sweep_needs_spin_frequency():
    sp = SystemParams.resonant(g=1.0, kappa=1.0, gamma2=1.0)
    ts = sweep("temperature", [1.0], JobSpec("mbe1", sp, DriveProtocol.constant(0.05, 0.1), 1e4))
    assert ts.traces[0] is None and "omega_s" in ts.errors[0]


def test_geff_sweep_plateau_increases():
    d = geff_sweep_durations()
    assert all(a < b for a, b in zip(d, d[1:])), d


def test_run_job_metadata():
    tr = run_job(JobSpec("mbe1", SAT_BASE, DriveProtocol(
        [dict(duration=1e-6, amplitude=1e6)], presaturation=presat(10)), 2e8))
    assert tr.metadata["g_eff"] < SAT_BASE.g_eff
    assert tr.metadata["kappa"] == SAT_BASE.kappa
    assert isinstance(tr, Trace)
