"""Analytic references and shared scenarios for the test suite."""

import functools
import math

import numpy as np

from spincavity.model import SystemParams
from spincavity.quantum import DensityMatrix, HilbertSpec, evolve
from spincavity.protocol import DriveProtocol
from spincavity.semiclassical import (
    RdbeParams,
    backaction_rhs,
    bloch_sign_map,
    rdbe_from_meanfield,
    rdbe_rhs,
    simulate,
)

TWO_PI = 2 * math.pi


def burst_error(theta0=0.01, tau_r=1.0, n_tau=10.0, n_samples=2001, rtol=1e-10):
    """Sup error of the free radiation-damping burst against ``tanh``.

    Starting at ``M = (sin th, 0, -cos th)`` with no drive or relaxation,
    ``Mz(t) = tanh((t - t0) / tau_r)`` with ``t0 = tau_r artanh(cos th)``.
    """
    p = RdbeParams(tau_r=tau_r)
    T = n_tau * tau_r
    ts = np.linspace(0.0, T, n_samples)
    tr = simulate("rdbe", DriveProtocol.constant(T, 0.0, max_duration=math.inf), p,
                  initial=[math.sin(theta0), 0.0, -math.cos(theta0)], sample_times=ts,
                  rtol=rtol, atol=rtol * 1e-2)
    t0 = tau_r * math.atanh(math.cos(theta0))
    mz = np.tanh((ts - t0) / tau_r)
    transverse = 1.0 / np.cosh((ts - t0) / tau_r)
    err_z = np.max(np.abs(tr["mz"] - mz))
    err_t = np.max(np.abs(np.hypot(tr["mx"], tr["my"]) - transverse))
    return err_z, err_t


def adiabatic_gap(ratio, kappa=1.0, n_tau=20.0, n_samples=4001):
    """Sup-norm gap between MBE1 and RDBE spin trajectories after ``10/kappa``.

    ``g = ratio * kappa``, ``gamma_2 = g**2 / kappa`` (cooperativity 1) and the
    Rabi frequency is ``1 / (2 tau_r)``.
    """
    g = ratio * kappa
    tau_r = kappa / g ** 2
    gamma2 = 1.0 / tau_r
    omega1 = 0.5 / tau_r
    eps = omega1 * kappa / (2 * g)
    sp = SystemParams.resonant(g, kappa, gamma2)
    T = n_tau * tau_r
    ts = np.linspace(0.0, T, n_samples)
    a = simulate("mbe1", DriveProtocol.constant(T, eps, max_duration=math.inf), sp, sample_times=ts)
    rp = rdbe_from_meanfield(sp.replace(drive_amp=eps))
    b = simulate("rdbe", DriveProtocol.constant(T, rp.omega1, max_duration=math.inf), rp,
                 sample_times=ts)
    m = bloch_sign_map(np.c_[a["jx"], a["jy"], a["jz"]])
    ref = np.c_[b["mx"], b["my"], b["mz"]]
    sel = ts >= 10.0 / kappa
    return float(np.max(np.abs(m[sel] - ref[sel])))


def norm_drift(tau_r=400e-9, omega1=TWO_PI * 17.5e3, n_tau=100.0, rtol=1e-12):
    """Largest change of ``|M|`` along an undamped RDBE trajectory."""
    p = RdbeParams(tau_r=tau_r, omega1=omega1)
    T = n_tau * tau_r
    tr = simulate("rdbe", DriveProtocol.constant(T, omega1, max_duration=math.inf), p,
                  initial=[0.3, 0.1, math.sqrt(1 - 0.1)], n_samples=2001, rtol=rtol, atol=rtol * 1e-2)
    norm = np.sqrt(tr["mx"] ** 2 + tr["my"] ** 2 + tr["mz"] ** 2)
    return float(np.max(np.abs(norm - norm[0])))


# quoted resonator parameters (rad/s)
S21_TRUTH = {"omega0": TWO_PI * 9.512e9, "kappa_i": TWO_PI * 225e3, "kappa_e": TWO_PI * 169e3}
RDBE_TRUTH = {"tau_r": 400e-9, "omega1": TWO_PI * 17.5e3, "t2": 1.5e-6, "scale": 1.0, "offset": 0.0}


def s21_scan(noise=0.01, seed=0, n=401, span_linewidths=10.0, phase=True):
    """Synthetic transmission scan with additive Gaussian noise relative to the peak."""
    from spincavity.fitting import s21_model

    fwhm = (S21_TRUTH["kappa_i"] + S21_TRUTH["kappa_e"]) / TWO_PI
    f0 = S21_TRUTH["omega0"] / TWO_PI
    f = np.linspace(f0 - 0.5 * span_linewidths * fwhm, f0 + 0.5 * span_linewidths * fwhm, n)
    s = s21_model(S21_TRUTH["omega0"], S21_TRUTH["kappa_i"], S21_TRUTH["kappa_e"], f)
    rng = np.random.default_rng(seed)
    peak = np.max(np.abs(s))
    s = s + noise * peak * (rng.normal(size=n) + 1j * rng.normal(size=n)) / math.sqrt(2)
    return f, (s if phase else np.abs(s))


def rdbe_trace(noise=0.01, seed=0, n=8001, duration=400e-6):
    """Noisy synthetic reduced-drive trace for tau_r = 400 ns, omega1/2pi = 17.5 kHz, T2 = 1.5 us."""
    from spincavity.fitting import forward

    t = np.linspace(0.0, duration, n)
    y = forward("rdbe", dict(RDBE_TRUTH, t1=math.inf, m_eq=1.0), t)
    rng = np.random.default_rng(seed)
    return t, y + noise * np.max(y) * rng.normal(size=n)


@functools.lru_cache(maxsize=None)
def transient_round_trip(seed=0, n_starts=8):
    """Relative errors of (tau_r, omega1) after fitting a 1%-noise trace.

    The guess is off by +30% / -25% / +25% / -20% on (tau_r, omega1, t2,
    scale); the offset is held at 0 and the initial coherent window is fitted.
    """
    from spincavity.fitting import TransientFitter

    t, y = rdbe_trace(seed=seed)
    factors = {"tau_r": 1.3, "omega1": 0.75, "t2": 1.25, "scale": 0.8}
    guess = {k: RDBE_TRUTH[k] * f for k, f in factors.items()}
    est = TransientFitter("rdbe", guess=guess, fixed={"offset": 0.0}, include_initial=True,
                          n_starts=n_starts, random_state=seed).fit(t, y)
    r = est.result_
    return {k: abs(r[k] / RDBE_TRUTH[k] - 1) for k in ("tau_r", "omega1")}, r


def _const(duration, amplitude=0.0):
    return DriveProtocol.constant(duration, amplitude, max_duration=math.inf)


def vector_field_gap(n_states=1000, seed=2024):
    """Largest pointwise gap between the mapped back-action and RDBE vector fields.

    Rates are in units of ``kappa`` (the time scaling the integrator uses):
    ``kappa = 1``, ``g`` in ``[0.05, 1]``, drive and relaxation rates in
    ``[0, 1]``. States are uniform in the unit Bloch ball and each gets its
    own parameter set, so the absolute bound probes rounding at O(1) scale.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_states):
        v = rng.normal(size=3)
        s = v / np.linalg.norm(v) * rng.uniform() ** (1 / 3)
        g = rng.uniform(0.05, 1.0)
        eps, g1, g2 = rng.uniform(0.0, 1.0, 3)
        sp = SystemParams.resonant(g=g, kappa=1.0, gamma2=g2, gamma1=g1, drive_amp=eps)
        lhs = bloch_sign_map(backaction_rhs(s, sp))
        rhs = rdbe_rhs(bloch_sign_map(s), rdbe_from_meanfield(sp))
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


def jc_revival_error(g0=1.7):
    spec = HilbertSpec(fock_dim=3, n_spins=1)
    sp = SystemParams(g0=g0)
    ts = np.linspace(0, 2 * math.pi / g0, 201)
    tr = evolve(DensityMatrix.product(spec, 0, [1]), spec, sp, _const(ts[-1]), ts)
    pe = 0.5 * (1 + tr["jz"])
    return np.max(np.abs(pe - np.cos(g0 * ts / 2) ** 2)), abs(pe[-1] - 1.0)


def driven_cavity_error(eps=0.3, k=0.5, dc=0.4):
    spec = HilbertSpec(fock_dim=8, n_spins=1)
    sp = SystemParams(omega_c=1.0 + dc, omega_r=1.0, omega_s=1.0, kappa_i=k)
    T = 60.0 / k
    tr = evolve(None, spec, sp, _const(T, eps), [T])
    a = tr["a_re"][-1] + 1j * tr["a_im"][-1]
    return abs(a - eps / (k + 1j * dc))


def closed_tc_run():
    spec = HilbertSpec(fock_dim=4, n_spins=2)
    sp = SystemParams(omega_c=1.2, omega_r=1.0, omega_s=1.0, g0=0.9)
    rho0 = 0.5 * DensityMatrix.product(spec, 1, [1, 0]).data + 0.5 * DensityMatrix.product(spec, 0, [1, 1]).data
    ts = np.linspace(0, 20, 101)
    return evolve(rho0, spec, sp, _const(20.0), ts, per_spin_detunings=[0.3, -0.2])


def dicke_vs_tc_gap():
    g0, k, eps = 0.8, 0.3, 0.15
    ts = np.linspace(0, 15, 61)
    nf = 9
    tc_spec = HilbertSpec(fock_dim=nf, n_spins=2)
    sym = np.zeros(4)
    sym[[1, 2]] = 1 / math.sqrt(2)
    psi = np.kron(np.eye(nf)[0], sym)
    tc = evolve(DensityMatrix.from_state(psi, tc_spec), tc_spec,
                SystemParams(g0=g0, kappa_i=k), _const(15.0, eps), ts)
    d_spec = HilbertSpec(fock_dim=nf, collective_j=1.0)
    psi_d = np.kron(np.eye(nf)[0], [0.0, 1.0, 0.0])  # m = 0
    dk = evolve(DensityMatrix.from_state(psi_d, d_spec), d_spec,
                SystemParams(g_eff=g0 * math.sqrt(2) / 2, kappa_i=k), _const(15.0, eps), ts,
                hamiltonian="dicke")
    cols = ["a_re", "a_im", "n_photon", "jx", "jy", "jz", "excitations"]
    return max(np.max(np.abs(tc[c] - dk[c])) for c in cols)


def meanfield_gap(gamma1, gamma2, kappa=0.4, eps=0.25, theta=1.1):
    spec = HilbertSpec(fock_dim=10, n_spins=1)
    sp = SystemParams(g0=0.0, g_eff=0.0, kappa_i=kappa, gamma_1=gamma1, gamma_2=gamma2)
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    psi = np.kron(np.eye(10)[0], [c, s])
    ts = np.linspace(0, 12, 121)
    q = evolve(DensityMatrix.from_state(psi, spec), spec, sp, _const(12.0, eps), ts)
    m = simulate("mbe1", _const(12.0, eps), sp, initial=[0, 0, 2 * c * s, 0, s * s - c * c],
                 sample_times=ts, rtol=1e-12, atol=1e-14)
    pairs = [("a_re", "e"), ("a_im", "b"), ("jx", "jx"), ("jy", "jy"), ("jz", "jz")]
    return max(np.max(np.abs(q[a] - m[b])) for a, b in pairs)


PLATEAU_RDBE = RdbeParams(tau_r=400e-9, omega1=TWO_PI * 17.5e3, t1=1.0, t2=1.5e-6)


@functools.lru_cache(maxsize=None)
def drive_sweep_durations(rabi_hz=(10e3, 17.5e3, 25e3, 35e3), duration=5e-3):
    """Plateau durations of the long-T1 RDBE run at increasing Rabi frequency."""
    from spincavity.experiments import JobSpec, plateau_metrics, sweep

    job = JobSpec("rdbe", PLATEAU_RDBE, DriveProtocol.constant(duration, PLATEAU_RDBE.omega1), 4e6)
    ts = sweep("drive_amp", [TWO_PI * f for f in rabi_hz], job)
    return tuple(plateau_metrics(t).plateau_duration for t in ts.traces)


@functools.lru_cache(maxsize=None)
def geff_sweep_durations(tau_r_values=(1.6e-6, 1.1e-6, 0.4e-6), duration=2e-3):
    """Plateau durations as ``g_eff`` grows so that ``tau_r`` steps through ``tau_r_values``.

    The cavity loss rate is fixed and the drive is rescaled so the Rabi
    frequency stays at 17.5 kHz.
    """
    from spincavity.experiments import JobSpec, plateau_metrics, sweep

    kappa = TWO_PI * 10e6
    gs = [math.sqrt(kappa / tr) for tr in tau_r_values]
    sp = SystemParams.resonant(g=gs[0], kappa=kappa, gamma2=1 / 1.5e-6, gamma1=1.0)
    amp = TWO_PI * 17.5e3 * kappa / (2 * gs[0])
    ts = sweep("g_eff", gs, JobSpec("rdbe", sp, DriveProtocol.constant(duration, amp), 4e6))
    return tuple(plateau_metrics(t).plateau_duration for t in ts.traces)
