"""Parameter model and closed-form relations for a spin ensemble in a cavity.

All frequencies and rates are angular (rad/s) internally. Helpers that take
ordinary frequencies say so in their argument names (``f0`` in Hz).
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field

from .constants import BOLTZMANN_K, PLANCK_H


class ParameterError(ValueError):
    """A physical parameter is outside its admissible range."""


class RegimeError(ParameterError):
    """A small-angle or other regime assumption is violated."""


def _check_nonneg(name, value):
    if not math.isfinite(value) or value < 0:
        raise ParameterError(f"{name} must be finite and >= 0, got {value!r}")


def _check_pos(name, value):
    if not (value > 0) or math.isnan(value):
        raise ParameterError(f"{name} must be > 0, got {value!r}")


# ---------------------------------------------------------------------------
# thermal populations and couplings
# ---------------------------------------------------------------------------

def polarization(f0, temperature):
    """Excited-state population ``(exp(h f0 / k T) + 1)**-1`` of a two-level spin.

    Parameters
    ----------
    f0 : float
        Spin transition frequency in Hz.
    temperature : float
        Bath temperature in kelvin. ``0`` gives exactly 0.

    Returns
    -------
    float
        Population in ``[0, 1/2]``; the thermal spin population difference
        is ``1 - 2 * p``.
    """
    _check_pos("f0", f0)
    _check_nonneg("temperature", temperature)
    if temperature == 0:
        return 0.0
    x = PLANCK_H * f0 / (BOLTZMANN_K * temperature)
    # exp overflows near x ~ 710
    if x > 700:
        return 0.0
    return 1.0 / (math.exp(x) + 1.0)


def population_difference(f0, temperature):
    """Thermal population difference ``1 - 2 p`` (``tanh(h f0 / 2 k T)``)."""
    _check_pos("f0", f0)
    _check_nonneg("temperature", temperature)
    if temperature == 0:
        return 1.0
    return math.tanh(PLANCK_H * f0 / (2.0 * BOLTZMANN_K * temperature))


def collective_coupling(g0, n_spins, p=1.0):
    """Collective coupling ``g0 * sqrt(p * n_spins)``.

    ``p`` defaults to 1, i.e. ``g0 * sqrt(N)`` with no polarization factor.
    Values of ``p`` up to 1 are accepted so a population difference can be
    passed directly.
    """
    _check_nonneg("g0", g0)
    _check_nonneg("n_spins", n_spins)
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"polarization p must lie in [0, 1], got {p!r}")
    return g0 * math.sqrt(p * n_spins)


class Regime(str, enum.Enum):
    WEAK = "WeakNoBackAction"
    RADIATION_DAMPING = "RadiationDamping"
    CORRELATED = "Correlated"


@dataclass(frozen=True)
class CooperativityReport:
    c_value: float
    regime: Regime
    lower: float = 0.1
    upper: float = 10.0

    def __str__(self):
        return f"C = {self.c_value:.6g} ({self.regime.value}; thresholds {self.lower:g}, {self.upper:g})"


def cooperativity(g, kappa, gamma2, lower=0.1, upper=10.0):
    """Cooperativity ``g**2 / (kappa * gamma2)`` and the regime it falls in."""
    _check_pos("kappa", kappa)
    _check_pos("gamma2", gamma2)
    _check_nonneg("g", g)
    if not 0 <= lower <= upper:
        raise ParameterError("need 0 <= lower <= upper thresholds")
    c = g * g / (kappa * gamma2)
    if c < lower:
        regime = Regime.WEAK
    elif c > upper:
        regime = Regime.CORRELATED
    else:
        regime = Regime.RADIATION_DAMPING
    return CooperativityReport(c, regime, lower, upper)


# ---------------------------------------------------------------------------
# rate conversions
# ---------------------------------------------------------------------------

def kappa_from_q(omega0, q):
    """Cavity loss rate ``omega0 / Q``."""
    _check_pos("q", q)
    _check_nonneg("omega0", omega0)
    return omega0 / q


def q_from_kappa(omega0, kappa):
    """Quality factor ``omega0 / kappa``."""
    _check_pos("kappa", kappa)
    return omega0 / kappa


def gamma_rates(t1, t2):
    """Spin rates ``(1/T1, (2 T1 - T2) / (2 T1 T2))`` from relaxation times.

    Raises
    ------
    ParameterError
        If ``t2 > 2 * t1``, which would make the dephasing rate negative.
    """
    _check_pos("t1", t1)
    _check_pos("t2", t2)
    if t2 > 2.0 * t1:
        raise ParameterError(f"unphysical relaxation times: T2={t2!r} > 2*T1={2 * t1!r}")
    gamma1 = 1.0 / t1
    if math.isinf(t1):
        return 0.0, 1.0 / t2
    return gamma1, (2.0 * t1 - t2) / (2.0 * t1 * t2)


def adiabatic_map(g, kappa, drive_amp=0.0):
    """Radiation-damping time and Rabi frequency of the bad-cavity limit.

    Returns ``(tau_r, omega1) = (kappa / g**2, 2 g |E| / kappa)``.
    """
    _check_pos("g", g)
    _check_pos("kappa", kappa)
    return kappa / (g * g), 2.0 * g * abs(drive_amp) / kappa


def dressed_cavity(omega, kappa, g, delta_s, gamma2):
    """Cavity frequency and linewidth renormalized by a spin ensemble."""
    denom = delta_s * delta_s + gamma2 * gamma2
    if not denom > 0:
        raise ParameterError("delta_s**2 + gamma2**2 must be > 0")
    g2 = g * g
    return omega - g2 * delta_s / denom, kappa + g2 * gamma2 / denom


def saturation_geff(g_eff0, n, omega1, tp):
    """Collective coupling left after ``n`` small-angle saturation pulses.

    Each pulse of length ``tp`` at Rabi frequency ``omega1`` leaves a
    fraction ``cos(omega1 tp)`` of the longitudinal magnetization, so the
    coupling scales as ``cos(omega1 tp) ** (n / 2)``.
    """
    if n < 0:
        raise ParameterError(f"pulse count must be >= 0, got {n!r}")
    _check_nonneg("g_eff0", g_eff0)
    if n == 0:
        return g_eff0
    angle = abs(omega1 * tp)
    if not angle < 0.5 * math.pi:
        raise RegimeError(
            f"flip angle omega1*tp = {omega1 * tp:.6g} rad is not below pi/2; "
            "the saturation law needs small-angle pulses"
        )
    return g_eff0 * math.exp(0.5 * n * math.log(math.cos(angle)))


# ---------------------------------------------------------------------------
# parameter container
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SystemParams:
    """Physical constants of one spin-cavity configuration (rad/s, s, K).

    ``g_eff`` is derived from ``g0``, ``n_spins`` and ``polarization`` when
    not given explicitly. Detunings and the total loss rate are properties.
    """

    omega_c: float = 0.0
    omega_s: float = 0.0
    omega_r: float = 0.0
    g_eff: float | None = None
    g0: float = 0.0
    n_spins: float = 0.0
    polarization: float = 0.0
    kappa_i: float = 0.0
    kappa_e: float = 0.0
    gamma_1: float = 0.0
    gamma_2: float = 0.0
    drive_amp: float = 0.0
    drive_phase: float = 0.0
    temperature: float | None = None
    metadata: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        for name in ("omega_c", "omega_s", "omega_r", "g0", "n_spins",
                     "kappa_i", "kappa_e", "gamma_1", "gamma_2", "drive_amp"):
            _check_nonneg(name, getattr(self, name))
        if not 0.0 <= self.polarization <= 0.5:
            raise ParameterError(f"polarization must lie in [0, 1/2], got {self.polarization!r}")
        if self.temperature is not None:
            _check_nonneg("temperature", self.temperature)
        if self.g_eff is None:
            g = collective_coupling(self.g0, self.n_spins, self.polarization) if self.n_spins else 0.0
            object.__setattr__(self, "g_eff", g)
        else:
            _check_nonneg("g_eff", self.g_eff)

    @classmethod
    def resonant(cls, g, kappa, gamma2, gamma1=0.0, drive_amp=0.0, kappa_e=0.0,
                 omega=0.0, **kw):
        """Resonant configuration (zero detunings) from a total loss rate."""
        if kappa_e > kappa:
            raise ParameterError("kappa_e cannot exceed the total kappa")
        return cls(omega_c=omega, omega_s=omega, omega_r=omega, g_eff=g,
                   kappa_i=kappa - kappa_e, kappa_e=kappa_e, gamma_1=gamma1,
                   gamma_2=gamma2, drive_amp=drive_amp, **kw)

    @classmethod
    def from_times(cls, t1, t2, **kw):
        """Build with ``gamma_1, gamma_2`` derived from ``(T1, T2)``."""
        g1, g2 = gamma_rates(t1, t2)
        return cls(gamma_1=g1, gamma_2=g2, **kw)

    @property
    def delta_c(self):
        return self.omega_c - self.omega_r

    @property
    def delta_s(self):
        return self.omega_s - self.omega_r

    @property
    def kappa(self):
        return self.kappa_i + self.kappa_e

    @property
    def t1(self):
        return math.inf if self.gamma_1 == 0 else 1.0 / self.gamma_1

    @property
    def t2(self):
        # inverse of gamma_rates: 1/T2 = gamma_2 + gamma_1 / 2
        r = self.gamma_2 + 0.5 * self.gamma_1
        return math.inf if r == 0 else 1.0 / r

    @property
    def g(self):
        return self.g_eff

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def cooperativity(self, lower=0.1, upper=10.0):
        return cooperativity(self.g_eff, self.kappa, self.gamma_2, lower, upper)

    def as_dict(self):
        d = dataclasses.asdict(self)
        d.pop("metadata")
        return d
