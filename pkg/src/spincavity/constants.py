"""Physical constants (CODATA 2018, exact SI where defined)."""

import math

PLANCK_H = 6.62607015e-34  # J s
HBAR = PLANCK_H / (2.0 * math.pi)  # J s
BOLTZMANN_K = 1.380649e-23  # J / K
BOHR_MAGNETON = 9.2740100783e-24  # J / T
MU_0 = 1.25663706212e-6  # N / A^2

TWO_PI = 2.0 * math.pi


def hz_to_rad(f):
    """Ordinary frequency (Hz) to angular frequency (rad/s)."""
    return TWO_PI * f


def rad_to_hz(w):
    """Angular frequency (rad/s) to ordinary frequency (Hz)."""
    return w / TWO_PI
