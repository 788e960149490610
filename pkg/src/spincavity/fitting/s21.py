"""Lorentzian resonance model and scan fitting."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..constants import TWO_PI
from ..model import ParameterError
from ._validation import check_axis, check_target
from .core import solve
from .lm import FitError

MIN_SCAN_POINTS = 16
MIN_SPAN_LINEWIDTHS = 3.0


class ScanTooNarrowError(FitError):
    pass


class ScanSpanWarning(UserWarning):
    pass


def s21_model(omega0, kappa_i, kappa_e, freqs, variant="transmission"):
    """Complex response of a single mode at frequencies ``freqs`` (Hz).

    ``transmission``: ``(kappa_e/2) / (i(w - omega0) + kappa/2)``;
    ``reflection``: ``1 - kappa_e / (i(w - omega0) + kappa/2)``, with
    ``kappa = kappa_i + kappa_e`` and all rates in rad/s.
    """
    if not (omega0 > 0 and kappa_i > 0 and kappa_e > 0):
        raise ParameterError("omega0, kappa_i and kappa_e must be > 0")
    w = TWO_PI * np.asarray(freqs, dtype=float)
    den = 1j * (w - omega0) + 0.5 * (kappa_i + kappa_e)
    if variant == "transmission":
        return 0.5 * kappa_e / den
    if variant == "reflection":
        return 1.0 - kappa_e / den
    raise ValueError(f"unknown variant {variant!r}")


@dataclass(frozen=True)
class ResonatorScan:
    """Frequency scan (Hz) with complex response or magnitude in dB."""

    frequencies: np.ndarray
    s21: np.ndarray | None = None
    s21_db: np.ndarray | None = None

    def __post_init__(self):
        f = check_axis(self.frequencies, "frequencies", MIN_SCAN_POINTS)
        object.__setattr__(self, "frequencies", f)
        if (self.s21 is None) == (self.s21_db is None):
            raise ValueError("give exactly one of s21 (complex) or s21_db")
        if self.s21 is not None:
            object.__setattr__(self, "s21", np.asarray(self.s21, dtype=complex).ravel())
            check_target(self.s21, f.size, "s21", allow_complex=True)
        else:
            object.__setattr__(self, "s21_db", check_target(self.s21_db, f.size, "s21_db"))

    @property
    def has_phase(self):
        return self.s21 is not None

    @property
    def magnitude(self):
        if self.s21 is not None:
            return np.abs(self.s21)
        return 10.0 ** (self.s21_db / 20.0)


def guess_resonance(freqs, mag, variant="transmission"):
    """Rough ``(omega0, kappa_i, kappa_e)`` from the peak (or dip) of ``|S|``."""
    freqs = np.asarray(freqs, dtype=float)
    mag = np.asarray(mag, dtype=float)
    if variant == "reflection":
        # depth of the dip in 1 - |S| behaves like a transmission peak
        base = np.median(np.concatenate((mag[:4], mag[-4:])))
        prof = np.clip(base - mag, 0, None)
    else:
        prof = mag
    p2 = prof ** 2
    i0 = int(np.argmax(p2))
    half = 0.5 * p2[i0]
    above = np.flatnonzero(p2 >= half)
    lo, hi = above[0], above[-1]
    fwhm = freqs[min(hi + 1, freqs.size - 1)] - freqs[max(lo - 1, 0)]
    fwhm = max(fwhm, 2 * np.min(np.diff(freqs)))
    # interpolate the half-power crossings when they are bracketed
    if 0 < lo and hi < freqs.size - 1:
        fl = np.interp(half, [p2[lo - 1], p2[lo]], [freqs[lo - 1], freqs[lo]])
        fh = np.interp(half, [p2[hi + 1], p2[hi]], [freqs[hi + 1], freqs[hi]])
        fwhm = max(fh - fl, np.min(np.diff(freqs)))
    kappa = TWO_PI * fwhm
    if variant == "reflection":
        depth = min(max(prof[i0], 1e-3), 1.999)
        kappa_e = 0.5 * depth * kappa
    else:
        kappa_e = min(max(mag[i0], 1e-3), 0.999) * kappa
    kappa_i = max(kappa - kappa_e, 1e-3 * kappa)
    return TWO_PI * freqs[i0], kappa_i, kappa_e


class S21Fitter(BaseEstimator):
    """Least-squares fit of :func:`s21_model` to a resonance scan.

    Parameters
    ----------
    guess : tuple of float, optional
        ``(omega0, kappa_i, kappa_e)`` in rad/s; estimated from the peak
        location and width when omitted.
    variant : {"transmission", "reflection"}
    use_phase : bool or None
        Fit complex residuals (``True``) or magnitudes (``False``); ``None``
        picks complex residuals whenever ``y`` is complex.
    n_starts, random_state : int
        Multi-start count and seed.

    Attributes
    ----------
    result_ : FitResult
    omega0_, kappa_i_, kappa_e_, q_ : float
    """

    def __init__(self, guess=None, variant="transmission", use_phase=None, n_starts=8,
                 random_state=0, max_iter=400, n_jobs=1):
        self.guess = guess
        self.variant = variant
        self.use_phase = use_phase
        self.n_starts = n_starts
        self.random_state = random_state
        self.max_iter = max_iter
        self.n_jobs = n_jobs

    def fit(self, X, y):
        """Fit frequencies ``X`` (Hz) against complex or magnitude data ``y``."""
        freqs = check_axis(X, "X", MIN_SCAN_POINTS)
        y = check_target(y, freqs.size, allow_complex=True)
        complex_fit = np.iscomplexobj(y) if self.use_phase is None else bool(self.use_phase)
        if complex_fit and not np.iscomplexobj(y):
            raise ValueError("use_phase=True needs complex data")
        mag = np.abs(y)

        guess = self.guess
        if guess is None:
            guess = guess_resonance(freqs, mag, self.variant)
        w0, ki, ke = map(float, guess)
        width = ki + ke
        span = TWO_PI * (freqs[-1] - freqs[0])
        if span < width:
            raise ScanTooNarrowError(
                f"scan spans {span / width:.2f} linewidths; at least 1 is needed")
        variant = self.variant

        # parameters: centre offset and rates, all in units of the width guess
        def residual(x):
            d, a, b = x
            m = s21_model(w0 + d * width, a * width, b * width, freqs, variant)
            if complex_fit:
                r = m - y
                return np.concatenate((r.real, r.imag))
            return np.abs(m) - mag

        tiny = 1e-9
        res = solve(
            residual, ("omega0", "kappa_i", "kappa_e"), ("rad/s",) * 3,
            guess=[0.0, ki / width, ke / width],
            lower=[-span / width, tiny, tiny], upper=[span / width, np.inf, np.inf],
            ref=[1.0, ki / width, ke / width],
            n_starts=self.n_starts, seed=self.random_state, n_jobs=self.n_jobs,
            max_iter=self.max_iter, rel_step=1e-8,
        )
        d, a, b = res.values
        hw = res.half_widths * width
        res.values = np.array([w0 + d * width, a * width, b * width])
        res.half_widths = hw
        self.omega0_, self.kappa_i_, self.kappa_e_ = map(float, res.values)
        kappa = self.kappa_i_ + self.kappa_e_
        self.q_ = self.omega0_ / kappa
        res.derived = {"Q": self.q_, "kappa": kappa}
        self.result_ = res
        n_lw = span / kappa
        if n_lw < MIN_SPAN_LINEWIDTHS:
            warnings.warn(f"scan spans only {n_lw:.2f} fitted linewidths; estimates may be biased",
                          ScanSpanWarning, stacklevel=2)
        return self

    def predict(self, X):
        """Complex model response at frequencies ``X`` (Hz)."""
        check_is_fitted(self, "result_")
        freqs = np.asarray(X, dtype=float).ravel()
        return s21_model(self.omega0_, self.kappa_i_, self.kappa_e_, freqs, self.variant)


def fit_s21(scan: ResonatorScan, guess=None, variant="transmission", **kw):
    """Fit a :class:`ResonatorScan`; returns a FitResult with ``Q`` in ``derived``."""
    y = scan.s21 if scan.has_phase else scan.magnitude
    est = S21Fitter(guess=guess, variant=variant, **kw).fit(scan.frequencies, y)
    return est.result_


def fwhm_hz(kappa_i, kappa_e):
    """Full width at half maximum of ``|S21|^2`` in ordinary frequency."""
    return (kappa_i + kappa_e) / TWO_PI


def quality_factor(omega0, kappa_i, kappa_e):
    return omega0 / (kappa_i + kappa_e)


__all__ = ["ResonatorScan", "S21Fitter", "ScanSpanWarning", "ScanTooNarrowError", "fit_s21",
           "fwhm_hz", "guess_resonance", "quality_factor", "s21_model"]
