"""Least-squares estimation for resonance scans and transient traces."""

from .lm import ConvergenceError, FitError, SingularJacobianError, levenberg_marquardt
from .result import FitResult
from .s21 import (ResonatorScan, S21Fitter, ScanSpanWarning, ScanTooNarrowError, fit_s21,
                  fwhm_hz, quality_factor, s21_model)
from .transient import TransientFitter, fit_transient, forward

__all__ = [
    "ConvergenceError", "FitError", "FitResult", "ResonatorScan", "S21Fitter", "ScanSpanWarning",
    "ScanTooNarrowError", "SingularJacobianError", "fit_s21", "fwhm_hz", "levenberg_marquardt",
    "quality_factor", "s21_model", "TransientFitter", "fit_transient", "forward",
]
