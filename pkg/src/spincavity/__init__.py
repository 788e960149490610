"""Spin ensembles coupled to a lossy cavity: mean-field, radiation-damping and
Lindblad models, transient-spectroscopy experiments and fitting."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    CooperativityReport,
    ParameterError,
    Regime,
    RegimeError,
    SystemParams,
    adiabatic_map,
    collective_coupling,
    cooperativity,
    dressed_cavity,
    gamma_rates,
    kappa_from_q,
    polarization,
    q_from_kappa,
    saturation_geff,
)
from .protocol import DriveProtocol, Presaturation, Segment  # noqa: E402
from .semiclassical import Model, RdbeParams, simulate  # noqa: E402
from .trace import Trace, TraceSet  # noqa: E402

__all__ = [
    "CooperativityReport", "DriveProtocol", "Model", "ParameterError", "Presaturation", "RdbeParams",
    "Regime", "RegimeError", "Segment", "SystemParams", "Trace", "TraceSet", "adiabatic_map",
    "collective_coupling", "cooperativity", "dressed_cavity", "gamma_rates", "kappa_from_q",
    "polarization", "q_from_kappa", "saturation_geff", "simulate",
]
