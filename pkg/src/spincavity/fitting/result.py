"""Fit result container."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass
class FitResult:
    """Estimates and diagnostics of one least-squares fit.

    ``half_widths`` are normal-approximation 95% half-widths from the
    Jacobian at the optimum. ``derived`` holds quantities computed from the
    estimates (for example ``Q`` of a resonance fit).
    """

    names: tuple
    values: np.ndarray
    units: tuple
    rss: float
    half_widths: np.ndarray
    converged: bool
    n_iter: int
    nfev: int = 0
    message: str = ""
    fixed: dict = field(default_factory=dict)
    derived: dict = field(default_factory=dict)
    start_costs: tuple = ()

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.half_widths = np.asarray(self.half_widths, dtype=float)
        if self.rss < 0:
            raise ValueError("residual sum of squares must be >= 0")

    def __getitem__(self, name):
        if name in self.derived:
            return self.derived[name]
        if name in self.fixed:
            return self.fixed[name]
        return float(self.values[self.names.index(name)])

    @property
    def params(self):
        return dict(zip(self.names, map(float, self.values)))

    def as_dict(self):
        """Plain dictionary with a fixed key order."""
        return {
            "converged": bool(self.converged),
            "message": self.message,
            "n_iter": int(self.n_iter),
            "nfev": int(self.nfev),
            "rss": float(self.rss),
            "parameters": [
                {"name": n, "value": float(v), "half_width": float(h), "unit": u}
                for n, v, h, u in zip(self.names, self.values, self.half_widths, self.units)
            ],
            "fixed": {k: float(v) for k, v in self.fixed.items()},
            "derived": {k: float(v) for k, v in self.derived.items()},
            "start_costs": [float(c) for c in self.start_costs],
        }

    def to_json(self):
        return json.dumps(self.as_dict(), indent=2, allow_nan=True) + "\n"
