"""Sampled time series of observables."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Trace:
    """Immutable sampled observables.

    Attributes
    ----------
    times : ndarray
        Sample times in seconds, strictly increasing.
    columns : dict[str, ndarray]
        Named observables, each the same length as ``times``. Column order is
        preserved on output.
    metadata : dict
        Free-form provenance (model, digests, metrics, warnings).
    """

    times: np.ndarray
    columns: dict
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        if t.ndim != 1:
            raise ValueError("times must be one-dimensional")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("trace times must be strictly increasing")
        t.setflags(write=False)
        cols = {}
        for name, col in self.columns.items():
            c = np.array(col, dtype=float)
            if c.shape != t.shape:
                raise ValueError(f"column {name!r} has shape {c.shape}, expected {t.shape}")
            c.setflags(write=False)
            cols[name] = c
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "columns", cols)

    def __getitem__(self, name):
        return self.columns[name]

    def __len__(self):
        return self.times.size

    @property
    def names(self):
        return list(self.columns)

    @property
    def signal(self):
        return self.columns["signal"]

    def with_column(self, name, values):
        cols = dict(self.columns)
        cols[name] = values
        return Trace(self.times, cols, dict(self.metadata))

    def with_metadata(self, **extra):
        md = dict(self.metadata)
        md.update(extra)
        return Trace(self.times, self.columns, md)

    def digest(self):
        """SHA-256 over times and columns (names and raw float64 bytes)."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.times).tobytes())
        for name, col in self.columns.items():
            h.update(name.encode())
            h.update(np.ascontiguousarray(col).tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class TraceSet:
    """Ordered sweep results; failed jobs hold ``None`` and an error message."""

    axis: str
    values: tuple
    traces: tuple
    errors: tuple

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(zip(self.values, self.traces, self.errors))

    @property
    def ok(self):
        return all(e is None for e in self.errors)
