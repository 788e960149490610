"""Piecewise-constant drive schedules."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

from .model import ParameterError

DEFAULT_MAX_DURATION = 0.1  # s


@dataclass(frozen=True)
class Segment:
    """Constant drive held for ``duration`` seconds.

    ``amplitude`` is in rad/s in the units the model is driven with: the
    cavity drive ``|E|`` for cavity models, the Rabi frequency ``omega1`` for
    the radiation-damping Bloch equations.
    """

    duration: float
    amplitude: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if not (self.duration > 0 and math.isfinite(self.duration)):
            raise ParameterError(f"segment duration must be finite and > 0, got {self.duration!r}")
        if not (self.amplitude >= 0 and math.isfinite(self.amplitude)):
            raise ParameterError(f"segment amplitude must be finite and >= 0, got {self.amplitude!r}")


@dataclass(frozen=True)
class Presaturation:
    """``n`` repetitions of a pulse (``tp``, Rabi frequency ``omega1``) and a delay ``td``."""

    n: int
    tp: float
    td: float
    omega1: float

    def __post_init__(self):
        if self.n < 0 or int(self.n) != self.n:
            raise ParameterError(f"presaturation count must be a nonnegative integer, got {self.n!r}")
        if self.tp < 0 or self.td < 0 or self.omega1 < 0:
            raise ParameterError("presaturation tp, td, omega1 must be >= 0")


@dataclass(frozen=True)
class DriveProtocol:
    segments: tuple[Segment, ...]
    presaturation: Presaturation | None = None
    max_duration: float = field(default=DEFAULT_MAX_DURATION, compare=False)

    def __post_init__(self):
        segs = tuple(s if isinstance(s, Segment) else Segment(**s) for s in self.segments)
        if not segs:
            raise ParameterError("a drive protocol needs at least one segment")
        object.__setattr__(self, "segments", segs)
        if self.total_duration > self.max_duration:
            raise ParameterError(
                f"protocol lasts {self.total_duration:g} s, above the limit of {self.max_duration:g} s")

    @classmethod
    def constant(cls, duration, amplitude, phase=0.0, **kw):
        return cls((Segment(duration, amplitude, phase),), **kw)

    @property
    def total_duration(self):
        return math.fsum(s.duration for s in self.segments)

    @property
    def boundaries(self):
        """Segment start/end times, starting at 0."""
        out = [0.0]
        for s in self.segments:
            out.append(out[-1] + s.duration)
        return out

    @property
    def max_amplitude(self):
        return max(s.amplitude for s in self.segments)

    def scaled(self, factor):
        """Copy with every amplitude multiplied by ``factor``."""
        segs = tuple(Segment(s.duration, s.amplitude * factor, s.phase) for s in self.segments)
        return DriveProtocol(segs, self.presaturation, self.max_duration)

    def with_amplitude(self, amplitude):
        segs = tuple(Segment(s.duration, amplitude, s.phase) for s in self.segments)
        return DriveProtocol(segs, self.presaturation, self.max_duration)

    def with_presaturation(self, presat):
        return DriveProtocol(self.segments, presat, self.max_duration)

    def as_dict(self):
        return {
            "segments": [asdict(s) for s in self.segments],
            "presaturation": None if self.presaturation is None else asdict(self.presaturation),
        }

    def digest(self):
        blob = json.dumps(self.as_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]
