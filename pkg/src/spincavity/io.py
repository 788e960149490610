"""File formats: trace and scan CSV, metadata sidecars and job configuration."""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .constants import TWO_PI
from .fitting import ResonatorScan
from .model import ParameterError, SystemParams, gamma_rates, kappa_from_q
from .protocol import DriveProtocol, Presaturation, Segment
from .semiclassical import DetuningError, RdbeParams
from .trace import Trace

SCHEMA_VERSION = 1
FLOAT_FORMAT = "%.17g"

# sweep value key and unit conversion per axis
_SWEEP_KEYS = {
    "drive_amp": ("values_hz", TWO_PI),
    "g_eff": ("values_hz", TWO_PI),
    "temperature": ("values_k", 1.0),
    "n_presat": ("values", 1),
}


class ConfigError(ParameterError):
    """Invalid job configuration; ``where`` locates the offending key or line."""

    def __init__(self, message, where=""):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


# ---------------------------------------------------------------------------
# atomic writes and JSON helpers
# ---------------------------------------------------------------------------

def atomic_write(path, data: str | bytes):
    """Write ``data`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": "\n"})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def jsonable(obj):
    """Convert numpy scalars, arrays, tuples and non-finite floats for JSON."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if hasattr(obj, "value") and hasattr(obj, "name"):  # enums
        return obj.value
    return obj


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), indent=2) + "\n"


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# trace CSV
# ---------------------------------------------------------------------------

def format_trace_csv(trace: Trace) -> str:
    """Header ``t_s,<columns>``; values with 17 significant digits."""
    names = trace.names
    data = np.column_stack([trace.times] + [trace[n] for n in names])
    buf = _io.StringIO()
    np.savetxt(buf, data, fmt=FLOAT_FORMAT, delimiter=",", header=",".join(["t_s", *names]),
               comments="", newline="\n")
    return buf.getvalue()


def write_trace_csv(trace: Trace, path) -> str:
    """Write ``trace`` to ``path``; returns the SHA-256 of the file text."""
    text = format_trace_csv(trace)
    atomic_write(path, text)
    return sha256_text(text)


def read_trace_csv(path) -> Trace:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "t_s":
        raise ValueError(f"{path}: first column must be t_s, got {header[:1]}")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ValueError(f"{path}: ragged rows or no data")
    cols = {name: data[:, i + 1] for i, name in enumerate(header[1:])}
    return Trace(data[:, 0], cols)


# ---------------------------------------------------------------------------
# scan CSV
# ---------------------------------------------------------------------------

def write_scan_csv(path, freqs_hz, s21=None, s21_db=None):
    freqs_hz = np.asarray(freqs_hz, dtype=float)
    if s21 is not None:
        s21 = np.asarray(s21, dtype=complex)
        data, header = np.column_stack((freqs_hz, s21.real, s21.imag)), "freq_hz,s21_re,s21_im"
    elif s21_db is not None:
        data, header = np.column_stack((freqs_hz, s21_db)), "freq_hz,s21_db"
    else:
        raise ValueError("give s21 or s21_db")
    buf = _io.StringIO()
    np.savetxt(buf, data, fmt=FLOAT_FORMAT, delimiter=",", header=header, comments="", newline="\n")
    atomic_write(path, buf.getvalue())


def read_scan_csv(path):
    """Return a :class:`~spincavity.fitting.ResonatorScan` from a scan CSV."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    if header == ["freq_hz", "s21_re", "s21_im"]:
        return ResonatorScan(data[:, 0], s21=data[:, 1] + 1j * data[:, 2])
    if header == ["freq_hz", "s21_db"]:
        return ResonatorScan(data[:, 0], s21_db=data[:, 1])
    raise ValueError(f"{path}: expected header freq_hz,s21_re,s21_im or freq_hz,s21_db, got {','.join(header)}")


# ---------------------------------------------------------------------------
# metadata sidecar
# ---------------------------------------------------------------------------

def metadata_document(kind, **content):
    """Sidecar dictionary with the schema version first."""
    return {"schema_version": SCHEMA_VERSION, "kind": kind, **content}


def write_metadata(path, kind, **content) -> str:
    text = dumps(metadata_document(kind, **content))
    atomic_write(path, text)
    return sha256_text(text)


# ---------------------------------------------------------------------------
# job configuration
# ---------------------------------------------------------------------------

def load_schema():
    return json.loads(resources.files("spincavity").joinpath("schema/job.schema.json").read_text("utf-8"))


@dataclass
class JobConfig:
    """Validated configuration, converted to internal units (rad/s, s)."""

    model: str
    params: object
    protocol: DriveProtocol
    sample_rate: float
    observable: str = "amplitude"
    solver: dict = field(default_factory=dict)
    sweep_axis: str | None = None
    sweep_values: tuple = ()
    hold_rabi: bool = True
    q_table: tuple | None = None
    plateau: dict = field(default_factory=dict)
    noise_sigma: float = 0.0
    seed: int = 0
    output_dir: str | None = None
    raw: dict = field(default_factory=dict, repr=False)


def _where(path):
    return "/".join(str(p) for p in path) or "<root>"


def parse_config_text(text, source="<config>") -> JobConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, f"{source}: line {exc.lineno} column {exc.colno}") from None
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(e.message, f"{source}: key {_where(e.absolute_path)}")
    return build_config(raw, source)


def load_config(path) -> JobConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(str(exc), str(path)) from None
    return parse_config_text(text, str(path))


def _system_params(sysd, source):
    def hz(key, default=0.0):
        return TWO_PI * sysd[key] if key in sysd else default

    if "gamma2_hz" in sysd and "t2_s" in sysd:
        raise ConfigError("give gamma2_hz or t2_s, not both", f"{source}: key system")
    if "gamma1_hz" in sysd and "t1_s" in sysd:
        raise ConfigError("give gamma1_hz or t1_s, not both", f"{source}: key system")
    if "t2_s" in sysd:
        t1 = sysd.get("t1_s", math.inf)
        try:
            gamma1, gamma2 = gamma_rates(t1, sysd["t2_s"])
        except ParameterError as exc:
            raise ConfigError(str(exc), f"{source}: key system/t2_s") from None
    else:
        gamma1 = hz("gamma1_hz") if "t1_s" not in sysd else 1.0 / sysd["t1_s"]
        gamma2 = hz("gamma2_hz")

    kappa_e = hz("kappa_e_hz")
    if "q_loaded" in sysd:
        if "kappa_hz" in sysd or "kappa_i_hz" in sysd:
            raise ConfigError("q_loaded conflicts with kappa_hz/kappa_i_hz", f"{source}: key system")
        if "f_cavity_hz" not in sysd:
            raise ConfigError("q_loaded needs f_cavity_hz", f"{source}: key system/q_loaded")
        kappa = kappa_from_q(TWO_PI * sysd["f_cavity_hz"], sysd["q_loaded"])
        kappa_i = kappa - kappa_e
    elif "kappa_hz" in sysd:
        if "kappa_i_hz" in sysd:
            raise ConfigError("give kappa_hz or kappa_i_hz, not both", f"{source}: key system")
        kappa_i = hz("kappa_hz") - kappa_e
    else:
        kappa_i = hz("kappa_i_hz")
    if kappa_i < 0:
        raise ConfigError("kappa_e_hz exceeds the total loss rate", f"{source}: key system/kappa_e_hz")

    f_drive = sysd.get("f_drive_hz")
    f_c = sysd.get("f_cavity_hz", f_drive if f_drive is not None else 0.0)
    f_s = sysd.get("f_spin_hz", f_c)
    f_r = f_drive if f_drive is not None else f_c
    kw = dict(
        omega_c=TWO_PI * f_c, omega_s=TWO_PI * f_s, omega_r=TWO_PI * f_r,
        g0=hz("g0_hz"), n_spins=sysd.get("n_spins", 0.0),
        polarization=sysd.get("polarization", 0.0),
        kappa_i=kappa_i, kappa_e=kappa_e, gamma_1=gamma1, gamma_2=gamma2,
        temperature=sysd.get("temperature_k"),
    )
    if "g_hz" in sysd:
        kw["g_eff"] = hz("g_hz")
    try:
        return SystemParams(**kw)
    except ParameterError as exc:
        raise ConfigError(str(exc), f"{source}: key system") from None


def build_config(raw: dict, source="<config>") -> JobConfig:
    """Convert a schema-valid dictionary into a :class:`JobConfig`."""
    model = raw["model"]
    sysd = dict(raw.get("system", {}))
    rdbe_direct = "tau_r_s" in sysd
    if rdbe_direct:
        if model != "rdbe":
            raise ConfigError("tau_r_s is only meaningful for the rdbe model", f"{source}: key system/tau_r_s")
        extra = set(sysd) - {"tau_r_s", "t1_s", "t2_s", "m_eq"}
        if extra:
            raise ConfigError("rdbe parameters given by tau_r_s accept only t1_s, t2_s and m_eq; got "
                              + ", ".join(sorted(extra)), f"{source}: key system")
        params = RdbeParams(tau_r=sysd["tau_r_s"], t1=sysd.get("t1_s", math.inf),
                            t2=sysd.get("t2_s", math.inf), m_eq=sysd.get("m_eq", 1.0))
    else:
        if "m_eq" in sysd:
            raise ConfigError("m_eq needs tau_r_s", f"{source}: key system/m_eq")
        params = _system_params(sysd, source)
        if params.delta_c != 0 or params.delta_s != 0:
            raise DetuningError(
                f"{source}: key system: detuning unsupported in v1 (f_cavity_hz, f_spin_hz and "
                "f_drive_hz must coincide)")

    prot = raw["protocol"]
    segs = []
    for i, s in enumerate(prot["segments"]):
        where = f"{source}: key protocol/segments/{i}"
        if "omega1_hz" in s:
            w1 = TWO_PI * s["omega1_hz"]
            if rdbe_direct:
                amp = w1
            else:
                if not (params.g_eff > 0 and params.kappa > 0):
                    raise ConfigError("omega1_hz needs g_hz and a nonzero loss rate", where)
                amp = w1 * params.kappa / (2 * params.g_eff)
        else:
            amp = TWO_PI * s.get("amplitude_hz", 0.0)
        try:
            segs.append(Segment(s["duration_s"], amp, s.get("phase_rad", 0.0)))
        except ParameterError as exc:
            raise ConfigError(str(exc), where) from None
    presat = None
    if "presaturation" in prot:
        p = prot["presaturation"]
        try:
            presat = Presaturation(p["n"], p["tp_s"], p["td_s"], TWO_PI * p["omega1_hz"])
        except ParameterError as exc:
            raise ConfigError(str(exc), f"{source}: key protocol/presaturation") from None
    kw = {"max_duration": prot["max_duration_s"]} if "max_duration_s" in prot else {}
    try:
        protocol = DriveProtocol(tuple(segs), presat, **kw)
    except ParameterError as exc:
        raise ConfigError(str(exc), f"{source}: key protocol") from None

    solver = {}
    sol = raw.get("solver", {})
    for k in ("rtol", "atol"):
        if k in sol:
            solver[k] = sol[k]
    if "max_step_s" in sol:
        solver["max_step"] = sol["max_step_s"]

    axis, values, hold = None, (), True
    if "sweep" in raw:
        sw = raw["sweep"]
        axis = sw["axis"]
        key, factor = _SWEEP_KEYS[axis]
        others = [k for k in ("values_hz", "values_k", "values") if k in sw and k != key]
        if key not in sw or others:
            raise ConfigError(f"the {axis} axis takes its values under {key!r}", f"{source}: key sweep")
        values = tuple(v * factor for v in sw[key])
        hold = sw.get("hold_rabi", True)

    q_table = None
    if "q_table" in raw:
        q_table = tuple((r["temperature_k"], r["q"]) for r in raw["q_table"])

    return JobConfig(
        model=model, params=params, protocol=protocol, sample_rate=raw["sample_rate_hz"],
        observable=raw.get("observable", "amplitude"), solver=solver, sweep_axis=axis,
        sweep_values=values, hold_rabi=hold, q_table=q_table, plateau=dict(raw.get("plateau", {})),
        noise_sigma=raw.get("noise", {}).get("relative_sigma", 0.0), seed=raw.get("seed", 0),
        output_dir=raw.get("output", {}).get("dir"), raw=raw,
    )
