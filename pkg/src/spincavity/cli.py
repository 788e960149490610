"""Command-line interface: ``spincavity <command> ...``.

Exit codes: 0 success, 2 configuration or usage error, 3 solver failure,
4 fit failure (no convergence or unidentifiable parameters).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import io as sio
from .constants import TWO_PI
from .experiments import JobSpec, job_for_value, plateau_metrics, run_job, sweep
from .fitting import FitError, S21Fitter, TransientFitter
from .model import ParameterError, SystemParams, adiabatic_map, cooperativity, dressed_cavity
from .semiclassical import RdbeParams, SimulationError

ENV_OUT = "SPINCAVITY_OUT"
DEFAULT_OUT = "spincavity_out"

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_FIT = 0, 2, 3, 4

# unit-suffixed CLI names for fit parameters -> (internal name, factor to SI)
_FIT_KEYS = {
    "tau_r_s": ("tau_r", 1.0), "omega1_hz": ("omega1", TWO_PI), "t2_s": ("t2", 1.0),
    "t1_s": ("t1", 1.0), "m_eq": ("m_eq", 1.0), "scale": ("scale", 1.0), "offset": ("offset", 1.0),
    "g_hz": ("g", TWO_PI), "kappa_hz": ("kappa", TWO_PI), "gamma2_hz": ("gamma2", TWO_PI),
    "gamma1_hz": ("gamma1", TWO_PI), "drive_amp_hz": ("drive_amp", TWO_PI),
}
_S21_KEYS = ("f0_hz", "kappa_i_hz", "kappa_e_hz")


class UsageError(ParameterError):
    pass


def _err(msg):
    print(f"spincavity: error: {msg}", file=sys.stderr)


def _out_dir(args, cfg=None):
    if args.out:
        return Path(args.out)
    if cfg is not None and cfg.output_dir:
        return Path(cfg.output_dir)
    return Path(os.environ.get(ENV_OUT, DEFAULT_OUT))


def _params_dict(params):
    if isinstance(params, SystemParams):
        d = params.as_dict()
        d["g_eff"] = params.g_eff
        return d
    return dataclasses.asdict(params)


def _load(args):
    cfg = sio.load_config(args.config)
    if getattr(args, "model", None):
        if isinstance(cfg.params, RdbeParams) and args.model != "rdbe":
            raise sio.ConfigError("tau_r_s parameters only support --model rdbe", "--model")
        cfg.model = args.model
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def _base_job(cfg):
    return JobSpec(cfg.model, cfg.params, cfg.protocol, cfg.sample_rate, q_table=cfg.q_table,
                   observable=cfg.observable, solver=dict(cfg.solver), hold_rabi=cfg.hold_rabi)


def _add_noise(trace, sigma, seed_seq):
    if not sigma > 0:
        return trace
    rng = np.random.default_rng(seed_seq)
    s = trace.signal
    noisy = s + sigma * float(np.max(np.abs(s))) * rng.standard_normal(s.size)
    return trace.with_column("signal", noisy).with_metadata(noise_relative_sigma=sigma)


def _metrics(trace, cfg):
    kw = {k: cfg.plateau[k] for k in ("band_fraction", "bins") if k in cfg.plateau}
    if "window_start_s" in cfg.plateau:
        kw["window"] = (cfg.plateau["window_start_s"], float(trace.times[-1]))
    try:
        return plateau_metrics(trace, **kw)
    except ValueError:
        return None


def _effective(job: JobSpec, trace):
    """Effective coupling, rates and Rabi frequency of one job (Hz-facing)."""
    p = job.params
    amp = job.protocol.max_amplitude
    if isinstance(p, RdbeParams):
        return {"g_eff_hz": math.nan, "g_eff_mhz": math.nan, "kappa_hz": math.nan,
                "gamma2_hz": math.nan, "tau_r_s": p.tau_r, "omega1_hz": amp / TWO_PI}
    g = trace.metadata.get("g_eff", p.g_eff) if trace is not None else p.g_eff
    kappa = p.kappa
    tau_r, w1 = adiabatic_map(g, kappa, amp) if g > 0 and kappa > 0 else (math.inf, math.nan)
    return {"g_eff_hz": g / TWO_PI, "g_eff_mhz": g / TWO_PI / 1e6, "kappa_hz": kappa / TWO_PI,
            "gamma2_hz": p.gamma_2 / TWO_PI, "tau_r_s": tau_r, "omega1_hz": w1 / TWO_PI}


def _write_trace(trace, path: Path, cfg, job, metrics, **extra):
    csv_sha = sio.write_trace_csv(trace, path)
    sio.write_metadata(
        path.with_suffix(".meta.json"), "trace",
        package_version=__version__, model=job.model, params=_params_dict(job.params),
        protocol=job.protocol.as_dict(), protocol_digest=job.protocol.digest(),
        sample_rate_hz=job.sample_rate, seed=cfg.seed, noise_relative_sigma=cfg.noise_sigma,
        trace_digest=trace.digest(), csv_sha256=csv_sha,
        plateau_metrics=None if metrics is None else metrics.as_dict(),
        solver=trace.metadata.get("solver"), warnings=trace.metadata.get("warnings", []),
        **extra,
    )
    return csv_sha


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_simulate(args):
    cfg = _load(args)
    job = _base_job(cfg)
    trace = run_job(job)
    trace = _add_noise(trace, cfg.noise_sigma, np.random.SeedSequence([cfg.seed, 0]))
    metrics = _metrics(trace, cfg)
    out = _out_dir(args, cfg)
    path = out / "trace.csv"
    _write_trace(trace, path, cfg, job, metrics, config=cfg.raw, effective=_effective(job, trace))
    print(f"wrote {path} ({len(trace.times)} samples, columns {','.join(trace.names)})")
    if metrics is not None:
        m = metrics.as_dict()
        print("plateau: " + ", ".join(f"{k}={v:.6g}" for k, v in m.items()))
    return EXIT_OK


_SUMMARY_METRICS = ("saturation_level", "plateau_level", "plateau_duration", "initial_transient_peak")
_SUMMARY_EFFECTIVE = ("g_eff_hz", "g_eff_mhz", "kappa_hz", "gamma2_hz", "tau_r_s", "omega1_hz")


def _value_column(axis):
    return {"drive_amp": "drive_amp_hz", "g_eff": "g_eff_set_hz", "temperature": "temperature_k",
            "n_presat": "n_presat"}[axis]


def _run_sweep(args, cfg, axis, values):
    base = _base_job(cfg)
    ts = sweep(axis, values, base, n_jobs=args.jobs)
    out = _out_dir(args, cfg)
    tdir = out / "traces"
    header = ["index", _value_column(axis), *("plateau_duration_s" if k == "plateau_duration" else k
                                               for k in _SUMMARY_METRICS),
              *_SUMMARY_EFFECTIVE, "trace_file", "error"]
    rows = []
    scale = TWO_PI if axis in ("drive_amp", "g_eff") else 1.0
    nan_eff = dict.fromkeys(_SUMMARY_EFFECTIVE, math.nan)
    for i, (v, trace, err) in enumerate(zip(ts.values, ts.traces, ts.errors)):
        try:
            job = job_for_value(axis, v, base)
        except ParameterError:
            job = None  # already recorded in err
        name = f"job_{i:03d}.csv"
        metrics = None
        if trace is not None:
            trace = _add_noise(trace, cfg.noise_sigma, np.random.SeedSequence([cfg.seed, i]))
            metrics = _metrics(trace, cfg)
            _write_trace(trace, tdir / name, cfg, job, metrics, sweep_axis=axis, sweep_value=v,
                         sweep_index=i)
        eff = _effective(job, trace) if job is not None else nan_eff
        m = metrics.as_dict() if metrics is not None else {k: math.nan for k in _SUMMARY_METRICS}
        value = v / scale if axis != "n_presat" else int(v)
        rows.append([i, value, *(m[k] for k in _SUMMARY_METRICS), *(eff[k] for k in _SUMMARY_EFFECTIVE),
                     name if trace is not None else "", err or ""])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows([_fmt(x) for x in r] for r in rows)
    text = buf.getvalue()
    summary = out / "summary.csv"
    sio.atomic_write(summary, text)
    sio.write_metadata(out / "summary.meta.json", "sweep", package_version=__version__, axis=axis,
                       values=list(ts.values), config=cfg.raw, seed=cfg.seed,
                       summary_sha256=sio.sha256_text(text), n_failed=sum(e is not None for e in ts.errors))
    print(f"wrote {summary} ({len(rows)} rows)")
    for r in rows:
        print("  " + ", ".join(f"{h}={_fmt(x)}" for h, x in zip(header, r) if h not in ("trace_file", "error")))
    failed = [r for r in rows if r[-1]]
    for r in failed:
        _err(f"job {r[0]} failed: {r[-1]}")
    return EXIT_SOLVER if failed else EXIT_OK


def _fmt(x):
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return sio.FLOAT_FORMAT % x


def cmd_sweep(args):
    cfg = _load(args)
    if cfg.sweep_axis is None:
        raise sio.ConfigError("the sweep command needs a sweep block", args.config)
    return _run_sweep(args, cfg, cfg.sweep_axis, cfg.sweep_values)


def cmd_saturation(args):
    cfg = _load(args)
    if args.n:
        try:
            values = tuple(int(v) for v in args.n.split(",") if v.strip())
        except ValueError:
            raise UsageError(f"--n takes comma-separated integers, got {args.n!r}") from None
    elif cfg.sweep_axis == "n_presat":
        values = cfg.sweep_values
    else:
        raise sio.ConfigError("saturation needs --n or a sweep block with axis n_presat", args.config)
    if not values:
        raise UsageError("empty list of presaturation counts")
    if cfg.protocol.presaturation is None:
        raise sio.ConfigError("saturation needs protocol/presaturation", args.config)
    return _run_sweep(args, cfg, "n_presat", values)


def _parse_pairs(items, what):
    out = {}
    for item in items or ():
        if "=" not in item:
            raise UsageError(f"{what} takes name=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = float(v)
        except ValueError:
            raise UsageError(f"{what} {k}: not a number: {v!r}") from None
    return out


def _convert_fit_keys(pairs, what):
    out = {}
    for k, v in pairs.items():
        if k not in _FIT_KEYS:
            raise UsageError(f"unknown {what} parameter {k!r}; choose from {', '.join(_FIT_KEYS)}")
        name, f = _FIT_KEYS[k]
        out[name] = v * f
    return out


def _write_fit(args, result, extra):
    out = _out_dir(args)
    text = sio.dumps({"schema_version": sio.SCHEMA_VERSION, "kind": "fit_result",
                      "package_version": __version__, **extra, "result": result.as_dict()})
    path = out / "fit_result.json"
    sio.atomic_write(path, text)
    return path


def cmd_fit_transient(args):
    trace = sio.read_trace_csv(args.input)
    if args.column not in trace.names:
        raise UsageError(f"{args.input} has no column {args.column!r}")
    guess = _convert_fit_keys(_parse_pairs(args.guess, "--guess"), "--guess")
    fixed = _convert_fit_keys(_parse_pairs(args.fix, "--fix"), "--fix")
    model = args.model or "rdbe"
    est = TransientFitter(model=model, guess=guess, fixed=fixed, include_initial=args.include_initial,
                          n_starts=args.starts, random_state=args.seed or 0, n_jobs=args.jobs)
    try:
        est.fit(trace.times, trace[args.column])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    res = est.result_
    path = _write_fit(args, res, {"input": str(args.input), "model": model, "column": args.column})
    print(f"wrote {path}")
    for n, v, h, u in zip(res.names, res.values, res.half_widths, res.units):
        print(f"{n} = {v:.8g} +/- {h:.3g} {u}")
    print(f"rss = {res.rss:.6g}, iterations = {res.n_iter}, converged = {res.converged}")
    return EXIT_OK


def cmd_fit_s21(args):
    scan = sio.read_scan_csv(args.input)
    g = _parse_pairs(args.guess, "--guess")
    unknown = set(g) - set(_S21_KEYS)
    if unknown:
        raise UsageError(f"unknown --guess parameter(s) {sorted(unknown)}; choose from {', '.join(_S21_KEYS)}")
    guess = None
    if g:
        if set(g) != set(_S21_KEYS):
            raise UsageError("--guess needs all of " + ", ".join(_S21_KEYS))
        guess = tuple(TWO_PI * g[k] for k in _S21_KEYS)
    y = scan.s21 if scan.has_phase else scan.magnitude
    est = S21Fitter(guess=guess, variant=args.variant, n_starts=args.starts,
                    random_state=args.seed or 0, n_jobs=args.jobs)
    est.fit(scan.frequencies, y)
    res = est.result_
    path = _write_fit(args, res, {"input": str(args.input), "variant": args.variant,
                                  "phase_used": bool(scan.has_phase)})
    print(f"wrote {path}")
    print(f"f0_hz = {est.omega0_ / TWO_PI:.10g}")
    print(f"kappa_i_hz = {est.kappa_i_ / TWO_PI:.6g}")
    print(f"kappa_e_hz = {est.kappa_e_ / TWO_PI:.6g}")
    print(f"Q = {est.q_:.6g}")
    return EXIT_OK


def cmd_classify(args):
    g, kappa, gamma2 = TWO_PI * args.g_hz, TWO_PI * args.kappa_hz, TWO_PI * args.gamma2_hz
    rep = cooperativity(g, kappa, gamma2, lower=args.lower, upper=args.upper)
    print(f"C = {rep.c_value:.6g}")
    print(f"regime = {rep.regime.value}")
    print(f"thresholds = {rep.lower:g}, {rep.upper:g}")
    if g > 0:
        tau_r, w1 = adiabatic_map(g, kappa, TWO_PI * args.drive_amp_hz)
        print(f"tau_r_s = {tau_r:.6g}")
        print(f"omega1_hz = {w1 / TWO_PI:.6g}")
    else:
        print("tau_r_s = inf")
    w, k = dressed_cavity(TWO_PI * args.f_cavity_hz, kappa, g, TWO_PI * args.delta_s_hz, gamma2)
    print(f"f_dressed_hz = {w / TWO_PI:.10g}")
    print(f"kappa_dressed_hz = {k / TWO_PI:.6g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="spincavity", description="Spin ensemble / cavity transient simulations and fits.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="JSON job configuration")
        sp.add_argument("--out", help=f"output directory (default: ${ENV_OUT} or ./{DEFAULT_OUT})")
        sp.add_argument("--jobs", type=int, default=1, help="parallel workers")
        sp.add_argument("--seed", type=int, default=None, help="random seed (noise, multi-start)")

    for name, fn, hlp in (("simulate", cmd_simulate, "run one transient"),
                          ("sweep", cmd_sweep, "run a parameter sweep"),
                          ("saturation", cmd_saturation, "sweep the presaturation pulse count")):
        sp = sub.add_parser(name, help=hlp)
        common(sp)
        sp.add_argument("--model", choices=("mbe1", "backaction", "rdbe"), help="override the configured model")
        if name == "saturation":
            sp.add_argument("--n", help="comma-separated pulse counts (overrides the config sweep)")
        sp.set_defaults(func=fn)

    sp = sub.add_parser("fit-transient", help="fit a trace CSV")
    sp.add_argument("input")
    common(sp, config=False)
    sp.add_argument("--model", choices=("rdbe", "mbe1"), default="rdbe")
    sp.add_argument("--guess", action="append", metavar="NAME=VALUE",
                    help="initial value, e.g. tau_r_s=4e-7 or omega1_hz=17.5e3 (repeatable)")
    sp.add_argument("--fix", action="append", metavar="NAME=VALUE", help="hold a parameter (repeatable)")
    sp.add_argument("--include-initial", action="store_true", help="fit the first 3*T2 as well")
    sp.add_argument("--column", default="signal")
    sp.add_argument("--starts", type=int, default=8)
    sp.set_defaults(func=cmd_fit_transient)

    sp = sub.add_parser("fit-s21", help="fit a resonance scan CSV")
    sp.add_argument("input")
    common(sp, config=False)
    sp.add_argument("--variant", choices=("transmission", "reflection"), default="transmission")
    sp.add_argument("--guess", action="append", metavar="NAME=VALUE",
                    help="f0_hz, kappa_i_hz and kappa_e_hz (all three)")
    sp.add_argument("--starts", type=int, default=8)
    sp.set_defaults(func=cmd_fit_s21)

    sp = sub.add_parser("classify", help="cooperativity, regime and derived constants")
    sp.add_argument("--g-hz", type=float, required=True)
    sp.add_argument("--kappa-hz", type=float, required=True)
    sp.add_argument("--gamma2-hz", type=float, required=True)
    sp.add_argument("--drive-amp-hz", type=float, default=0.0)
    sp.add_argument("--delta-s-hz", type=float, default=0.0)
    sp.add_argument("--f-cavity-hz", type=float, default=0.0)
    sp.add_argument("--lower", type=float, default=0.1)
    sp.add_argument("--upper", type=float, default=10.0)
    sp.set_defaults(func=cmd_classify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SimulationError as exc:
        _err(f"solver failure: {exc}")
        return EXIT_SOLVER
    except FitError as exc:
        _err(f"fit failed: {exc}")
        return EXIT_FIT
    except (ParameterError, ValueError, OSError) as exc:
        _err(str(exc))
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
