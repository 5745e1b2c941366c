"""Command-line front end.

Data files (CSV) are deterministic; run metadata such as wall time goes to a
JSON sidecar next to them.  Errors are reported as one JSON object on stderr:
exit status 2 for bad arguments or parameters outside their domain, 1 for
numerical failures.
"""

from __future__ import annotations

import argparse
import json
import math
import platform
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .evolve import Outcome, SimConfig, Trace, blowup_experiment, run, virial_residual
from .grid import Grid, from_csv, functionals, sample_soliton, to_csv
from .soliton import SolitonParams, quantity_report
from .thresholds import ThresholdKind, classify, sweep, sweep_csv, threshold_xi

EXIT_NUMERICAL = 1
EXIT_USAGE = 2


class UsageError(Exception):
    """Bad argument or parameter outside its domain (exit 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _dumps(obj) -> str:
    # NaN/inf are not JSON; map them to null
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return None
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        return v

    return json.dumps(clean(obj), indent=2, sort_keys=True, default=_json_default)


def _params(p, gamma, omega) -> SolitonParams:
    try:
        return SolitonParams(p, gamma, omega)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _need_supercritical(p):
    if not p > 5.0:
        raise UsageError(f"p must exceed 5, got {p!r}")


def _write(path: Path | None, text: str):
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text)


def _sidecar(path: Path, args, started: float, extra=None):
    meta = {
        "command": args.command,
        "arguments": {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k not in ("func", "command")},
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "wall_seconds": round(time.perf_counter() - started, 3),
    }
    if extra:
        meta.update(extra)
    path.with_suffix(path.suffix + ".json").write_text(_dumps(meta) + "\n")


# commands ------------------------------------------------------------------


def cmd_thresholds(args):
    _need_supercritical(args.p)
    if args.gamma is not None and not args.gamma > 0:
        raise UsageError(f"gamma must be positive, got {args.gamma!r}")
    out = {"p": args.p}
    for k in ThresholdKind:
        xi = threshold_xi(k, args.p)
        out[k.value] = xi
        if args.gamma is not None:
            out["omega" + k.value[-1]] = args.gamma**2 / (4 * xi * xi)
    print(_dumps(out))


def cmd_sweep(args):
    _need_supercritical(args.lo)
    if not (args.hi > args.lo and args.n >= 2):
        raise UsageError("sweep needs hi > lo and n >= 2")
    started = time.perf_counter()
    rows = sweep(args.lo, args.hi, args.n)
    _write(args.out, sweep_csv(rows))
    failures = [{"p": r.p, "error": r.error} for r in rows if r.error]
    for f in failures:
        print(_dumps(f), file=sys.stderr)
    if args.out is not None:
        _sidecar(args.out, args, started, {"failed_rows": failures})


def cmd_profile(args):
    prm = _params(args.p, args.gamma, args.omega)
    if args.n % 2 == 0 or args.n < 3 or not args.L > 0:
        raise UsageError("profile grid needs odd n >= 3 and L > 0")
    rep = quantity_report(prm)
    out = {"p": prm.p, "gamma": prm.gamma, "omega": prm.omega, "xi": prm.xi, **asdict(rep)}
    if args.out is not None:
        started = time.perf_counter()
        g = Grid(args.L, args.n)
        v = sample_soliton(g, prm)
        args.out.write_text(to_csv(v))
        grid_vals = asdict(functionals(v, prm.p, prm.gamma, prm.omega))
        _sidecar(args.out, args, started, {"grid_functionals": grid_vals})
    print(_dumps(out))


def cmd_classify(args):
    prm = _params(args.p, args.gamma, args.omega)
    if not prm.gamma > 0:
        raise UsageError(f"classification needs gamma > 0, got {prm.gamma!r}")
    print(_dumps(classify(prm).to_dict()))


def _read_text(path: Path) -> str:
    try:
        return path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _config(text: str, **overrides) -> SimConfig:
    try:
        return SimConfig.from_text(text, **overrides)
    except ValueError as exc:
        raise UsageError(f"config: {exc}") from None


def _emit_trace(out: Path, trace: Trace, args, started, extra):
    out.write_text(trace.to_csv())
    meta = {"outcome": json.loads(trace.outcome.to_json()), **extra}
    _sidecar(out, args, started, meta)


def cmd_simulate(args):
    cfg = _config(_read_text(args.config))
    started = time.perf_counter()
    if args.initial is not None:
        try:
            u0 = from_csv(_read_text(args.initial))
        except ValueError as exc:
            raise UsageError(f"initial data: {exc}") from None
        if u0.grid != cfg.grid:
            raise UsageError(f"initial data grid {u0.grid} does not match config grid {cfg.grid}")
    else:
        u0 = sample_soliton(cfg.grid, cfg.params)
    trace = run(u0, cfg)
    _emit_trace(args.out, trace, args, started, {"config": cfg.to_text()})
    print(trace.outcome.to_json())


def cmd_blowup(args):
    prm = _params(args.p, args.gamma, args.omega)
    _need_supercritical(prm.p)
    if not args.lam > 0:
        raise UsageError(f"lambda must be positive, got {args.lam!r}")
    if args.config is not None:
        base = _read_text(args.config)
    else:
        base = f"L={args.L!r}\nn={_node_count(args.L, args.h)}\ndt={args.dt!r}\nt_end={args.t_end!r}\n"
    overrides = {
        "p": prm.p,
        "gamma": prm.gamma,
        "omega": prm.omega,
        "blowup_gradient_factor": args.gradient_factor,
        "blowup_peak_factor": args.peak_factor,
        "record_stride": args.record_stride,
    }
    cfg = _config(base, **overrides)
    started = time.perf_counter()
    rep = blowup_experiment(prm, args.lam, cfg)
    membership = None if rep.membership is None else asdict(rep.membership)
    if membership is not None:
        membership["member"] = rep.member
    extra = {
        "config": cfg.to_text(),
        "lambda": rep.lam,
        "membership": membership,
        "undefined_set": rep.undefined_set,
        "P_always_negative": rep.P_always_negative,
    }
    _emit_trace(args.out, rep.trace, args, started, extra)
    summary = {"outcome": rep.outcome.kind, "t_star": rep.t_star, "member": rep.member, "undefined_set": rep.undefined_set}
    print(_dumps(summary))


def _node_count(L, h):
    if not (L > 0 and h > 0):
        raise UsageError("L and h must be positive")
    return 2 * int(round(L / h)) + 1


def cmd_virial_check(args):
    text = _read_text(args.trace)
    sidecar = args.trace.with_suffix(args.trace.suffix + ".json")
    outcome = None
    if sidecar.exists():
        outcome = Outcome.from_json(json.dumps(json.loads(sidecar.read_text())["outcome"]))
    try:
        trace = Trace.from_csv(text, outcome)
    except ValueError as exc:
        raise UsageError(f"trace: {exc}") from None
    res = virial_residual(trace)
    print(_dumps({"virial_residual": res, "records": len(trace.records), "outcome": trace.outcome.kind}))


# parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="deltanls", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def soliton_args(sp, gamma_default=None):
        sp.add_argument("--p", type=float, required=True, help="nonlinearity power")
        sp.add_argument("--gamma", type=float, required=gamma_default is None, default=gamma_default)
        sp.add_argument("--omega", type=float, required=True)

    sp = sub.add_parser("thresholds", help="xi0, xi1, xi2 (and omega_j if --gamma) at one p")
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--gamma", type=float, default=None)
    sp.set_defaults(func=cmd_thresholds)

    sp = sub.add_parser("sweep", help="threshold curves over a range of p, as CSV")
    sp.add_argument("--lo", type=float, required=True)
    sp.add_argument("--hi", type=float, required=True)
    sp.add_argument("--n", type=int, default=50)
    sp.add_argument("--out", type=Path, default=None, help="CSV path (default stdout)")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("profile", help="closed-form soliton quantities; --out writes the sampled profile")
    soliton_args(sp)
    sp.add_argument("--L", type=float, default=30.0)
    sp.add_argument("--n", type=int, default=12001)
    sp.add_argument("--out", type=Path, default=None)
    sp.set_defaults(func=cmd_profile)

    sp = sub.add_parser("classify", help="stability regime as JSON")
    soliton_args(sp)
    sp.set_defaults(func=cmd_classify)

    sp = sub.add_parser("simulate", help="evolve initial data under a key=value config")
    sp.add_argument("--config", type=Path, required=True)
    sp.add_argument("--initial", type=Path, default=None, help="x,re,im CSV (default: the sampled soliton)")
    sp.add_argument("--out", type=Path, required=True, help="trace CSV; outcome goes to OUT.json")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("blowup", help="evolve the dilated soliton and report membership and outcome")
    soliton_args(sp)
    sp.add_argument("--lambda", dest="lam", type=float, default=1.05)
    sp.add_argument("--config", type=Path, default=None, help="key=value grid/time config (overrides --L/--h/--dt/--t-end)")
    sp.add_argument("--L", type=float, default=6.5)
    sp.add_argument("--h", type=float, default=1e-3)
    sp.add_argument("--dt", type=float, default=2e-6)
    sp.add_argument("--t-end", dest="t_end", type=float, default=0.2)
    sp.add_argument("--gradient-factor", type=float, default=None)
    sp.add_argument("--peak-factor", type=float, default=None)
    sp.add_argument("--record-stride", type=int, default=None)
    sp.add_argument("--out", type=Path, required=True)
    sp.set_defaults(func=cmd_blowup)

    sp = sub.add_parser("virial-check", help="virial residual of a trace CSV")
    sp.add_argument("trace", type=Path)
    sp.set_defaults(func=cmd_virial_check)
    return ap


def _fail(status, kind, message, source=None):
    err = {"error": kind, "message": message}
    if source:
        err["module"] = source
    print(json.dumps(err), file=sys.stderr)
    return status


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", str(exc))
    try:
        args.func(args)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "domain", str(exc))
    except (ArithmeticError, ValueError, FloatingPointError) as exc:
        tb = exc.__traceback__
        while tb.tb_next is not None:
            tb = tb.tb_next
        source = tb.tb_frame.f_globals.get("__name__")
        return _fail(EXIT_NUMERICAL, type(exc).__name__, str(exc), source)
    except OSError as exc:
        return _fail(EXIT_USAGE, "io", str(exc))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
