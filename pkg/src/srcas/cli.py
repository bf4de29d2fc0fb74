"""Command-line front end.

Every subcommand builds a result document (summary record, named tables and
a failure list) which is emitted as CSV or JSON. Output goes to ``--out``,
to ``$SRCAS_OUTPUT_DIR/<command>.<ext>`` when that variable is set, or to
stdout. Exit status is 0 only when every requested computation succeeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .analysis import (METHODS, BoundaryOutsideBoundsError, SweepGrid, boundary_for_qe,
                       frequency_response, frequency_sweep, peak_gain, peak_search_range,
                       percent_error)
from .config import ConfigError, load_document, parse_config
from .core import NOMINAL_BASE, ParameterError, derive_params
from .small_signal import as_resonance_frequency
from .steady_state import ConvergenceError, solve_cyclic_steady_state, steady_state_waveform
from .time_sim import (MODES, ModeViolationError, NoResonanceError, RippleSpec,
                       measure_ripple_gain, simulate)

OUTPUT_DIR_ENV = "SRCAS_OUTPUT_DIR"
log = logging.getLogger("srcas")

COMPUTE_ERRORS = (ConvergenceError, ModeViolationError, NoResonanceError,
                  BoundaryOutsideBoundsError, ParameterError, ArithmeticError,
                  np.linalg.LinAlgError)


def _clean(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return None if not math.isfinite(v) else v
    if isinstance(v, np.integer):
        return int(v)
    return v


def _failure(stage: str, exc: Exception, **where) -> dict:
    return {"stage": stage, **where, "error": type(exc).__name__, "message": str(exc)}


def new_result(command: str, cfg=None) -> dict:
    res = {"command": command}
    if cfg is not None and cfg.params is not None:
        res["params"] = cfg.params.as_dict()
    res.update(summary={}, tables={}, failures=[])
    return res


# -- emission -------------------------------------------------------------------

def _csv_text(rows: list[dict]) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(rows[0]))
    for r in rows:
        w.writerow(["" if _clean(v) is None else (repr(_clean(v)) if isinstance(_clean(v), float)
                                                  else v) for v in r.values()])
    return buf.getvalue()


def render(result: dict, fmt: str) -> dict[str, str]:
    """Render ``result`` to ``{suffix: text}``; suffix "" is the main output."""
    if fmt == "json":
        doc = json.loads(json.dumps(result, default=_clean), parse_constant=lambda c: None)
        doc = _nan_to_none(doc)
        return {"": json.dumps(doc, indent=2, allow_nan=False) + "\n"}
    parts = {}
    tables = dict(result["tables"])
    if result["summary"]:
        tables["summary"] = [result["summary"]]
    for i, (name, rows) in enumerate(tables.items()):
        parts["" if i == 0 else f"_{name}"] = _csv_text(rows)
    return parts


def _nan_to_none(x):
    if isinstance(x, dict):
        return {k: _nan_to_none(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_nan_to_none(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def emit(result: dict, fmt: str, out: str | None = None) -> list[Path]:
    """Write ``result``; returns the files written (empty for stdout)."""
    parts = render(result, fmt)
    ext = ".json" if fmt == "json" else ".csv"
    if out is None and os.environ.get(OUTPUT_DIR_ENV):
        out = str(Path(os.environ[OUTPUT_DIR_ENV]) / f"{result['command']}{ext}")
    if out is None or out == "-":
        sys.stdout.write("\n".join(parts.values()))
        return []
    base = Path(out)
    written = []
    for suffix, text in parts.items():
        path = base if not suffix else base.with_name(f"{base.stem}{suffix}{base.suffix or ext}")
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc.strerror}") from None
        written.append(path)
    return written


# -- subcommands ----------------------------------------------------------------

def cmd_derive(args, cfg) -> dict:
    res = new_result("derive", cfg)
    d = derive_params(cfg.params)
    row = dict(cfg.params.as_dict())
    row.update(omega_r=d.omega_r, fr=d.fr, Zc=d.Zc, Ts=d.Ts, F=d.F, Rac=d.Rac, Qe=d.Qe)
    res["summary"] = row
    return res


def _op_summary(op) -> dict:
    return dict(iL0=op.state.iL, vc0=op.state.vc, vo0=op.state.vo, T1=op.times.T1,
                T3=op.times.T3, T1_over_Ts=op.times.T1 / op.times.Ts, dc_gain=op.dc_gain,
                residual_norm=op.residual_norm, iterations=op.iterations)


def cmd_steady_state(args, cfg) -> dict:
    res = new_result("steady-state", cfg)
    try:
        op = solve_cyclic_steady_state(cfg.params)
    except COMPUTE_ERRORS as exc:
        res["failures"].append(_failure("steady-state", exc))
        return res
    res["summary"] = _op_summary(op)
    if args.waveform_points:
        wf = steady_state_waveform(cfg.params, op, args.waveform_points)
        res["tables"]["waveform"] = [dict(t=r[0], iL=r[1], vc=r[2], vo=r[3]) for r in wf]
    return res


def cmd_bode(args, cfg) -> dict:
    res = new_result("bode", cfg)
    lo, hi = peak_search_range(cfg.params)
    fmin = args.fmin if args.fmin is not None else lo
    fmax = args.fmax if args.fmax is not None else hi
    f = np.geomspace(fmin, fmax, args.points)
    try:
        fr = frequency_response(cfg.params, f, args.method)
    except COMPUTE_ERRORS as exc:
        res["failures"].append(_failure("bode", exc))
        return res
    res["tables"]["bode"] = [
        dict(f_in_hz=fk, gain_db=db, normalized_gain=ng, phase_deg=math.degrees(np.angle(h)),
             method=fr.method)
        for fk, db, ng, h in zip(fr.f_in, fr.gain_db, fr.normalized_gain, fr.gain)]
    return res


def cmd_resonance(args, cfg) -> dict:
    res = new_result("resonance", cfg)
    p = cfg.params
    s = {}
    try:
        op = solve_cyclic_steady_state(p)
        rf = as_resonance_frequency(p, op)
        s.update(f_closed_form=rf.hz, f_pole_angle=rf.pole_hz)
        for m in ("tf", "model"):
            pk = peak_gain(p, m)
            s[f"f_peak_{m}"] = pk.f_peak
            s[f"gain_db_{m}"] = pk.gain_db
            s[f"normalized_gain_{m}"] = pk.normalized_gain
    except COMPUTE_ERRORS as exc:
        res["failures"].append(_failure("resonance-model", exc))
    if args.compare_sim:
        try:
            pk = peak_gain(p, "sim")
            if not pk.interior:
                raise NoResonanceError("no resonance in range")
            s.update(f_peak_sim=pk.f_peak, gain_db_sim=pk.gain_db,
                     normalized_gain_sim=pk.normalized_gain)
            if "f_closed_form" in s:
                s["error_pct"] = percent_error(pk.f_peak, s["f_closed_form"])
        except COMPUTE_ERRORS as exc:
            res["failures"].append(_failure("resonance-sim", exc))
    res["summary"] = s
    return res


def cmd_sim(args, cfg) -> dict:
    res = new_result("sim", cfg)
    p = cfg.params
    amp = args.amplitude if args.amplitude is not None else 1e-4 * p.Vin
    try:
        tr = simulate(p, RippleSpec(args.fin, amp), args.settle, args.measure, mode=args.mode)
        g = measure_ripple_gain(tr)
    except COMPUTE_ERRORS as exc:
        res["failures"].append(_failure("sim", exc))
        return res
    res["tables"]["trace"] = [
        dict(k=k, t=k * tr.Ts, vin=tr.vin[k], iL=tr.iL[k], vc=tr.vc[k], vo=tr.vo[k],
             T1=tr.T1[k], T3=tr.T3[k]) for k in range(tr.n_periods)]
    res["summary"] = dict(f_in_requested=args.fin, f_in=tr.f_in, amplitude=amp,
                          settle_periods=tr.settle_periods, measure_periods=tr.measure_periods,
                          mode=tr.mode, gain_db=g.ripple_gain_db,
                          normalized_gain=g.normalized_gain, dc_gain=g.dc_gain)
    return res


def _grid_from_file(path) -> tuple[SweepGrid, str | None]:
    doc = load_document(path)
    allowed = {"F", "Qe", "f_in", "base", "method"}
    extra = sorted(set(doc) - allowed)
    if extra:
        raise ConfigError(f"unknown grid key: {extra[0]!r}")
    missing = [k for k in ("F", "Qe", "f_in") if k not in doc]
    if missing:
        raise ConfigError(f"grid file missing keys: {', '.join(missing)}")
    base = dict(NOMINAL_BASE)
    bad = sorted(set(doc.get("base") or {}) - set(base))
    if bad:
        raise ConfigError(f"unknown base key: {bad[0]!r}")
    base.update({k: float(v) for k, v in (doc.get("base") or {}).items()})
    as_list = (lambda v: list(v) if isinstance(v, (list, tuple)) else [v])
    return (SweepGrid(F=as_list(doc["F"]), Qe=as_list(doc["Qe"]), f_in=as_list(doc["f_in"]),
                      base=base), doc.get("method"))


def cmd_sweep(args, cfg) -> dict:
    res = new_result("sweep")
    grid, method = _grid_from_file(args.grid_file)
    method = args.method or method or "model"
    rows = []
    for fr in frequency_sweep(grid, method):
        for k, f in enumerate(grid.f_in):
            rows.append(dict(F=fr.F, Qe=fr.Qe, f_in=f, gain_db=fr.gain_db[k],
                             normalized_gain=fr.normalized_gain[k], method=fr.method))
        for e in fr.errors:
            res["failures"].append({"stage": "sweep", "F": fr.F, "Qe": fr.Qe, "message": e})
    res["tables"]["sweep"] = rows
    return res


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def cmd_region(args, cfg) -> dict:
    res = new_result("region")
    if len(args.f_bounds) != 2:
        raise ConfigError("--f-bounds takes exactly two values")
    rows = []
    for q in sorted(args.qe_grid):
        try:
            F = boundary_for_qe(q, tuple(args.f_bounds), args.method)
        except COMPUTE_ERRORS as exc:
            res["failures"].append(_failure("region", exc, Qe=q))
            F = math.nan
        rows.append(dict(Qe=q, F_boundary=F, method=args.method))
    res["tables"]["region"] = rows
    return res


COMMANDS = {"derive": cmd_derive, "steady-state": cmd_steady_state, "bode": cmd_bode,
            "resonance": cmd_resonance, "sim": cmd_sim, "sweep": cmd_sweep,
            "region": cmd_region}
NEEDS_PARAMS = {"derive", "steady-state", "bode", "resonance", "sim"}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON parameter file")
    common.add_argument("-p", "--param", action="append", default=[], metavar="KEY=VALUE",
                        help="parameter override (repeatable), e.g. -p Vin=8.4")
    common.add_argument("--format", choices=("csv", "json"), default=None)
    common.add_argument("-o", "--out", default=None,
                        help=f"output file ('-' for stdout); default ${OUTPUT_DIR_ENV}/<command>")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="srcas", description="Series resonant converter "
                                 "audiosusceptibility: steady state, small-signal model, "
                                 "simulation and design-region sweeps.")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("derive", parents=[common], help="derived tank quantities")
    s = sub.add_parser("steady-state", parents=[common], help="cyclic steady state")
    s.add_argument("--waveform-points", type=int, default=0, metavar="M")
    b = sub.add_parser("bode", parents=[common], help="audiosusceptibility frequency response")
    b.add_argument("--fmin", type=float)
    b.add_argument("--fmax", type=float)
    b.add_argument("--points", type=int, default=200)
    b.add_argument("--method", choices=METHODS, default="model")
    r = sub.add_parser("resonance", parents=[common], help="resonance frequency and peak gain")
    r.add_argument("--compare-sim", action="store_true")
    m = sub.add_parser("sim", parents=[common], help="switched simulation with input ripple")
    m.add_argument("--fin", type=float, required=True)
    m.add_argument("--amplitude", type=float, help="peak ripple in volts (default 1e-4*Vin)")
    m.add_argument("--settle", type=int)
    m.add_argument("--measure", type=int)
    m.add_argument("--mode", choices=MODES, default="exact")
    w = sub.add_parser("sweep", parents=[common], help="(F, Qe, f_in) gain sweep")
    w.add_argument("--grid-file", required=True)
    w.add_argument("--method", choices=METHODS)
    g = sub.add_parser("region", parents=[common], help="unity-gain design boundary")
    g.add_argument("--qe-grid", type=_floats, default=[0.5, 1, 2, 3, 5, 10])
    g.add_argument("--f-bounds", type=_floats, default=[1.01, 1.5])
    g.add_argument("--method", choices=("model", "sim"), default="model")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config, args.param, require_params=args.command in NEEDS_PARAMS,
                           fmt=args.format, output=args.out)
        result = COMMANDS[args.command](args, cfg)
        emit(result, cfg.format, cfg.output)
    except (ConfigError, ParameterError, OSError) as exc:
        print(f"srcas: error: {exc}", file=sys.stderr)
        return 2
    if result["failures"]:
        print(json.dumps({"failures": result["failures"]}, default=_clean), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
