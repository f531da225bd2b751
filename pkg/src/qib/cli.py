"""Command-line runner: ``qib {solve,trace,compare,bounds,validate}``.

Exit codes: 0 success (non-convergence is only flagged), 2 bad input,
3 numerical failure.
"""
import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile

import numpy as np

from qib.anneal import (
    AnnealSchedule, InfoPlanePoint, InfoPlaneTrace, anneal, delta_mem, delta_pred, envelope, prediction_gap,
)
from qib.errors import NumericalError, QIBError
from qib.measures import bounds as problem_bounds, entropy_bits
from qib.problems import BUNDLED, bundled, encode_state, load_problem_file
from qib.solver import CLASSICAL, QUANTUM, MemoryKind, SolverConfig, solve

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3

TRACE_COLUMNS = ("alpha", "d_M", "i_mem_bits", "i_pred_bits", "lagrangian", "s_m_bits", "s_cond_bits", "purity",
                 "conc_in", "conc_out", "discord_in", "discord_out", "converged")

DEFAULTS = {
    "problem": None, "file": None, "memory": None, "dm": None, "alpha": None,
    "alpha_start": 10.0, "alpha_end": 1e-3, "decay": 0.95, "tol": 1e-10, "max_iters": 5000,
    "seed": None, "out": ".", "diagnostics": False, "gnuplot": False,
    "quantum_csv": None, "classical_csv": None, "grid_points": 101,
}


def fmt(x):
    """12 significant digits; missing values as ``nan``."""
    if x is None:
        return "nan"
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12g}"


def atomic_write(path, text):
    """Write via a temporary file in the same directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trace_csv(trace: InfoPlaneTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for p in trace.points:
        w.writerow([fmt(v) for v in (
            p.alpha, p.d_m, p.i_mem, p.i_pred, p.lagrangian, p.s_m, p.s_cond, p.purity,
            p.concurrence_in, p.concurrence_out, p.discord_in, p.discord_out, bool(p.converged))])
    return buf.getvalue()


def _num(s):
    v = float(s)
    return None if math.isnan(v) else v


def read_trace_csv(path, kind, bounds, label="") -> InfoPlaneTrace:
    """Parse a trace CSV written by ``trace`` back into an InfoPlaneTrace."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or tuple(rows[0].keys()) != TRACE_COLUMNS:
        raise QIBError(f"{path}: not a trace CSV (expected columns {', '.join(TRACE_COLUMNS)})")
    pts = []
    for r in rows:
        i_mem = float(r["i_mem_bits"])
        pts.append(InfoPlanePoint(
            alpha=float(r["alpha"]), d_m=int(r["d_M"]), i_mem=i_mem, i_pred=float(r["i_pred_bits"]),
            lagrangian=float(r["lagrangian"]), s_m=float(r["s_m_bits"]), s_cond=float(r["s_cond_bits"]),
            purity=float(r["purity"]), concurrence_in=_num(r["conc_in"]), concurrence_out=_num(r["conc_out"]),
            discord_in=_num(r["discord_in"]), discord_out=_num(r["discord_out"]),
            converged=r["converged"] == "true", error="failed" if math.isnan(i_mem) else None,
        ))
    return InfoPlaneTrace(kind, pts, bounds, label)


def gnuplot_script(label, files):
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set xlabel 'I_mem [bits]'",
        "set ylabel 'I_pred [bits]'",
        f"set title '{label}'",
    ]
    plots = [f"'{os.path.basename(f)}' using 3:4 with linespoints title '{kind}'" for kind, f in files]
    lines.append("plot " + ", ".join(plots))
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# configuration


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--problem", choices=sorted(BUNDLED), help="bundled problem")
    src.add_argument("--file", help="problem JSON file")
    common.add_argument("--config", help="JSON file of option defaults (overridden by flags)")
    common.add_argument("--memory", choices=("quantum", "classical", "both"))
    common.add_argument("--dm", type=int, help="memory dimension (solve)")
    common.add_argument("--alpha", type=float, help="trade-off parameter (solve)")
    common.add_argument("--alpha-start", type=float)
    common.add_argument("--alpha-end", type=float)
    common.add_argument("--decay", type=float)
    common.add_argument("--tol", type=float, help="halting tolerance on L in bits")
    common.add_argument("--max-iters", type=int)
    common.add_argument("--seed", type=int, help="master seed (default: $QIB_SEED or 0)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--diagnostics", action="store_true", default=None,
                        help="compute concurrence and discord along traces")
    common.add_argument("--gnuplot", action="store_true", default=None, help="also write a gnuplot script")
    common.add_argument("--quantum-csv", help="reuse an existing quantum trace CSV (compare)")
    common.add_argument("--classical-csv", help="reuse an existing classical trace CSV (compare)")
    common.add_argument("--grid-points", type=int, help="grid size for compare")
    parser = argparse.ArgumentParser(prog="qib", description="Quantum information bottleneck runner")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="solve at one alpha")
    sub.add_parser("trace", parents=[common], help="anneal and write information-plane CSVs")
    sub.add_parser("compare", parents=[common], help="quantum vs classical advantage")
    sub.add_parser("bounds", parents=[common], help="print information-plane bounds")
    sub.add_parser("validate", parents=[common], help="check a problem definition")
    return parser


def resolve_options(args):
    """Flags > config file > defaults; the seed falls back to $QIB_SEED."""
    opts = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                file_opts = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise QIBError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(file_opts, dict):
            raise QIBError("config file must hold a JSON object")
        unknown = set(k.replace("-", "_") for k in file_opts) - set(DEFAULTS)
        if unknown:
            raise QIBError(f"unknown config keys: {sorted(unknown)}")
        opts.update({k.replace("-", "_"): v for k, v in file_opts.items()})
    for key in DEFAULTS:
        v = getattr(args, key, None)
        if v is not None:
            opts[key] = v
    if opts["problem"] is not None and opts["file"] is not None and not (args.problem or args.file):
        raise QIBError("config gives both 'problem' and 'file'")
    if args.problem:
        opts["file"] = None
    if args.file:
        opts["problem"] = None
    if opts["seed"] is None:
        env = os.environ.get("QIB_SEED")
        try:
            opts["seed"] = int(env) if env not in (None, "") else 0
        except ValueError:
            raise QIBError(f"QIB_SEED must be an integer, got {env!r}") from None
    return opts


def load(opts):
    if opts["file"]:
        return load_problem_file(opts["file"])
    if opts["problem"]:
        return bundled(opts["problem"])
    raise QIBError("give --problem NAME or --file PATH")


def kinds(opts, default):
    m = opts["memory"] or default
    return [QUANTUM, CLASSICAL] if m == "both" else [m]


def solver_config(opts, alpha=1.0):
    return SolverConfig(alpha=alpha, tol_L=opts["tol"], max_iters=opts["max_iters"], seed=opts["seed"])


def schedule(opts):
    return AnnealSchedule(alpha_start=opts["alpha_start"], alpha_end=opts["alpha_end"], decay=opts["decay"])


# --------------------------------------------------------------------------
# commands


def cmd_solve(opts, out=None):
    out = out or sys.stdout
    problem = load(opts)
    if opts["alpha"] is None:
        raise QIBError("solve needs --alpha")
    d_m = opts["dm"] or problem.d_x
    results = []
    for kind in kinds(opts, QUANTUM):
        cfg = solver_config(opts, opts["alpha"])
        sol = solve(problem, MemoryKind(kind, d_m), cfg, with_correlations=opts["diagnostics"])
        doc = {
            "problem": problem.label, "kind": kind, "d_M": sol.d_m, "alpha": opts["alpha"], "seed": opts["seed"],
            "sigma_MR": encode_state(sol.sigma_mr), "report": sol.report.as_dict(),
            "iterations": sol.iterations, "converged": sol.converged, "final_delta_L": _finite(sol.final_delta_L),
            "h_expectation": sol.h_expectation, "fixed_point_residual": _finite(sol.fixed_point_residual),
        }
        path = os.path.join(opts["out"], f"solution_{problem.label}_{kind}.json")
        atomic_write(path, json.dumps(doc, indent=1, sort_keys=True) + "\n")
        r = sol.report
        print(f"{problem.label} {kind} d_M={sol.d_m} alpha={fmt(opts['alpha'])} i_mem={r.i_mem:.6f} "
              f"i_pred={r.i_pred:.6f} L={r.lagrangian:.6f} iterations={sol.iterations} "
              f"converged={str(sol.converged).lower()} -> {path}", file=out)
        results.append(sol)
    return results


def _finite(x):
    return None if x is None or not math.isfinite(x) else float(x)


def cmd_trace(opts, out=None):
    out = out or sys.stdout
    problem = load(opts)
    sched = schedule(opts)
    traces, files = {}, []
    for kind in kinds(opts, "both"):
        tr = anneal(problem, kind, sched, solver_config(opts), diagnostics=opts["diagnostics"])
        path = os.path.join(opts["out"], f"trace_{problem.label}_{kind}.csv")
        atomic_write(path, trace_csv(tr))
        best = tr.best()
        n_conv = sum(p.converged for p in tr.points)
        print(f"{problem.label} {kind}: {len(tr.points)} points ({n_conv} converged), final d_M={tr.points[-1].d_m}, "
              f"max i_pred={best.i_pred:.6f} at i_mem={best.i_mem:.6f} -> {path}", file=out)
        traces[kind] = tr
        files.append((kind, path))
    if opts["gnuplot"]:
        gp = os.path.join(opts["out"], f"trace_{problem.label}.gp")
        atomic_write(gp, gnuplot_script(problem.label, files))
    return traces


def cmd_compare(opts, out=None):
    out = out or sys.stdout
    problem = load(opts)
    b = problem_bounds(problem)
    traces = {}
    for kind in (QUANTUM, CLASSICAL):
        given = opts[f"{kind}_csv"]
        if given:
            traces[kind] = read_trace_csv(given, kind, b, problem.label)
        else:
            traces[kind] = anneal(problem, kind, schedule(opts), solver_config(opts))
    tq, tc = traces[QUANTUM], traces[CLASSICAL]
    n = int(opts["grid_points"])
    mem_grid = np.linspace(0.0, b["mem_max_classical"], n)
    pred_grid = np.linspace(0.0, envelope(tc)[1][-1], n)
    dp = delta_pred(tq, tc, mem_grid)
    dm = delta_mem(tq, tc, pred_grid)
    gap = prediction_gap(tq, tc)
    lines = ["i_mem_bits,delta_pred_bits"] + [f"{fmt(x)},{fmt(y)}" for x, y in zip(mem_grid, dp)]
    p1 = os.path.join(opts["out"], f"delta_pred_{problem.label}.csv")
    atomic_write(p1, "\n".join(lines) + "\n")
    lines = ["i_pred_bits,delta_mem_bits"] + [f"{fmt(x)},{fmt(y)}" for x, y in zip(pred_grid, dm)]
    p2 = os.path.join(opts["out"], f"delta_mem_{problem.label}.csv")
    atomic_write(p2, "\n".join(lines) + "\n")
    print(f"{problem.label}: max delta_pred={float(np.max(dp)):.6f} max delta_mem={float(np.max(dm)):.6f} "
          f"max gap={gap:.6f} -> {p1}, {p2}", file=out)
    return {"delta_pred": dp, "delta_mem": dm, "gap": gap}


def cmd_bounds(opts, out=None):
    out = out or sys.stdout
    problem = load(opts)
    b = problem_bounds(problem)
    print(json.dumps({"problem": problem.label, **{k: round(v, 12) for k, v in b.items()}}, sort_keys=True), file=out)
    return b


def cmd_validate(opts, out=None):
    out = out or sys.stdout
    problem = load(opts)
    print(f"ok: {problem.label} d_X={problem.d_x} d_Y={problem.d_y} S[X]={entropy_bits(problem.rho_x):.6f} bits "
          f"kraus={len(problem.relevance.kraus)}", file=out)
    return problem


COMMANDS = {"solve": cmd_solve, "trace": cmd_trace, "compare": cmd_compare, "bounds": cmd_bounds,
            "validate": cmd_validate}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = resolve_options(args)
        COMMANDS[args.command](opts)
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"qib: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (QIBError, ValueError, OSError) as exc:
        print(f"qib: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
