"""Command line interface: ``krecycle {check, solve-gl, bench-recycle}``.

Exit codes: 0 success, 1 invariant failure, 2 configuration error,
3 Newton divergence.  ``KRECYCLE_LOG`` (error, info, debug) sets the verbosity.
"""
import argparse
import concurrent.futures
import json
import logging
import os
import sys
import threading
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import __version__
from .checks import FAULTS, run_checks
from .errors import ConfigError, DivergenceError, InputError, KrecycleError, ParseError
from .gl.mesh import build_disk_mesh
from .gl.meshio import load_mesh, read_state_json, write_density_csv, write_state_json
from .gl.newton import DeflationMode, NewtonConfig, newton_solve, parse_deflation
from .gl.system import GLSystem, build_preconditioner, dipole_potential
from .recycler import RecycleConfig, RecyclingMinres, SequenceItem
from .svg import line_chart

log = logging.getLogger("krecycle")

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG, EXIT_DIVERGENCE = 0, 1, 2, 3
BENCH_D_VALUES = (0, 1, 2, 4, 8, 12, 16, 24)
_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


@dataclass
class RunConfig:
    """Validated command line settings."""
    command: str
    mesh: str = "disk:5:0.2"
    deflation: DeflationMode = DeflationMode()
    tol: float = 1e-10
    newton_tol: float = 1e-10
    out: Optional[str] = None
    seed: int = 0
    threads: int = 1
    psi0: str = "cos-pi-y"
    magnetic_field: str = "dipole"
    max_steps: int = 50
    precondition: bool = True
    d_values: List[int] = field(default_factory=lambda: list(BENCH_D_VALUES))
    inject_fault: Optional[str] = None

    def __post_init__(self):
        if not (self.tol > 0 and self.newton_tol > 0):
            raise ConfigError("tolerances must be positive")
        if self.threads < 1:
            raise ConfigError("--threads must be at least 1")
        if self.max_steps < 1:
            raise ConfigError("--max-steps must be at least 1")
        if self.magnetic_field not in ("dipole", "none"):
            raise ConfigError(f"unknown field {self.magnetic_field!r}")
        if any(d < 0 for d in self.d_values) or not self.d_values:
            raise ConfigError("--d-values must be non-negative integers")
        if self.inject_fault is not None and self.inject_fault not in FAULTS:
            raise ConfigError(f"unknown fault {self.inject_fault!r}")


def _positive_float(text):
    try:
        val = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not val > 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return val


def build_parser():
    parser = argparse.ArgumentParser(prog="krecycle", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="run the invariant battery")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="directory for check_report.json")
    p.add_argument("--inject-fault", help=argparse.SUPPRESS)

    for name, helptext in (("solve-gl", "Newton solve of the Ginzburg-Landau problem"),
                           ("bench-recycle", "wall time of recycling versus d")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--mesh", default="disk:5:0.2",
                       help="disk:radius:h or a .msh/.json file (default disk:5:0.2)")
        p.add_argument("--deflate", default="aux" if name == "bench-recycle" else "none",
                       help="none | aux | ritz:d[:strategy] | ritz+aux:d[:strategy]")
        p.add_argument("--tol", type=_positive_float, default=1e-10,
                       help="relative MINRES tolerance")
        p.add_argument("--newton-tol", type=_positive_float, default=1e-10)
        p.add_argument("--out", default="krecycle-out")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--psi0", default="cos-pi-y",
                       help="cos-pi-y, one, or a state JSON file")
        p.add_argument("--field", default="dipole", choices=("dipole", "none"))
        p.add_argument("--max-steps", type=int, default=50)
        p.add_argument("--no-precondition", action="store_true")
        if name == "bench-recycle":
            p.add_argument("--d-values", default=",".join(map(str, BENCH_D_VALUES)))
    return parser


def config_from_args(args) -> RunConfig:
    kw = dict(command=args.command, seed=args.seed, out=args.out)
    if args.command == "check":
        kw["inject_fault"] = args.inject_fault
        return RunConfig(**kw)
    kw.update(mesh=args.mesh, deflation=parse_deflation(args.deflate), tol=args.tol,
              newton_tol=args.newton_tol, threads=args.threads, psi0=args.psi0,
              magnetic_field=args.field, max_steps=args.max_steps,
              precondition=not args.no_precondition)
    if args.command == "bench-recycle":
        try:
            kw["d_values"] = [int(v) for v in args.d_values.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"invalid --d-values {args.d_values!r}") from None
    return RunConfig(**kw)


def make_mesh(source):
    """``disk:radius:h`` or a mesh file."""
    if source.startswith("disk"):
        parts = source.split(":")
        if len(parts) != 3:
            raise ConfigError(f"mesh spec must be disk:radius:h, got {source!r}")
        try:
            radius, h = float(parts[1]), float(parts[2])
        except ValueError:
            raise ConfigError(f"invalid disk parameters in {source!r}") from None
        return build_disk_mesh(radius, h)
    if not os.path.exists(source):
        raise ConfigError(f"mesh file not found: {source}")
    return load_mesh(source)


def initial_state(source, mesh):
    if source == "cos-pi-y":
        return np.cos(np.pi * mesh.points[:, 1]).astype(complex)
    if source == "one":
        return np.ones(mesh.n_nodes, dtype=complex)
    if os.path.exists(source):
        psi = read_state_json(source)
        if psi.shape != (mesh.n_nodes,):
            raise ConfigError(f"state has {psi.size} values, mesh has {mesh.n_nodes} nodes")
        return psi
    raise ConfigError(f"unknown initial state {source!r}")


def make_system(cfg: RunConfig):
    mesh = make_mesh(cfg.mesh)
    if mesh.n_negative_alpha:
        log.info("mesh has %d edges with negative coefficient (not Delaunay)",
                 mesh.n_negative_alpha)
    potential = dipole_potential() if cfg.magnetic_field == "dipole" else None
    return GLSystem(mesh, potential)


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def _cell(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _json_dump(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_check(cfg: RunConfig):
    results = run_checks(seed=cfg.seed, fault=cfg.inject_fault)
    failed = [r for r in results if not r.passed]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.module}/{r.invariant}: violation {r.violation:.3e} (tol {r.tol:.1e})")
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
        _json_dump({"seed": cfg.seed, "results": [r.as_dict() for r in results],
                    "failed": len(failed)}, os.path.join(cfg.out, "check_report.json"))
    if failed:
        print(f"{len(failed)} invariant(s) failed: "
              + ", ".join(f"{r.module}/{r.invariant}" for r in failed))
        return EXIT_INVARIANT
    print(f"all {len(results)} invariants hold")
    return EXIT_OK


def cmd_solve_gl(cfg: RunConfig):
    system = make_system(cfg)
    psi0 = initial_state(cfg.psi0, system.mesh)
    ncfg = NewtonConfig(tol=cfg.newton_tol, max_steps=cfg.max_steps, linear_tol=cfg.tol,
                        deflation=cfg.deflation, precondition=cfg.precondition)
    log.info("solve-gl: %r, deflation %s", system.mesh, cfg.deflation.label)
    try:
        report = newton_solve(system, psi0, ncfg)
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    out = cfg.out
    os.makedirs(out, exist_ok=True)
    _write_csv(os.path.join(out, "newton_history.csv"), ["step", "residual_norm"],
               list(enumerate(report.residuals)))
    for k, rep in enumerate(report.linear, start=1):
        _write_csv(os.path.join(out, f"minres_history_{k}.csv"),
                   ["iteration", "relative_residual"], list(enumerate(rep.solve.resnorms)))
    write_state_json(report.psi, os.path.join(out, "state.json"))
    write_density_csv(system.mesh, report.psi, os.path.join(out, "density.csv"))
    counts = {"A": 0, "Minv": 0, "M": 0}
    model = {"A": 0, "Minv": 0, "M": 0}
    for rep in report.linear:
        for key in counts:
            counts[key] += rep.totals[key]
            model[key] += rep.model_totals[key]
    summary = {
        "mesh": {"nodes": system.mesh.n_nodes, "cells": int(system.mesh.cells.shape[0]),
                 "negative_alpha_edges": system.mesh.n_negative_alpha},
        "deflation": cfg.deflation.label,
        "converged": report.converged,
        "newton_steps": report.steps,
        "newton_residuals": [float(v) for v in report.residuals],
        "minres_iterations": report.minres_iterations,
        "minres_total": int(sum(report.minres_iterations)),
        "minres_converged": [bool(r.solve.converged) for r in report.linear],
        "deflation_dims": [int(r.d) for r in report.linear],
        "counts": counts,
        "model_counts": model,
        "counts_match": all(r.counts_match for r in report.linear),
    }
    _json_dump(summary, os.path.join(out, "summary.json"))
    timings = {"newton_wall_time": report.wall_time,
               "minres_wall_times": [r.solve.wall_time for r in report.linear],
               "phases": [r.timings for r in report.linear]}
    _json_dump(timings, os.path.join(out, "timings.json"))
    line_chart([(f"step {k}", range(len(r.solve.resnorms)), r.solve.resnorms)
                for k, r in enumerate(report.linear, start=1)],
               os.path.join(out, "minres_history.svg"), title="MINRES residuals",
               xlabel="MINRES iteration", ylabel="relative residual", logy=True)
    line_chart([("||S||", range(len(report.residuals)), report.residuals)],
               os.path.join(out, "newton_history.svg"), title="Newton residual",
               xlabel="Newton step", ylabel="||S(psi)||", logy=True)
    print(f"Newton {'converged' if report.converged else 'did not converge'} after "
          f"{report.steps} steps, {summary['minres_total']} MINRES iterations")
    if not summary["counts_match"]:
        print("operator counts deviate from the cost model", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def _bench_one(states, system, cfg: RunConfig, d):
    """Replay the Newton systems at the recorded states with ``d`` Ritz vectors."""
    mode = cfg.deflation
    driver = RecyclingMinres(RecycleConfig(d_max=d, strategy=mode.strategy, tol=cfg.tol,
                                           max_iter=5000), system.ip)
    rows = []
    for psi in states:
        J = system.jacobian(psi)
        if cfg.precondition:
            M, Minv = build_preconditioner(system, psi)
        else:
            M = Minv = None
        Y = (1j * psi)[:, None] if mode.aux else None
        t0 = time.perf_counter()
        _, rep = driver.solve(SequenceItem(J, -system.residual(psi), Minv=Minv, M=M, Y=Y))
        rows.append((time.perf_counter() - t0, rep.solve.iterations, rep.counts_match))
    return rows


def cmd_bench_recycle(cfg: RunConfig):
    system = make_system(cfg)
    psi0 = initial_state(cfg.psi0, system.mesh)
    base = DeflationMode(aux=cfg.deflation.aux, strategy=cfg.deflation.strategy)
    try:
        report = newton_solve(system, psi0, NewtonConfig(
            tol=cfg.newton_tol, max_steps=cfg.max_steps, linear_tol=cfg.tol, deflation=base,
            precondition=cfg.precondition))
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    # the Newton states are fixed so that every d solves the same sequence
    states = report.states
    d_values = sorted(set(cfg.d_values) | {0})
    lock = threading.Lock()
    results = {}

    def work(d):
        rows = _bench_one(states, system, cfg, d)
        with lock:
            results[d] = rows

    with concurrent.futures.ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        list(pool.map(work, d_values))
    T0 = [r[0] for r in results[0]]
    table = []
    agg = {}
    for d in d_values:
        times = [r[0] for r in results[d]]
        for k, (t, its, _) in enumerate(results[d], start=1):
            table.append((k, d, its, t, t / T0[k - 1]))
        agg[d] = sum(times) / sum(T0)
    os.makedirs(cfg.out, exist_ok=True)
    _write_csv(os.path.join(cfg.out, "efficiency.csv"),
               ["step", "d", "minres_iterations", "wall_time", "ratio"], table)
    _write_csv(os.path.join(cfg.out, "efficiency_aggregate.csv"),
               ["d", "ratio", "minres_total"],
               [(d, agg[d], sum(r[1] for r in results[d])) for d in d_values])
    series = [(f"step {k}", d_values, [results[d][k - 1][0] / T0[k - 1] for d in d_values])
              for k in range(1, len(states) + 1)]
    series.append(("aggregate", d_values, [agg[d] for d in d_values]))
    line_chart(series, os.path.join(cfg.out, "efficiency.svg"), title="T_d / T_0",
               xlabel="d", ylabel="T_d / T_0")
    best = min(d_values, key=lambda d: agg[d])
    print(f"aggregate T_d/T_0 minimal at d = {best} ({agg[best]:.3f})")
    if not all(r[2] for d in d_values for r in results[d]):
        return EXIT_INVARIANT
    return EXIT_OK


COMMANDS = {"check": cmd_check, "solve-gl": cmd_solve_gl, "bench-recycle": cmd_bench_recycle}


def setup_logging():
    level_name = os.environ.get("KRECYCLE_LOG", "error").lower()
    if level_name not in _LOG_LEVELS:
        raise ConfigError(f"KRECYCLE_LOG must be one of {sorted(_LOG_LEVELS)}, got {level_name!r}")
    logging.basicConfig(level=_LOG_LEVELS[level_name], format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        setup_logging()
        cfg = config_from_args(args)
        return COMMANDS[cfg.command](cfg)
    except (ConfigError, ParseError, InputError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except KrecycleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
