"""Command-line entry points: solve, bench, verify, gen.

Exit codes: 0 success, 2 not stabilizable, 3 no convergence or failed
verification, 4 bad input. Set RICCATI_LOG=debug|info|warning to
control logging.
"""

from __future__ import annotations

import argparse
import concurrent.futures as cf
import dataclasses
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from . import __version__
from .errors import (IndcareError, InnerSolverFailure, MaxOuterExceeded,
                     NoConvergence, NoStabilizingSolution, NotStabilizable,
                     TooManyUnstable)
from .iteration import outer_residual_metrics, solve_lrri, solve_ri_dense
from .linalg import cross_norm, psd_factor
from .mmio import read_matrix, write_matrix
from .problems import (SolverOptions, gen_heat_fd, gen_random_care,
                       gen_stokes_dae2, load_problem, save_problem)

log = logging.getLogger("indcare.cli")


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, InnerSolverFailure):
        exc = exc.cause
    if isinstance(exc, (NotStabilizable, NoStabilizingSolution,
                        TooManyUnstable)):
        return 2
    if isinstance(exc, (NoConvergence, MaxOuterExceeded)):
        return 3
    return 4


def _options_from_args(args) -> SolverOptions:
    shifts = args.shifts
    if shifts not in ("projection", "heuristic"):
        shifts = [complex(s) for s in shifts.split(",") if s.strip()]
    return SolverOptions(tau=args.tau, max_outer=args.max_outer,
                         inner=args.inner, strategy=args.strategy,
                         shifts=shifts, keep_updates=True)


def _run_solve(manifest: str, outdir: Path, options: SolverOptions,
               driver: str) -> dict:
    prob = load_problem(manifest)
    if driver == "auto":
        dense = (prob.kind == "standard" and not prob.is_sparse
                 and prob.n <= 2048)
    else:
        dense = driver == "dense"
    t0 = time.perf_counter()
    result = solve_ri_dense(prob, options) if dense else solve_lrri(prob,
                                                                    options)
    seconds = time.perf_counter() - t0

    outdir.mkdir(parents=True, exist_ok=True)
    z = result.z if result.z is not None else psd_factor(result.x, 1e-12)
    write_matrix(outdir / "z_final.mtx", z, comment="solution factor")
    if result.updates:
        y_last = result.updates[-1]
        if y_last.ndim == 2 and y_last.shape[0] == y_last.shape[1]:
            y_last = psd_factor(y_last, 1e-12)
        write_matrix(outdir / "y_final.mtx", y_last,
                     comment="last update factor")
    result.trace.to_csv(outdir / "trace.csv")
    result.trace.to_jsonl(outdir / "trace.jsonl")

    opts_json = dataclasses.asdict(options)
    if not isinstance(opts_json["shifts"], str):
        opts_json["shifts"] = [str(s) for s in opts_json["shifts"]]
    summary = {
        "manifest": str(manifest),
        "kind": prob.kind,
        "n": prob.n,
        "driver": "dense" if dense else "lowrank",
        "steps": result.steps,
        "converged": result.converged,
        "guard": result.guard,
        "rank": result.rank if result.z is not None else int(z.shape[1]),
        "seconds": seconds,
        "metrics": result.metrics,
        "options": opts_json,
        "versions": {"indcare": __version__, "numpy": np.__version__},
    }
    with open(outdir / "run.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return summary


def cmd_solve(args) -> int:
    outdir = Path(args.out)
    summary = _run_solve(args.manifest, outdir, _options_from_args(args),
                         args.driver)
    met = summary["metrics"]
    print(f"converged in {summary['steps']} steps: rank {summary['rank']}, "
          f"guard {summary['guard']:.3e}, "
          f"normalized residual {met['normalized_res']:.3e} "
          f"({summary['seconds']:.2f}s)")
    print(f"outputs in {outdir}")
    return 0


def _bench_one(payload):
    manifest, out_base, opts_dict, driver = payload
    options = SolverOptions(**opts_dict)
    name = Path(manifest).stem
    t0 = time.perf_counter()
    try:
        summary = _run_solve(manifest, Path(out_base) / name, options, driver)
        met = summary["metrics"]
        return {"name": name, "kind": summary["kind"], "n": summary["n"],
                "status": "ok", "steps": summary["steps"],
                "rank": summary["rank"], "guard": summary["guard"],
                "normalized_res": met["normalized_res"],
                "seconds": summary["seconds"]}
    except (IndcareError, ValueError, OSError) as exc:
        return {"name": name, "kind": "?", "n": 0,
                "status": f"error({type(exc).__name__})", "steps": 0,
                "rank": 0, "guard": float("nan"),
                "normalized_res": float("nan"),
                "seconds": time.perf_counter() - t0}


def cmd_bench(args) -> int:
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    opts_dict = dataclasses.asdict(_options_from_args(args))
    payloads = [(m, str(outdir), opts_dict, args.driver)
                for m in args.manifest]
    if args.threads > 1 and len(payloads) > 1:
        with cf.ProcessPoolExecutor(max_workers=args.threads) as pool:
            rows = list(pool.map(_bench_one, payloads))
    else:
        rows = [_bench_one(p) for p in payloads]

    cols = ["name", "kind", "n", "status", "steps", "rank", "guard",
            "normalized_res", "seconds"]
    import csv as _csv
    with open(outdir / "bench.csv", "w", newline="") as fh:
        writer = _csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        writer.writerows(rows)
    with open(outdir / "bench.json", "w") as fh:
        json.dump(rows, fh, indent=2)
    for row in rows:
        print(f"{row['name']:24s} {row['status']:10s} steps={row['steps']:3d} "
              f"rank={row['rank']:4d} normalized={row['normalized_res']:.3e} "
              f"{row['seconds']:.2f}s")
    # failed rows are isolated in the table; the suite itself succeeded
    return 0


def cmd_verify(args) -> int:
    prob = load_problem(args.manifest)
    rundir = Path(args.dir)
    z = np.asarray(read_matrix(rundir / "z_final.mtx"), dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    met = outer_residual_metrics(prob, z)

    rows = []
    with open(rundir / "trace.csv") as fh:
        import csv as _csv
        rows = list(_csv.DictReader(fh))
    if not rows:
        print("trace.csv is empty", file=sys.stderr)
        return 4
    last = rows[-1]
    norm_cc = float(sla.svdvals(np.atleast_2d(prob.c))[0] ** 2)
    ok = True

    def compare(label, fresh, recorded, floor=0.0):
        nonlocal ok
        denom = max(abs(fresh), abs(recorded), 1e-300)
        rel = abs(fresh - recorded) / denom
        good = rel <= args.rtol or abs(fresh - recorded) <= floor
        ok = ok and good
        print(f"{label:16s} recomputed={fresh:.12e} "
              f"recorded={recorded:.12e} rel={rel:.2e} "
              f"{'OK' if good else 'FAIL'}")

    compare("relative_res", met["relative_res"], float(last["relative_res"]))
    compare("normalized_res", met["normalized_res"],
            float(last["normalized_res"]))

    y_path = rundir / "y_final.mtx"
    if y_path.exists():
        y = np.asarray(read_matrix(y_path), dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        guard = cross_norm(prob.b1.T @ y, prob.e.T @ y)
        compare("final_res", guard ** 2 / norm_cc, float(last["final_res"]))

    if prob.kind == "standard" and prob.n <= args.dense_cap:
        a = prob.a.toarray() if prob.is_sparse else np.asarray(prob.a, float)
        e = prob.e.toarray() if prob.is_sparse else np.asarray(prob.e, float)
        x = z @ z.T
        resid = (a.T @ x @ e + e.T @ x @ a +
                 e.T @ x @ (prob.b1 @ (prob.b1.T @ x)
                            - prob.b2 @ (prob.b2.T @ x)) @ e
                 + prob.c.T @ prob.c)
        dense_norm = float(sla.svdvals(resid)[0])
        # the two evaluations share a rounding floor set by the term norms;
        # below it a relative comparison would flag pure noise
        na, ne, nx = (float(sla.svdvals(m)[0]) for m in (a, e, x))
        nb = (np.linalg.norm(prob.b1, 2) ** 2
              + np.linalg.norm(prob.b2, 2) ** 2)
        floor = 64 * np.finfo(float).eps * (
            2 * na * nx * ne + ne ** 2 * nx ** 2 * nb + norm_cc)
        compare("residual_norm", met["residual_norm"], dense_norm,
                floor=floor)

    print("verification " + ("passed" if ok else "FAILED"))
    return 0 if ok else 3


def cmd_gen(args) -> int:
    # each generator carries its own tuned default disturbance weight
    gkw = {} if args.gamma is None else {"gamma": args.gamma}
    if args.kind == "random":
        prob = gen_random_care(args.n, args.m1, args.m2, args.p,
                               seed=args.seed,
                               n_unstable=args.n_unstable, **gkw)
    elif args.kind == "heat":
        prob = gen_heat_fd(args.n, args.m1, args.m2, args.p, **gkw)
    else:
        prob = gen_stokes_dae2(args.grid, m1=args.m1, m2=args.m2, p=args.p,
                               nu=args.nu, convection=args.convection,
                               n_unstable=args.n_unstable, seed=args.seed,
                               **gkw)
    name = args.name or f"{args.kind}_{prob.n}"
    path = save_problem(prob, args.out, name)
    print(path)
    return 0


def _add_solver_flags(p) -> None:
    p.add_argument("--tau", type=float, default=1e-9,
                   help="outer stopping threshold on the update coupling")
    p.add_argument("--inner", choices=("auto", "sign", "radi"),
                   default="auto", help="inner equation solver")
    p.add_argument("--strategy", choices=("augmented", "smw"),
                   default="augmented", help="shifted-solve strategy")
    p.add_argument("--shifts", default="projection",
                   help="projection, heuristic, or comma-separated values")
    p.add_argument("--max-outer", type=int, default=50)
    p.add_argument("--driver", choices=("auto", "dense", "lowrank"),
                   default="auto")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="indcare",
        description="Riccati equations with an indefinite quadratic term: "
                    "dense and low-rank solvers")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one problem from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default="indcare_run")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="solve several manifests, tabulate")
    p.add_argument("--manifest", required=True, nargs="+")
    p.add_argument("--out", default="indcare_bench")
    p.add_argument("--threads", type=int, default=1,
                   help="solve manifests in this many processes")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("verify",
                       help="recompute residuals for a finished run")
    p.add_argument("--manifest", required=True)
    p.add_argument("--dir", required=True, help="output directory of solve")
    p.add_argument("--rtol", type=float, default=1e-8)
    p.add_argument("--dense-cap", type=int, default=400,
                   help="assemble the dense residual up to this size")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gen", help="write a generated problem to disk")
    p.add_argument("--kind", choices=("random", "heat", "stokes"),
                   required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--name", default=None)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--grid", type=int, default=10)
    p.add_argument("--m1", type=int, default=2)
    p.add_argument("--m2", type=int, default=2)
    p.add_argument("--p", type=int, default=4)
    p.add_argument("--gamma", type=float, default=None,
                   help="disturbance weight (default: generator's own)")
    p.add_argument("--nu", type=float, default=1.0)
    p.add_argument("--convection", type=float, default=0.0)
    p.add_argument("--n-unstable", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen)
    return ap


def main(argv=None) -> int:
    level = os.environ.get("RICCATI_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(name)s %(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (IndcareError, ValueError, OSError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
