"""Outer iteration for the indefinite Riccati equation

    A^T X E + E^T X A + E^T X (B1 B1^T - B2 B2^T) X E + C^T C = 0,

as a sequence of definite subproblems whose solutions accumulate
monotonically. A dense driver keeps full matrices; the low-rank driver
keeps only factors and supports constrained (flow-type) problems.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .dae2 import Dae2ShiftedOperator, get_projector
from .errors import (InnerSolverFailure, MaxOuterExceeded, NoConvergence,
                     NoStabilizingSolution, NotStabilizable, ShiftFailure)
from .inner import (bernoulli_feedback, solve_care_dense_sign,
                    solve_care_radi)
from .linalg import (compress_factor, cross_norm, psd_factor,
                     spectral_norm_sym_lowrank)
from .problems import SolverOptions
from .shifted import SparsePlusLowRank

__all__ = ["IterationTrace", "RiResult", "solve_ri_dense", "solve_lrri",
           "solve_care", "check_stabilizability", "outer_residual_metrics"]

log = logging.getLogger("indcare.iteration")

TRACE_COLUMNS = ("step", "final_res", "relative_res", "normalized_res",
                 "rank", "seconds")


@dataclass
class IterationTrace:
    """Per-step convergence record, exportable as CSV or JSON lines."""
    rows: list = field(default_factory=list)

    def append(self, **row) -> None:
        missing = set(TRACE_COLUMNS) - row.keys()
        if missing:
            raise ValueError(f"trace row is missing {sorted(missing)}")
        self.rows.append({k: row[k] for k in TRACE_COLUMNS})

    @property
    def last(self):
        return self.rows[-1] if self.rows else None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS)
            writer.writeheader()
            writer.writerows(self.rows)

    def to_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for row in self.rows:
                fh.write(json.dumps(row) + "\n")


@dataclass
class RiResult:
    """Outcome of an outer iteration. Exactly one of ``x`` (dense) and
    ``z`` (low-rank, X = Z Z^T) is set."""
    x: np.ndarray | None
    z: np.ndarray | None
    steps: int
    converged: bool
    guard: float
    trace: IterationTrace
    metrics: dict
    updates: list = field(default_factory=list)

    @property
    def rank(self) -> int:
        if self.z is not None:
            return self.z.shape[1]
        return self.x.shape[0] if self.x is not None else 0


def check_stabilizability(a, e, b2, tol: float = 1e-10) -> None:
    """Hautus test: every eigenvalue of (A, E) in the closed right half
    plane must be controllable through B2. Dense; raises NotStabilizable.
    """
    a = np.asarray(a.toarray() if hasattr(a, "toarray") else a, dtype=float)
    e = np.asarray(e.toarray() if hasattr(e, "toarray") else e, dtype=float)
    b2 = np.atleast_2d(np.asarray(
        b2.toarray() if hasattr(b2, "toarray") else b2, dtype=float))
    lam = sla.eig(a, e, right=False, check_finite=False)
    lam = lam[np.isfinite(lam)]
    scale = max(1.0, float(np.max(np.abs(lam))) if lam.size else 1.0)
    unstable = [l for l in lam if l.real >= -1e-12 * scale]
    if not unstable:
        return
    if b2.shape[1] == 0:
        raise NotStabilizable(
            "closed-right-half-plane eigenvalues but no stabilizing inputs")
    b2_scale = max(1.0, float(sla.svdvals(b2)[0]))
    for l in unstable:
        m_h = (a - l * e).conj().T
        _, sv, vh = np.linalg.svd(m_h)
        mask = sv <= 1e-8 * max(sv[0], 1e-300)
        ns = vh.conj().T[:, mask]
        if ns.shape[1] == 0:
            ns = vh.conj().T[:, -1:]
        if ns.shape[1] > b2.shape[1]:
            raise NotStabilizable(
                f"eigenvalue {l:.6g} has multiplicity beyond the input rank")
        sv2 = sla.svdvals(b2.T @ ns)
        if sv2.size == 0 or sv2[-1] <= tol * b2_scale:
            raise NotStabilizable(
                f"eigenvalue {l:.6g} is not controllable through B2")


def _base_operator(prob):
    if prob.kind == "dae2":
        return Dae2ShiftedOperator(prob)
    return SparsePlusLowRank(prob.a, prob.e)


def _c_factor(prob):
    """Constant-term factor of the first outer step (n x p)."""
    ct = np.asarray(prob.c, dtype=float).T.copy()
    if prob.kind == "dae2":
        return get_projector(prob).apply_t(ct)
    return ct


def _norm_cc(prob) -> float:
    c = np.atleast_2d(np.asarray(prob.c, dtype=float))
    if c.shape[0] == 0 or c.shape[1] == 0:
        return 0.0
    sv = sla.svdvals(c, check_finite=False)
    return float(sv[0] ** 2)


def outer_residual_metrics(prob, z, op=None) -> dict:
    """Factored residual and norms at X = Z Z^T.

    Never assembles an n x n matrix: the residual 2-norm is read off a
    small eigenproblem of the stacked factor [A^T Z, E^T Z, C^T] with
    the indefinite middle block from the quadratic term.
    """
    z = z.z if hasattr(z, "z") else np.asarray(z, dtype=float)
    # layout changes BLAS summation order, which the cancellation in the
    # stacked Gram amplifies; pin C order so file round-trips reproduce
    z = np.ascontiguousarray(z.reshape(prob.n, -1))
    if op is None:
        op = _base_operator(prob)
    norm_cc = _norm_cc(prob)
    ct = _c_factor(prob)
    r = z.shape[1]
    if r == 0:
        res = norm_cc
        return {"residual_norm": res, "solution_norm": 0.0,
                "relative_res": float("inf") if res > 0 else 0.0,
                "normalized_res": 1.0 if res > 0 else 0.0}
    f1 = op.t_matvec(z)
    f2 = op._et @ z
    zb1 = z.T @ prob.b1
    zb2 = z.T @ prob.b2
    # balance the stiff block against the mass block; the inverse scale
    # goes into the core, so the product is unchanged but the Gram
    # roundoff floor drops from eps*max(|f|)^2 to eps*|f1||f2|
    s1 = np.linalg.norm(f1)
    s2 = np.linalg.norm(f2)
    scale = np.sqrt(s2 / s1) if s1 > 0 and s2 > 0 else 1.0
    p = ct.shape[1]
    core = np.zeros((2 * r + p, 2 * r + p))
    core[:r, r:2 * r] = np.eye(r)
    core[r:2 * r, :r] = np.eye(r)
    core[r:2 * r, r:2 * r] = scale ** 2 * (zb1 @ zb1.T - zb2 @ zb2.T)
    core[2 * r:, 2 * r:] = np.eye(p)
    res = spectral_norm_sym_lowrank(
        np.hstack([f1 * scale, f2 / scale, ct]), core)
    sol = float(sla.svdvals(z, check_finite=False)[0] ** 2)
    return {"residual_norm": res,
            "solution_norm": sol,
            "relative_res": res / sol if sol > 0 else float("inf"),
            "normalized_res": res / norm_cc if norm_cc > 0 else res}


def _inner_tol(options: SolverOptions, normalized_res: float) -> float:
    if options.inner_tol is not None:
        return options.inner_tol
    return max(min(0.1 * options.tau, 1e-2 * normalized_res), 1e-13)


def _trivial_result(prob, dense: bool) -> RiResult:
    trace = IterationTrace()
    trace.append(step=0, final_res=0.0, relative_res=0.0, normalized_res=0.0,
                 rank=0, seconds=0.0)
    x = np.zeros((prob.n, prob.n)) if dense else None
    z = None if dense else np.zeros((prob.n, 0))
    metrics = {"residual_norm": 0.0, "solution_norm": 0.0,
               "relative_res": 0.0, "normalized_res": 0.0}
    return RiResult(x, z, 0, True, 0.0, trace, metrics)


def solve_ri_dense(prob, options: SolverOptions | None = None) -> RiResult:
    """Dense outer iteration; every subproblem is solved by the matrix
    sign function. Intended for problems up to a few thousand unknowns.
    """
    options = options or SolverOptions()
    if prob.kind == "dae2":
        raise ValueError("constrained problems have no dense driver; "
                         "use solve_lrri")
    if prob.n > 2048:
        raise ValueError(f"dense driver refuses n={prob.n} (> 2048)")
    a = prob.a.toarray() if prob.is_sparse else np.asarray(prob.a, float)
    e = prob.e.toarray() if prob.is_sparse else np.asarray(prob.e, float)
    b1 = np.asarray(prob.b1, dtype=float)
    b2 = np.asarray(prob.b2, dtype=float)
    c = np.atleast_2d(np.asarray(prob.c, dtype=float))
    norm_cc = _norm_cc(prob)
    if norm_cc == 0.0:
        return _trivial_result(prob, dense=True)
    base_op = _base_operator(prob)

    check = options.check_stabilizability
    check = True if check is None else check

    x = np.zeros((prob.n, prob.n))
    g_k = c.T.copy()
    trace = IterationTrace()
    updates = []
    metrics = {}
    prev_sol = None
    for k in range(options.max_outer):
        t0 = time.perf_counter()
        a_k = a + (b1 @ (b1.T @ x) - b2 @ (b2.T @ x)) @ e
        if check:
            check_stabilizability(a_k, e, b2)
        try:
            w = solve_care_dense_sign(a_k, e, b2, g_k)
        except (NoConvergence, NoStabilizingSolution) as exc:
            raise InnerSolverFailure(k + 1, exc) from exc
        x = x + w
        x = 0.5 * (x + x.T)
        if options.keep_updates:
            updates.append(w)
        g_k = e.T @ w @ b1
        # guard and metrics are computed from the factors that cmd_solve
        # writes to disk, so cmd_verify reproduces them from files alone
        y_k = psd_factor(w, 1e-12)
        guard = cross_norm(b1.T @ y_k, e.T @ y_k)

        z_k = psd_factor(x, 1e-12)
        metrics = outer_residual_metrics(prob, z_k, base_op)
        sol = metrics["solution_norm"]
        rank = z_k.shape[1]
        trace.append(step=k + 1, final_res=guard ** 2 / norm_cc,
                     relative_res=metrics["relative_res"],
                     normalized_res=metrics["normalized_res"],
                     rank=rank, seconds=time.perf_counter() - t0)
        log.info("outer %d: guard %.3e normalized %.3e rank %d",
                 k + 1, guard, metrics["normalized_res"], rank)
        if prev_sol is not None and sol > options.divergence_factor * prev_sol:
            raise NotStabilizable(
                f"solution norm grew {sol / prev_sol:.1f}x in one step; "
                "the iteration is diverging")
        prev_sol = max(sol, 1e-300)
        if guard < options.tau:
            return RiResult(x, None, k + 1, True, guard, trace, metrics,
                            updates)
    raise MaxOuterExceeded(
        f"no convergence in {options.max_outer} outer steps", trace=trace)


def solve_lrri(prob, options: SolverOptions | None = None) -> RiResult:
    """Low-rank outer iteration: iterates, updates and residuals are all
    kept in factored form; supports standard and constrained problems.
    """
    options = options or SolverOptions()
    n = prob.n
    b1 = np.asarray(prob.b1, dtype=float)
    b2 = np.asarray(prob.b2, dtype=float)
    norm_cc = _norm_cc(prob)
    if norm_cc == 0.0:
        return _trivial_result(prob, dense=False)

    inner = options.inner
    if inner == "auto":
        inner = "sign" if (prob.kind == "standard" and not prob.is_sparse
                           and n <= options.dense_cap) else "radi"
    if inner == "sign" and prob.kind == "dae2":
        raise ValueError("constrained problems require the low-rank inner "
                         "solver (inner='radi')")

    base_op = _base_operator(prob)
    g_k = _c_factor(prob)

    want_bernoulli = options.bernoulli == "always" or (
        options.bernoulli == "auto"
        and not prob.metadata.get("known_stable", False))
    z_init = k_init = None
    if want_bernoulli:
        z_b, k0, n_unst = bernoulli_feedback(prob, options.unstable_cap,
                                             options.dense_cap)
        if n_unst:
            z_init, k_init = z_b, k0
            log.info("stabilizing feedback over %d unstable modes", n_unst)

    check = options.check_stabilizability
    if check is None:
        check = False
    if check and prob.kind == "dae2":
        raise ValueError("the eigenvalue controllability check has no "
                         "constrained variant; disable it for this problem")

    z = np.zeros((n, 0))
    trace = IterationTrace()
    updates = []
    metrics = {}
    normalized_prev = 1.0
    prev_sol = None
    for k in range(options.max_outer):
        t0 = time.perf_counter()
        if z.shape[1]:
            etz = base_op._et @ z
            op_k = base_op.extended(
                np.hstack([b1, -b2]),
                np.hstack([etz @ (z.T @ b1), etz @ (z.T @ b2)]))
        else:
            op_k = base_op
        if check and prob.n <= 2048:
            check_stabilizability(op_k.dense_ak(), prob.e, b2)
        elif check:
            raise ValueError("stabilizability check needs dense assembly; "
                             f"n={prob.n} is too large")
        try:
            if inner == "sign":
                e_d = (prob.e.toarray() if prob.is_sparse
                       else np.asarray(prob.e, float))
                w = solve_care_dense_sign(op_k.dense_ak(), e_d, b2, g_k)
                y = psd_factor(w, options.factor_tol)
                steps_inner = 0
            else:
                res_inner = solve_care_radi(
                    op_k, b2, g_k,
                    k_init=k_init if k == 0 else None,
                    z_init=z_init if k == 0 else None,
                    tol=_inner_tol(options, normalized_prev),
                    max_steps=options.inner_max,
                    shifts=options.shifts,
                    strategy=options.strategy,
                    compression_tol=min(1e-14, options.compression_tol))
                y = res_inner.y
                steps_inner = res_inner.steps
        except (NoConvergence, NoStabilizingSolution, ShiftFailure) as exc:
            raise InnerSolverFailure(k + 1, exc) from exc
        if options.keep_updates:
            updates.append(y)
        guard = cross_norm(b1.T @ y, base_op._et @ y)
        g_k = (base_op._et @ y) @ (y.T @ b1)
        z = y if z.shape[1] == 0 else compress_factor(
            np.hstack([z, y]), options.compression_tol)
        metrics = outer_residual_metrics(prob, z, base_op)
        trace.append(step=k + 1, final_res=guard ** 2 / norm_cc,
                     relative_res=metrics["relative_res"],
                     normalized_res=metrics["normalized_res"],
                     rank=z.shape[1], seconds=time.perf_counter() - t0)
        log.info("outer %d: guard %.3e normalized %.3e rank %d (%d inner)",
                 k + 1, guard, metrics["normalized_res"], z.shape[1],
                 steps_inner)
        normalized_prev = metrics["normalized_res"]
        sol = metrics["solution_norm"]
        if prev_sol is not None and sol > options.divergence_factor * prev_sol:
            raise NotStabilizable(
                f"solution norm grew {sol / prev_sol:.1f}x in one step; "
                "the iteration is diverging")
        prev_sol = max(sol, 1e-300)
        if guard < options.tau:
            return RiResult(None, z, k + 1, True, guard, trace, metrics,
                            updates)
    raise MaxOuterExceeded(
        f"no convergence in {options.max_outer} outer steps", trace=trace)


def solve_care(prob, options: SolverOptions | None = None) -> RiResult:
    """Driver choice by problem shape: dense iteration for small dense
    standard problems, low-rank otherwise."""
    if prob.kind == "standard" and not prob.is_sparse and prob.n <= 2048:
        return solve_ri_dense(prob, options)
    return solve_lrri(prob, options)
