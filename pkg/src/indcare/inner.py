"""Solvers for the definite subproblem produced by each outer step,

    A_k^T W E + E^T W A_k - E^T W B2 B2^T W E + G G^T = 0,

in two flavors: a dense matrix-sign solver for small problems and a
low-rank residual-driven rational iteration for large (sparse or
constrained) ones. Also hosts the partial stabilization that supplies
an initial feedback when A itself is unstable.
"""

from __future__ import annotations

import collections
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (NoConvergence, NoStabilizingSolution, NotStabilizable,
                     ShiftFailure, SingularAugmented, SingularCore,
                     SingularSaddle, SingularShift, StagnationNoConvergence,
                     TooManyUnstable)
from .linalg import compress_factor, spectral_norm_sym_lowrank, thin_qr

__all__ = ["InnerSolveResult", "solve_care_dense_sign", "solve_care_radi",
           "bernoulli_feedback", "definite_residual"]


@dataclass
class InnerSolveResult:
    """Outcome of one inner solve; ``y`` is the factor with W = Y Y^T and
    ``k`` the exit feedback B2^T W E."""
    y: np.ndarray
    k: np.ndarray
    steps: int
    shifts: list
    res_norm: float
    base_norm: float
    converged: bool
    history: list = field(default_factory=list)


# -- dense path --------------------------------------------------------------

def solve_care_dense_sign(a, e, b2, g, tol: float = 1e-12,
                          max_iter: int = 100) -> np.ndarray:
    """Stabilizing solution of the definite equation through the matrix
    sign function of the associated 2n x 2n pencil.

    Determinant scaling accelerates the early sweeps; the solution is
    read off the stable-subspace relation by least squares. Dense only.
    """
    a = np.asarray(a, dtype=float)
    e = np.asarray(e, dtype=float)
    b2 = np.atleast_2d(np.asarray(b2, dtype=float))
    g = np.atleast_2d(np.asarray(g, dtype=float))
    n = a.shape[0]

    k_mat = np.zeros((2 * n, 2 * n))
    k_mat[:n, :n] = e
    k_mat[n:, n:] = e.T
    z = np.zeros_like(k_mat)
    z[:n, :n] = a
    z[:n, n:] = -b2 @ b2.T
    z[n:, :n] = -g @ g.T
    z[n:, n:] = -a.T

    sign_k, ld_k = np.linalg.slogdet(k_mat)
    if sign_k == 0:
        raise NoStabilizingSolution("mass matrix is singular")

    prev_diff = np.inf
    for _ in range(max_iter):
        try:
            lu, piv = sla.lu_factor(z, check_finite=False)
        except sla.LinAlgError as exc:
            raise NoStabilizingSolution(
                "pencil appears to have imaginary-axis eigenvalues") from exc
        diag = np.abs(np.diag(lu))
        if not np.all(diag > 0.0):
            raise NoStabilizingSolution(
                "pencil appears to have imaginary-axis eigenvalues")
        ld_z = float(np.log(diag).sum())
        c = np.exp(np.clip((ld_z - ld_k) / (2 * n), -40.0, 40.0))
        y = sla.lu_solve((lu, piv), k_mat, check_finite=False)
        z_next = 0.5 * (z / c + c * (k_mat @ y))
        diff = np.linalg.norm(z_next - z) / max(np.linalg.norm(z), 1e-300)
        z = z_next
        if diff <= tol:
            break
        if diff < 1e-5 and diff >= prev_diff:
            break
        prev_diff = diff
    else:
        raise NoConvergence(
            f"sign iteration did not settle within {max_iter} sweeps")

    w_mat = z + k_mat
    xe, *_ = np.linalg.lstsq(w_mat[:, n:], -w_mat[:, :n], rcond=None)
    defect = (np.linalg.norm(w_mat[:, n:] @ xe + w_mat[:, :n]) /
              max(np.linalg.norm(w_mat), 1e-300))
    if defect > 1e-6:
        raise NoStabilizingSolution(
            f"stable subspace is inconsistent (defect {defect:.2e})")
    x = np.linalg.solve(e.T, xe.T).T
    return 0.5 * (x + x.T)


def definite_residual(op, y, b2, g) -> float:
    """2-norm of the definite-equation residual at W = Y Y^T, evaluated
    in factored form (never assembling an n x n matrix)."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    g = np.atleast_2d(np.asarray(g, dtype=float))
    b2 = np.atleast_2d(np.asarray(b2, dtype=float))
    r = y.shape[1]
    q = g.shape[1]
    if r == 0 and q == 0:
        return 0.0
    if r == 0:
        return spectral_norm_sym_lowrank(g)
    f1 = op.t_matvec(y)
    f2 = op._et @ y
    yb = y.T @ b2
    core = np.zeros((2 * r + q, 2 * r + q))
    core[:r, r:2 * r] = np.eye(r)
    core[r:2 * r, :r] = np.eye(r)
    core[r:2 * r, r:2 * r] = -(yb @ yb.T)
    core[2 * r:, 2 * r:] = np.eye(q)
    return spectral_norm_sym_lowrank(np.hstack([f1, f2, g]), core)


# -- low-rank path -----------------------------------------------------------

def _res_norm(w) -> float:
    if w.shape[1] == 0:
        return 0.0
    sv = sla.svdvals(w, check_finite=False)
    return float(sv[0] ** 2) if sv.size else 0.0


def _orth(z, rtol: float = 1e-10):
    """Orthonormal basis of the column span, rank-revealing."""
    z = np.atleast_2d(np.asarray(z))
    if z.shape[1] == 0:
        return z
    u, s, _ = sla.svd(z, full_matrices=False, check_finite=False)
    if s.size == 0 or s[0] == 0.0:
        return z[:, :0]
    return u[:, s > rtol * s[0]]


def _projected(op, b2, w, enrich):
    """Galerkin reduction of the transposed closed-loop pencil onto the
    span of the residual factor plus one enrichment block."""
    basis = [w] + [b for b in enrich if b is not None and b.shape[1]]
    u = _orth(np.hstack(basis))
    if u.shape[1] == 0:
        return None
    ap = u.T @ op.t_matvec(u)
    ep = u.T @ (op._et @ u)
    return ap, ep, u.T @ w, u.T @ b2


def _stable_candidates(ap, ep):
    try:
        lam = sla.eig(ap, ep, right=False, check_finite=False)
    except sla.LinAlgError:
        return []
    lam = lam[np.isfinite(lam)]
    cands = [complex(l) for l in lam if l.real < 0.0]
    if not cands:
        cands = [complex(-abs(l.real), l.imag) for l in lam
                 if abs(l.real) > 0.0]
    out, seen = [], set()
    for s in cands:
        s = complex(s.real, abs(s.imag))
        key = (f"{s.real:.10e}", f"{s.imag:.10e}")
        if key not in seen:
            seen.add(key)
            out.append(s)
    return out


def _score_shift(sigma, ap, ep, wp, bp) -> float:
    """Residual norm predicted by one reduced step with this shift."""
    q = wp.shape[1]
    try:
        vp = np.linalg.solve(ap + np.conj(sigma) * ep, wp)
        bv = bp.T @ vp
        s_mat = (-2.0 * sigma.real) * np.linalg.inv(
            np.eye(q) + bv.conj().T @ bv)
    except np.linalg.LinAlgError:
        return np.inf
    w_next = wp + ep @ (vp @ s_mat)
    sv = sla.svdvals(w_next, check_finite=False)
    return float(sv[0]) if sv.size else 0.0


def _fallback_shift(op) -> complex:
    scale = op.norm1_a / max(op.norm1_e, 1e-300)
    return complex(-max(scale, 1e-8))


def _pick_projection_shift(op, b2, w, k, enrich):
    op_c = op.extended(b2, -k.T) if k.size and np.any(k) else op
    blocks = [b for b in enrich if b is not None and b.shape[1]]
    if not blocks:
        cur = op_c.t_matvec(w)
        nrm = np.linalg.norm(cur)
        if nrm > 0.0:
            blocks = [cur / nrm]
    red = _projected(op_c, b2, w, blocks)
    if red is None:
        return _fallback_shift(op)
    ap, ep, wp, bp = red
    cands = _stable_candidates(ap, ep)
    if not cands:
        return _fallback_shift(op)
    scores = [_score_shift(s, ap, ep, wp, bp) for s in cands]
    return cands[int(np.argmin(scores))]


def _heuristic_shifts(op, b2, w, k):
    """One-time shift list from a short power basis, best-scoring first."""
    op_c = op.extended(b2, -k.T) if k.size and np.any(k) else op
    blocks, cur = [w], w
    for _ in range(3):
        cur = op_c.t_matvec(cur)
        nrm = np.linalg.norm(cur)
        if nrm == 0.0:
            break
        cur = cur / nrm
        blocks.append(cur)
    red = _projected(op_c, b2, w, blocks[1:])
    if red is None:
        return [_fallback_shift(op)]
    ap, ep, wp, bp = red
    cands = _stable_candidates(ap, ep)
    if not cands:
        return [_fallback_shift(op)]
    scores = [_score_shift(s, ap, ep, wp, bp) for s in cands]
    order = np.argsort(scores)
    return [cands[i] for i in order]


def solve_care_radi(op, b2, g, *, k_init=None, z_init=None, tol: float = 1e-12,
                    max_steps: int = 400, shifts="projection",
                    strategy: str = "augmented",
                    stagnation_window: int = 20,
                    compression_tol: float = 1e-14) -> InnerSolveResult:
    """Low-rank solve of the definite equation by a residual-driven
    rational iteration.

    ``op`` provides shifted solves with A_k (outer borders already
    attached); the inner feedback enters as one more border pair. A
    complex shift and its conjugate are always applied together, after
    which every tracked quantity is real again. ``z_init``/``k_init``
    seed the iteration with a stabilizing feedback when A_k alone is
    not stable.
    """
    n = op.n
    b2 = np.atleast_2d(np.asarray(b2, dtype=float))
    g = np.atleast_2d(np.asarray(g, dtype=float))
    m2 = b2.shape[1]

    k = (np.zeros((m2, n)) if k_init is None
         else np.array(k_init, dtype=float))
    blocks = []
    if z_init is not None:
        z0 = np.atleast_2d(np.asarray(z_init, dtype=float))
        if z0.shape[1]:
            blocks.append(z0)

    base = _res_norm(g)
    if base == 0.0:
        y = blocks[0] if blocks else np.zeros((n, 0))
        return InnerSolveResult(y, k, 0, [], 0.0, 0.0, True)

    explicit = None
    queue = []
    if not isinstance(shifts, str):
        explicit = [complex(s) for s in shifts]
        if not explicit:
            raise ShiftFailure("empty explicit shift list")
        for s in explicit:
            if s.real >= 0.0:
                raise ShiftFailure(
                    f"explicit shifts need negative real part, got {s}")
    elif shifts == "heuristic":
        queue = list(_heuristic_shifts(op, b2, g, k))
    elif shifts != "projection":
        raise ShiftFailure(f"unknown shift strategy {shifts!r}")

    w = g.copy()
    res = _res_norm(w)
    history = [(0, res)]
    used = []
    vhist = collections.deque(maxlen=4)
    best = res
    since_best = 0
    step = 0
    n_picked = 0

    def apply_pair(sigma, w_in, k_in):
        """One shift (or conjugate pair); returns new (W, K, Z-block)."""
        members = [sigma] if sigma.imag == 0.0 else [sigma, sigma.conjugate()]
        w_c, k_c = w_in, k_in
        vb = []
        for s_m in members:
            op_fb = (op.extended(b2, -k_c.conj().T)
                     if k_c.size and np.any(k_c) else op)
            v = op_fb.solve_shifted(-np.conj(s_m), -w_c, strategy)
            q = w_c.shape[1]
            bv = b2.T @ v
            s_mat = (-2.0 * s_m.real) * np.linalg.inv(
                np.eye(q) + bv.conj().T @ bv)
            s_mat = 0.5 * (s_mat + s_mat.conj().T)
            try:
                l_fac = np.linalg.cholesky(s_mat)
            except np.linalg.LinAlgError as exc:
                raise ShiftFailure(
                    f"step matrix lost definiteness at sigma={s_m}") from exc
            vb.append(v @ l_fac)
            ev = op._et @ v
            w_c = w_c + ev @ s_mat
            k_c = k_c + (bv @ s_mat) @ ev.conj().T
        if sigma.imag == 0.0:
            return np.real(w_c), np.real(k_c), np.real(vb[0])
        blk = np.hstack(vb)
        blk = compress_factor(np.hstack([blk.real, blk.imag]),
                              compression_tol)
        if np.linalg.norm(w_c.imag) <= 1e-12 * np.linalg.norm(w_c.real):
            w_new = np.ascontiguousarray(w_c.real)
        else:
            w_new = compress_factor(np.hstack([w_c.real, w_c.imag]),
                                    compression_tol)
        return w_new, np.real(k_c), blk

    while res > tol * base:
        if step >= max_steps:
            raise NoConvergence(
                f"inner iteration stalled at residual {res:.3e} "
                f"(target {tol * base:.3e}) after {step} shifts")
        if explicit is not None:
            sigma = explicit[n_picked % len(explicit)]
        elif queue:
            sigma = queue[n_picked % len(queue)]
        else:
            sigma = _pick_projection_shift(op, b2, w, k, list(vhist))
        n_picked += 1
        try:
            w, k, blk = apply_pair(sigma, w, k)
        except (SingularShift, SingularAugmented, SingularCore,
                SingularSaddle):
            sigma = complex(1.25 * sigma.real, sigma.imag)
            try:
                w, k, blk = apply_pair(sigma, w, k)
            except (SingularShift, SingularAugmented, SingularCore,
                    SingularSaddle) as exc:
                raise ShiftFailure(
                    f"shifted systems singular near sigma={sigma}") from exc
        blocks.append(blk)
        vhist.append(blk)
        members = 1 if sigma.imag == 0.0 else 2
        step += members
        used.append(sigma)
        if sigma.imag != 0.0:
            used.append(sigma.conjugate())
        res = _res_norm(w)
        history.append((step, res))
        if res < 0.99 * best:
            best = res
            since_best = 0
        else:
            since_best += 1
            if since_best >= stagnation_window:
                raise StagnationNoConvergence(
                    f"residual stuck near {res:.3e} for "
                    f"{stagnation_window} consecutive shifts")
        width = sum(b.shape[1] for b in blocks)
        if width > max(256, n // 2):
            blocks = [compress_factor(np.hstack(blocks), compression_tol)]

    y = (compress_factor(np.hstack(blocks), compression_tol) if blocks
         else np.zeros((n, 0)))
    return InnerSolveResult(y, np.real(k), step, used, res, base, True,
                            history)


# -- partial stabilization ---------------------------------------------------

def _realify_modes(lam, vecs, tol_axis):
    """Real basis for the span of the selected unstable eigenvectors."""
    cols = []
    handled = set()
    for i, l in enumerate(lam):
        if i in handled:
            continue
        v = vecs[:, i]
        if abs(l.imag) <= tol_axis:
            j = int(np.argmax(np.abs(v)))
            phase = v[j] / abs(v[j]) if v[j] != 0 else 1.0
            cols.append((v / phase).real[:, None])
        else:
            cols.append(v.real[:, None])
            cols.append(v.imag[:, None])
            for j2, l2 in enumerate(lam):
                if j2 > i and abs(l2 - np.conj(l)) <= 1e-8 * max(1.0, abs(l)):
                    handled.add(j2)
                    break
    return np.hstack(cols) if cols else None


def _unstable_left_standard(prob, cap, dense_cap):
    """Orthonormal P and small S with A^T P = E^T P S over the unstable
    left invariant subspace of (A, E)."""
    n = prob.n
    at = prob.a.T
    et = prob.e.T
    if n <= dense_cap:
        at_d = at.toarray() if sp.issparse(at) else np.asarray(at, float)
        et_d = et.toarray() if sp.issparse(et) else np.asarray(et, float)
        lam, vecs = sla.eig(at_d, et_d, check_finite=False)
        finite = np.isfinite(lam)
        lam, vecs = lam[finite], vecs[:, finite]
        scale = max(1.0, float(np.max(np.abs(lam))) if lam.size else 1.0)
        sel = lam.real > 1e-12 * scale
        lam, vecs = lam[sel], vecs[:, sel]
    else:
        c = min(max(prob_norm_ratio(prob) * 0.1, 1e-3), 1e3)
        at_c = at.tocsc() if sp.issparse(at) else sp.csc_matrix(at)
        et_c = et.tocsc() if sp.issparse(et) else sp.csc_matrix(et)
        lu = spla.splu((c * et_c - at_c).tocsc())
        shape = (n, n)

        def mv(x):
            return lu.solve(c * (et_c @ x) + at_c @ x)

        k_ask = min(cap + 4, n - 2)
        try:
            mu, vecs = spla.eigs(spla.LinearOperator(shape, matvec=mv),
                                 k=k_ask, which="LM", tol=1e-10)
        except spla.ArpackNoConvergence as exc:
            raise NoConvergence(
                "unstable-mode scan did not converge; raise dense_cap to "
                "use the dense path") from exc
        keep = np.abs(mu) > 1.0 + 1e-9
        mu = mu[keep]
        vecs = vecs[:, keep]
        lam = c * (mu - 1.0) / (mu + 1.0)
        if lam.size >= k_ask - 1:
            raise TooManyUnstable(
                f"at least {lam.size} unstable modes; cap is {cap}")
    if lam.size > cap:
        raise TooManyUnstable(f"{lam.size} unstable modes exceed cap {cap}")
    if lam.size == 0:
        return None, None
    scale = max(1.0, float(np.max(np.abs(lam))))
    p_raw = _realify_modes(lam, vecs, 1e-10 * scale)
    p = _orth(p_raw)
    etp = et @ p
    atp = at @ p
    s_small, *_ = np.linalg.lstsq(etp, atp, rcond=None)
    defect = np.linalg.norm(atp - etp @ s_small) / max(np.linalg.norm(atp),
                                                       1e-300)
    if defect > 1e-6:
        raise NotStabilizable(
            f"unstable subspace extraction failed (defect {defect:.2e})")
    return p, s_small


def prob_norm_ratio(prob) -> float:
    from .shifted import _norm1
    return _norm1(prob.a) / max(_norm1(prob.e), 1e-300)


def _unstable_left_dae2(prob, cap, dense_cap):
    """Same contract as the standard scan, on the constrained pencil;
    P spans unstable left modes inside the constraint kernel."""
    from .dae2 import get_projector
    n = prob.n
    n_c = prob.n_c
    at = prob.a.T.tocsc()
    et = prob.e.T.tocsc()
    jt = prob.j.T.tocsc()
    pi = get_projector(prob)
    msad = sp.bmat([[at, jt], [prob.j, None]], format="csc")
    esad = sp.bmat([[et, sp.csc_matrix((n, n_c))],
                    [sp.csc_matrix((n_c, n)), sp.csc_matrix((n_c, n_c))]],
                   format="csc")
    if n + n_c <= dense_cap:
        lam, vecs = sla.eig(msad.toarray(), esad.toarray(),
                            check_finite=False)
        finite = np.isfinite(lam)
        lam, vecs = lam[finite], vecs[:n, finite]
        scale = max(1.0, float(np.max(np.abs(lam))) if lam.size else 1.0)
        sel = lam.real > 1e-12 * scale
        lam, vecs = lam[sel], vecs[:, sel]
    else:
        c = min(max(prob_norm_ratio(prob) * 0.1, 1e-3), 1e3)
        lu = spla.splu((c * esad - msad).tocsc())

        def mv(x):
            return lu.solve(c * (esad @ x) + msad @ x)

        k_ask = min(cap + 4, n + n_c - 2)
        try:
            mu, vs = spla.eigs(
                spla.LinearOperator((n + n_c, n + n_c), matvec=mv),
                k=k_ask, which="LM", tol=1e-10)
        except spla.ArpackNoConvergence as exc:
            raise NoConvergence(
                "unstable-mode scan did not converge; raise dense_cap to "
                "use the dense path") from exc
        keep = np.abs(mu) > 1.0 + 1e-9
        mu = mu[keep]
        vecs = vs[:n, keep]
        lam = c * (mu - 1.0) / (mu + 1.0)
        if lam.size >= k_ask - 1:
            raise TooManyUnstable(
                f"at least {lam.size} unstable modes; cap is {cap}")
    if lam.size > cap:
        raise TooManyUnstable(f"{lam.size} unstable modes exceed cap {cap}")
    if lam.size == 0:
        return None, None
    scale = max(1.0, float(np.max(np.abs(lam))))
    p_raw = _realify_modes(lam, vecs, 1e-10 * scale)
    p = _orth(pi.apply(p_raw))
    etp = prob.e.T @ p
    atp = pi.apply_t(prob.a.T @ p)
    s_small, *_ = np.linalg.lstsq(etp, atp, rcond=None)
    defect = np.linalg.norm(atp - etp @ s_small) / max(np.linalg.norm(atp),
                                                       1e-300)
    if defect > 1e-6:
        raise NotStabilizable(
            f"unstable subspace extraction failed (defect {defect:.2e})")
    return p, s_small


def bernoulli_feedback(prob, unstable_cap: int = 32, dense_cap: int = 600):
    """Partial stabilization through the unstable modes only.

    Returns (Z_B, K0, count): X_B = Z_B Z_B^T solves the Bernoulli
    equation on the unstable subspace, K0 = B2^T X_B E, and the closed
    loop A - B2 K0 mirrors every unstable eigenvalue into the left half
    plane. A stable plant yields an empty factor and zero feedback.
    """
    n, m2 = prob.n, prob.m2
    if prob.kind == "dae2":
        p, s_small = _unstable_left_dae2(prob, unstable_cap, dense_cap)
    else:
        p, s_small = _unstable_left_standard(prob, unstable_cap, dense_cap)
    if p is None:
        return np.zeros((n, 0)), np.zeros((m2, n)), 0
    bhat = p.T @ prob.b2
    # A^T P = E^T P S, so X_B = P Y^-1 P^T needs S^T Y + Y S = Bh Bh^T
    y = sla.solve_continuous_lyapunov(s_small.T, bhat @ bhat.T)
    y = 0.5 * (y + y.T)
    lam = sla.eigvalsh(y, check_finite=False)
    if lam.size == 0 or lam[0] <= 1e-13 * max(lam[-1], 0.0) or lam[-1] <= 0:
        raise NotStabilizable(
            "unstable dynamics are not reachable through the stabilizing "
            "inputs")
    xhat = sla.cho_solve((np.linalg.cholesky(y), True), np.eye(p.shape[1]))
    xhat = 0.5 * (xhat + xhat.T)
    z_b = p @ np.linalg.cholesky(xhat)
    etp = prob.e.T @ p
    k0 = (bhat.T @ xhat) @ etp.T
    return z_b, k0, p.shape[1]
