"""Discrete projection and shifted solves for constrained (flow-type) problems.

The projector Pi = I - E^{-1} J^T (J E^{-1} J^T)^{-1} J onto the discrete
divergence-free subspace is never formed; its action (and that of Pi^T)
is computed through one sparse factorization of the saddle matrix
[[E, J^T], [J, 0]]. Shifted systems against the projected iteration
matrix are solved through a bordered saddle system whose constraint row
forces J X = 0, i.e. X = Pi X, structurally:

    [ sigma E^T - A^T   V    -J^T ] [X   ]   [F]
    [ U^T               I     0   ] [X_lr] = [0]
    [ -J                0     0   ] [X_c ]   [0]
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import (SingularMatrix, SingularSaddle, SingularSchur,
                     UnprojectedRhs)
from .linalg import lu_factor
from .shifted import (ShiftCache, ShiftedSolveReport, _border, _norm1,
                      _shift_key)

__all__ = ["LerayProjector", "apply_pi", "dae2_solve", "Dae2ShiftedOperator",
           "get_projector"]


class LerayProjector:
    """Action of the discrete Leray projector and its transpose."""

    def __init__(self, e, j):
        self.n = e.shape[0]
        self.n_c = j.shape[0]
        self.j = j.tocsr() if sp.issparse(j) else sp.csr_matrix(j)
        self.jt = self.j.T.tocsr()
        e = e.tocsc() if sp.issparse(e) else sp.csc_matrix(e)
        sad = sp.bmat([[e, self.jt], [self.j, None]], format="csc")
        try:
            self._fac = lu_factor(sad)
        except SingularMatrix as exc:
            raise SingularSchur(
                "saddle factorization failed (J rank deficient or E singular)"
            ) from exc

    def _solve(self, top, bottom):
        k = top.shape[1] if top is not None else bottom.shape[1]
        dt = (top if top is not None else bottom).dtype
        rhs = np.zeros((self.n + self.n_c, k), dtype=dt)
        if top is not None:
            rhs[:self.n] = top
        if bottom is not None:
            rhs[self.n:] = bottom
        return self._fac.solve(rhs)

    def apply(self, f):
        """Pi f = f - E^{-1} J^T (J E^{-1} J^T)^{-1} (J f)."""
        f = np.asarray(f)
        squeeze = f.ndim == 1
        if squeeze:
            f = f[:, None]
        if f.shape[1] == 0:
            return f[:, :0] if not squeeze else f[:, 0]
        sol = self._solve(None, -(self.j @ f))
        out = f + sol[:self.n]
        return out[:, 0] if squeeze else out

    def apply_t(self, g):
        """Pi^T g = g - J^T (J E^{-1} J^T)^{-1} J E^{-1} g."""
        g = np.asarray(g)
        squeeze = g.ndim == 1
        if squeeze:
            g = g[:, None]
        if g.shape[1] == 0:
            return g[:, :0] if not squeeze else g[:, 0]
        sol = self._solve(g, None)
        out = g - self.jt @ sol[self.n:]
        return out[:, 0] if squeeze else out


def get_projector(prob) -> LerayProjector:
    """Problem-cached projector (factorized once)."""
    with prob._lock:
        pi = prob._cache.get("pi")
        if pi is None:
            pi = LerayProjector(prob.e, prob.j)
            prob._cache["pi"] = pi
        return pi


def apply_pi(prob, f):
    """Project F onto the constraint kernel, never forming Pi."""
    return get_projector(prob).apply(f)


class Dae2ShiftedOperator:
    """Bordered-saddle solver for (sigma E^T - Pi^T A_k^T Pi) X = Pi^T F
    with X = Pi X enforced by the constraint row.

    ``u``/``v`` are the low-rank border columns (outer update plus any
    inner feedback). Factorizations are cached per exact shift.
    """

    def __init__(self, prob, u=None, v=None, cache_size: int = 8):
        n = prob.n
        self.prob = prob
        self.pi = get_projector(prob)
        self.n = n
        self.n_c = prob.n_c
        self.u = np.zeros((n, 0)) if u is None else _border(u)
        self.v = np.zeros((n, 0)) if v is None else _border(v)
        self._at = prob.a.T.tocsc()
        self._et = prob.e.T.tocsc()
        self._jt = prob.j.T.tocsc()
        self._cache = ShiftCache(cache_size)
        self.norm1_a = _norm1(prob.a)
        self.norm1_e = _norm1(prob.e)
        self.reports = []

    @property
    def width(self) -> int:
        return self.u.shape[1]

    def extended(self, u_extra, v_extra) -> "Dae2ShiftedOperator":
        """New handle with additional border columns (projector reused)."""
        u = np.hstack([self.u, _border(u_extra)]) if self.width else _border(u_extra)
        v = np.hstack([self.v, _border(v_extra)]) if self.width else _border(v_extra)
        return Dae2ShiftedOperator(self.prob, u, v)

    def solve_shifted(self, sigma, f, strategy: str = "augmented"):
        """Constrained problems always solve through the bordered saddle."""
        return self.solve(sigma, f)

    def t_matvec(self, x):
        """Pi^T (A_k^T x) for iterates x in ker J."""
        y = self._at @ x
        if self.width:
            y = y + self.v @ (self.u.T @ x)
        return self.pi.apply_t(y)

    def shifted_t_matvec(self, sigma, x):
        return sigma * (self._et @ x) - (self._at @ x) - (
            self.v @ (self.u.T @ x) if self.width else 0.0)

    def _factor(self, sigma):
        sigma = complex(sigma)
        key = _shift_key(sigma)
        w = self.width

        def build():
            real = sigma.imag == 0.0
            s = sigma.real if real else sigma
            phi = (s * self._et - self._at).tocsc()
            blocks = [[phi, None, -self._jt],
                      [None, sp.identity(w, format="csc") if w else None, None],
                      [-self.prob.j, None, None]]
            if w:
                blocks[0][1] = sp.csc_matrix(self.v)
                blocks[1][0] = sp.csc_matrix(self.u.T)
            else:
                blocks = [[phi, -self._jt], [-self.prob.j, None]]
            try:
                return lu_factor(sp.bmat(blocks, format="csc"))
            except SingularMatrix as exc:
                raise SingularSaddle(
                    f"constrained shifted system singular at sigma={sigma}"
                ) from exc

        return self._cache.get(key, build)

    def solve(self, sigma, f):
        """X with J X = 0 and Pi^T[(sigma E^T - A_k^T) X - F] = 0."""
        f = np.asarray(f)
        squeeze = f.ndim == 1
        if squeeze:
            f = f[:, None]
        if f.shape[1] == 0:
            return f[:, :0] if not squeeze else f[:, 0]
        hit = self._cache.contains(_shift_key(sigma))
        fac = self._factor(sigma)
        total = self.n + self.width + self.n_c
        rhs = np.zeros((total, f.shape[1]), dtype=f.dtype)
        rhs[:self.n] = f
        x = fac.solve(rhs)[:self.n]
        r = self.pi.apply_t(self.shifted_t_matvec(sigma, x) - f)
        scale = (np.linalg.norm(f) + np.linalg.norm(x) *
                 (self.norm1_a + abs(sigma) * self.norm1_e))
        be = float(np.linalg.norm(r) / scale) if scale > 0 else 0.0
        self.reports.append(ShiftedSolveReport("dae2", complex(sigma),
                                               f.shape[1], be,
                                               cache_hit=hit))
        return x[:, 0] if squeeze else x


def dae2_solve(prob, xk_factor, sigma, f):
    """Shifted solve against the projected iteration matrix of a
    constrained problem; the current iterate enters only through its
    low-rank factor.

    F must already satisfy F = Pi F (relative defect below 1e-8),
    otherwise UnprojectedRhs is raised.
    """
    pi = get_projector(prob)
    f = np.asarray(f, dtype=float)
    fp = pi.apply(f)
    nf = np.linalg.norm(f)
    if nf > 0 and np.linalg.norm(f - fp) > 1e-8 * nf:
        raise UnprojectedRhs(
            "right-hand side has a component outside the constraint kernel")

    if xk_factor is None:
        z = None
    else:
        z = xk_factor.z if hasattr(xk_factor, "z") else np.asarray(xk_factor)
    if z is None or z.size == 0:
        u = v = None
    else:
        etz = prob.e.T @ z
        v = np.hstack([etz @ (z.T @ prob.b1), etz @ (z.T @ prob.b2)])
        u = np.hstack([prob.b1, -prob.b2])

    with prob._lock:
        cached = prob._cache.get("dae2op")
        op = None
        if cached is not None and cached[0] is (None if z is None or z.size == 0 else z):
            op = cached[1]
        if op is None:
            op = Dae2ShiftedOperator(prob, u, v)
            prob._cache["dae2op"] = ((None if z is None or z.size == 0 else z), op)
    return op.solve(sigma, f)
