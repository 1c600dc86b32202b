"""Small dense/sparse linear-algebra kernels shared by the solvers.

Everything here operates on plain numpy arrays and scipy.sparse matrices.
Low-rank symmetric quantities are handled in factored form throughout; no
kernel in this module ever forms an n-by-n product of tall factors.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NoConvergence, SingularMatrix

__all__ = [
    "lu_factor",
    "LuFactorization",
    "thin_qr",
    "compress_factor",
    "spectral_norm_sym_lowrank",
    "small_dense_eig",
]

# Relative pivot cutoff below which a factorization is declared singular.
_PIVOT_RTOL = 1e-14


class LuFactorization:
    """Reusable LU factorization of a square dense or sparse matrix.

    Wraps ``scipy.linalg.lu_factor`` (dense) or ``scipy.sparse.linalg.splu``
    (sparse, COLAMD column ordering) behind one ``solve`` interface and
    enforces a common near-singularity check on the U diagonal.
    """

    def __init__(self, m):
        if m.shape[0] != m.shape[1]:
            raise SingularMatrix(f"matrix is not square: {m.shape}")
        self.n = m.shape[0]
        self.issparse = sp.issparse(m)
        self._complex = bool(np.iscomplexobj(m.data if sp.issparse(m) else m))
        if self.issparse:
            norm = spla.norm(m, np.inf) if m.nnz else 0.0
            try:
                self._fac = spla.splu(m.tocsc())
            except RuntimeError as exc:
                raise SingularMatrix(str(exc)) from exc
            diag = np.abs(self._fac.U.diagonal())
        else:
            m = np.asarray(m)
            norm = np.linalg.norm(m, np.inf) if self.n else 0.0
            self._fac = sla.lu_factor(m, check_finite=False)
            diag = np.abs(np.diagonal(self._fac[0]))
        if self.n and (norm == 0.0 or diag.min() < _PIVOT_RTOL * norm):
            raise SingularMatrix(
                f"pivot {diag.min() if self.n else 0.0:.3e} below "
                f"{_PIVOT_RTOL:.0e} * {norm:.3e}"
            )

    def solve(self, b, trans: bool = False):
        """Solve M x = b, or M^T x = b when ``trans`` is set."""
        b = np.asarray(b)
        squeeze = b.ndim == 1
        if squeeze:
            b = b[:, None]
        if b.shape[1] == 0:
            return b[:, :0].copy() if not squeeze else b[:, 0]
        if np.iscomplexobj(b) and not self._complex:
            x = self._solve_real(b.real, trans) + 1j * self._solve_real(b.imag, trans)
        else:
            if self._complex and not np.iscomplexobj(b):
                b = b.astype(complex)
            x = self._solve_real(b, trans)
        return x[:, 0] if squeeze else x

    def _solve_real(self, b, trans):
        if self.issparse:
            return self._fac.solve(np.ascontiguousarray(b),
                                   trans="T" if trans else "N")
        return sla.lu_solve(self._fac, b, trans=1 if trans else 0,
                            check_finite=False)


def lu_factor(m) -> LuFactorization:
    """Factor a square matrix once for repeated solves.

    Raises SingularMatrix when a pivot falls below 1e-14 times the
    infinity norm of the input.
    """
    return LuFactorization(m)


def thin_qr(z: np.ndarray):
    """Economy QR of a tall matrix; Q has orthonormal columns always,
    including rank-deficient input (Householder, not Gram-Schmidt)."""
    z = np.asarray(z)
    if z.ndim != 2:
        raise ValueError("thin_qr expects a 2-d array")
    q, r = sla.qr(z, mode="economic", check_finite=False)
    return q, r


def compress_factor(z: np.ndarray, tol: float) -> np.ndarray:
    """Column-compress Z so that Z_new Z_new^T = Z Z^T up to tol * ||Z Z^T||_2.

    Thin QR followed by a symmetric eigendecomposition of the small Gram
    R R^T; eigenvalues below ``tol`` times the largest (and non-positive
    ones) are dropped.
    """
    if not 0.0 < tol < 1.0:
        raise ValueError(f"compression tol must lie in (0, 1), got {tol}")
    z = np.asarray(z, dtype=float)
    if z.ndim != 2 or z.shape[1] == 0:
        return z.reshape(z.shape[0], -1).copy()
    q, r = thin_qr(z)
    lam, v = sla.eigh(r @ r.T, check_finite=False)
    if lam.size == 0 or lam[-1] <= 0.0:
        return np.zeros((z.shape[0], 0))
    keep = lam > tol * lam[-1]
    return (q @ v[:, keep]) * np.sqrt(lam[keep])


def psd_factor(x: np.ndarray, tol: float = 1e-14) -> np.ndarray:
    """Y with Y Y^T = X for symmetric PSD X, small and negative
    eigenvalues (roundoff) dropped at tol * lambda_max."""
    x = np.asarray(x, dtype=float)
    lam, v = sla.eigh(0.5 * (x + x.T), check_finite=False)
    if lam.size == 0 or lam[-1] <= 0.0:
        return np.zeros((x.shape[0], 0))
    keep = lam > tol * lam[-1]
    # C order so a factor read back from disk reproduces downstream
    # products bit-exactly
    return np.ascontiguousarray(v[:, keep] * np.sqrt(lam[keep]))


def cross_norm(f: np.ndarray, g: np.ndarray) -> float:
    """2-norm of F G^T where F is wide-short and G tall-thin; G is
    orthogonalized first so only a small SVD remains."""
    f = np.atleast_2d(np.asarray(f))
    g = np.atleast_2d(np.asarray(g))
    if f.shape[1] == 0 or g.shape[1] == 0 or f.shape[0] == 0:
        return 0.0
    _, r = thin_qr(g)
    sv = sla.svdvals(f @ r.T, check_finite=False)
    return float(sv[0]) if sv.size else 0.0


def spectral_norm_sym_lowrank(g: np.ndarray, s: np.ndarray | None = None) -> float:
    """2-norm of the symmetric matrix G S G^T without forming it.

    ``s`` defaults to the identity. G is reduced by a thin QR and the norm
    is read off a small symmetric eigenproblem, so the result is exact to
    machine precision (never an estimate).
    """
    g = np.asarray(g)
    if g.ndim != 2 or g.shape[1] == 0:
        return 0.0
    _, r = thin_qr(g)
    core = r @ r.T if s is None else r @ np.asarray(s) @ r.T
    core = 0.5 * (core + core.T)
    if core.shape[0] == 0:
        return 0.0
    lam = sla.eigvalsh(core, check_finite=False)
    return float(np.max(np.abs(lam))) if lam.size else 0.0


def small_dense_eig(m: np.ndarray):
    """Eigenvalues and right eigenvectors of a small dense matrix.

    Raises NoConvergence if the underlying QR iteration fails.
    """
    m = np.asarray(m)
    try:
        w, v = sla.eig(m, check_finite=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - rare
        raise NoConvergence(str(exc)) from exc
    return w, v


def spectral_norm_est(m, iters: int = 30, seed: int = 0) -> float:
    """Cheap power-iteration estimate of ||M||_2 (deterministic start)."""
    n = m.shape[1]
    if n == 0 or m.shape[0] == 0:
        return 0.0
    rng = np.random.Generator(np.random.Philox(key=seed))
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iters):
        y = m.T @ (m @ x)
        nrm = np.linalg.norm(y)
        if nrm == 0.0:
            return 0.0
        est = np.sqrt(nrm)
        x = y / nrm
    return float(est)
