"""Shifted linear solves against sparse-plus-low-rank iteration matrices.

The outer iteration never assembles its iteration matrix
A_k = A + U V_k^T (U = [B1, -B2], V_k = [E^T Z Z^T B1, E^T Z Z^T B2]);
systems of the form (sigma E^T - A_k^T) X = F are solved either by
Sherman-Morrison-Woodbury against the sparse factor of
Phi(sigma) = sigma E^T - A^T, or through the bordered (augmented) system

    [ sigma E^T - A^T   V ] [X      ]   [F]
    [ U^T               I ] [X_perp ] = [0].

Factorizations are memoized per shift in a small LRU cache; a shift hits
the cache only on exact equality, never within a tolerance.
"""

from __future__ import annotations

import threading
from collections import OrderedDict, deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import (SingularAugmented, SingularCore, SingularMatrix,
                     SingularShift)
from .linalg import lu_factor

__all__ = ["SparsePlusLowRank", "ShiftedSolveReport", "smw_solve",
           "augmented_solve", "ShiftCache"]


def _shift_key(sigma):
    """Exact cache key; real shifts share a key with their complex form."""
    sigma = complex(sigma)
    return sigma if sigma.imag != 0.0 else sigma.real


class ShiftCache:
    """LRU cache of factorizations keyed by exact shift value."""

    def __init__(self, size: int = 8):
        self.size = size
        self._data: OrderedDict = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def contains(self, key) -> bool:
        with self._lock:
            return key in self._data

    def get(self, key, factory):
        with self._lock:
            if key in self._data:
                self.hits += 1
                self._data.move_to_end(key)
                return self._data[key]
            self.misses += 1
        value = factory()
        with self._lock:
            self._data[key] = value
            self._data.move_to_end(key)
            while len(self._data) > self.size:
                self._data.popitem(last=False)
        return value

    def __len__(self):
        return len(self._data)


@dataclass
class ShiftedSolveReport:
    """Diagnostics for one shifted solve."""

    strategy: str
    sigma: complex
    rhs_width: int
    backward_error: float
    cache_hit: bool = False

    def to_json(self) -> dict:
        return {"strategy": self.strategy,
                "sigma": [self.sigma.real, self.sigma.imag],
                "rhs_width": self.rhs_width,
                "backward_error": self.backward_error,
                "cache_hit": self.cache_hit}


def _border(u):
    """Low-rank border block; complex allowed (mid-pair feedback)."""
    u = np.asarray(u)
    return u.astype(complex if np.iscomplexobj(u) else float, copy=False)


def _norm1(m) -> float:
    if sp.issparse(m):
        return float(abs(m).sum(axis=0).max()) if m.nnz else 0.0
    m = np.asarray(m)
    return float(np.abs(m).sum(axis=0).max()) if m.size else 0.0


class SparsePlusLowRank:
    """Handle for the pencil (A + U V^T, E), A sparse or dense.

    Immutable except for its factorization caches; safe to share across
    threads. The Phi cache (factors of sigma E^T - A^T) depends only on
    (A, E) and may be passed in to be shared between handles that differ
    only in their low-rank part.
    """

    def __init__(self, a, e, u=None, v=None, cache_size: int = 8,
                 phi_cache: ShiftCache | None = None):
        n = a.shape[0]
        if a.shape != (n, n) or e.shape != (n, n):
            raise SingularShift(f"A and E must be square, got {a.shape}, {e.shape}")
        self.a = a
        self.e = e
        self.n = n
        self.u = np.zeros((n, 0)) if u is None else _border(u)
        self.v = np.zeros((n, 0)) if v is None else _border(v)
        if self.u.shape != self.v.shape or self.u.shape[0] != n:
            raise SingularShift(
                f"low-rank factors must both be n x w, got {self.u.shape}, {self.v.shape}")
        self.issparse = sp.issparse(a)
        self._at = (a.T.tocsc() if self.issparse else np.ascontiguousarray(a.T))
        self._et = (e.T.tocsc() if sp.issparse(e) else np.ascontiguousarray(e.T))
        self._phi_cache = phi_cache if phi_cache is not None else ShiftCache(cache_size)
        self._aug_cache = ShiftCache(cache_size)
        self._smw_cache = ShiftCache(cache_size)
        self.norm1_a = _norm1(a)
        self.norm1_e = _norm1(e)
        self.reports: deque = deque(maxlen=64)

    @property
    def width(self) -> int:
        return self.u.shape[1]

    def extended(self, u_extra, v_extra) -> "SparsePlusLowRank":
        """New handle with additional low-rank columns, sharing the Phi cache."""
        u = np.hstack([self.u, _border(u_extra)]) if self.width else _border(u_extra)
        v = np.hstack([self.v, _border(v_extra)]) if self.width else _border(v_extra)
        return SparsePlusLowRank(self.a, self.e, u, v,
                                 phi_cache=self._phi_cache)

    def solve_shifted(self, sigma, f, strategy: str = "augmented"):
        """(sigma E^T - A_k^T) X = F through the chosen strategy."""
        return shifted_solve(self, sigma, f, strategy)

    # -- matrix action -----------------------------------------------------

    def matvec(self, x):
        """A_k x."""
        y = self.a @ x
        if self.width:
            y = y + self.u @ (self.v.T @ x)
        return y

    def t_matvec(self, x):
        """A_k^T x."""
        y = self._at @ x
        if self.width:
            y = y + self.v @ (self.u.T @ x)
        return y

    def shifted_t_matvec(self, sigma, x):
        """(sigma E^T - A_k^T) x."""
        return sigma * (self._et @ x) - self.t_matvec(x)

    def dense_ak(self) -> np.ndarray:
        """Densely assembled A_k (small problems only)."""
        a = self.a.toarray() if self.issparse else np.array(self.a, dtype=float)
        if self.width:
            a = a + self.u @ self.v.T
        return a

    # -- factorizations ----------------------------------------------------

    def phi_factor(self, sigma):
        """Cached factorization of Phi(sigma) = sigma E^T - A^T."""
        sigma = complex(sigma)
        key = _shift_key(sigma)

        def build():
            if sigma.imag == 0.0:
                m = sigma.real * self._et - self._at
            else:
                m = sigma * (self._et.astype(complex) if not self.issparse
                             else self._et * complex(1.0)) - self._at
            try:
                return lu_factor(m.tocsc() if self.issparse else m)
            except SingularMatrix as exc:
                raise SingularShift(
                    f"sigma E^T - A^T is singular at sigma={sigma}") from exc

        return self._phi_cache.get(key, build)

    def _aug_factor(self, sigma):
        sigma = complex(sigma)
        key = _shift_key(sigma)
        w = self.width

        def build():
            real = sigma.imag == 0.0
            s = sigma.real if real else sigma
            if self.issparse:
                phi = (s * self._et - self._at).tocsc()
                m = sp.bmat([[phi, sp.csc_matrix(self.v)],
                             [sp.csc_matrix(self.u.T), sp.identity(w, format="csc")]],
                            format="csc")
            else:
                dt = complex if (not real or np.iscomplexobj(self.v)) else float
                m = np.zeros((self.n + w, self.n + w), dtype=dt)
                m[:self.n, :self.n] = s * self._et - self._at
                m[:self.n, self.n:] = self.v
                m[self.n:, :self.n] = self.u.T
                m[self.n:, self.n:] = np.eye(w)
            try:
                return lu_factor(m)
            except SingularMatrix as exc:
                raise SingularAugmented(
                    f"augmented system singular at sigma={sigma}") from exc

        return self._aug_cache.get(key, build)

    # -- diagnostics ---------------------------------------------------------

    def record(self, strategy, sigma, x, f, cache_hit=False):
        resid = self.shifted_t_matvec(sigma, x) - f
        scale = (np.linalg.norm(f) +
                 np.linalg.norm(x) * (self.norm1_a + abs(sigma) * self.norm1_e))
        be = float(np.linalg.norm(resid) / scale) if scale > 0 else 0.0
        rep = ShiftedSolveReport(strategy, complex(sigma),
                                 f.shape[1] if f.ndim == 2 else 1, be, cache_hit)
        self.reports.append(rep)
        return rep


def smw_solve(op: SparsePlusLowRank, sigma, f):
    """Solve (sigma E^T - A_k^T) X = F by Sherman-Morrison-Woodbury.

    X = Z1 + Z2 (I - U^T Z2)^{-1} U^T Z1 with Phi Z1 = F, Phi Z2 = V.
    """
    f = np.asarray(f)
    if f.ndim == 1:
        return smw_solve(op, sigma, f[:, None])[:, 0]
    if f.shape[1] == 0:
        return f.copy()
    key = _shift_key(sigma)
    hit = op._phi_cache.contains(key)
    phi = op.phi_factor(sigma)
    z1 = phi.solve(f)
    if op.width == 0:
        op.record("smw", sigma, z1, f, cache_hit=hit)
        return z1

    def build_core():
        z2 = phi.solve(op.v)
        core = np.eye(op.width, dtype=z2.dtype) - op.u.T @ z2
        try:
            return z2, lu_factor(core)
        except SingularMatrix as exc:
            raise SingularCore(
                f"SMW core singular at sigma={complex(sigma)}") from exc

    z2, core_fac = op._smw_cache.get(key, build_core)
    x = z1 + z2 @ core_fac.solve(op.u.T @ z1)
    op.record("smw", sigma, x, f, cache_hit=hit)
    return x


def augmented_solve(op: SparsePlusLowRank, sigma, f):
    """Solve (sigma E^T - A_k^T) X = F through the bordered system."""
    f = np.asarray(f)
    if f.ndim == 1:
        return augmented_solve(op, sigma, f[:, None])[:, 0]
    if f.shape[1] == 0:
        return f.copy()
    key = _shift_key(sigma)
    if op.width == 0:
        hit = op._phi_cache.contains(key)
        phi = op.phi_factor(sigma)
        x = phi.solve(f)
        op.record("augmented", sigma, x, f, cache_hit=hit)
        return x
    hit = op._aug_cache.contains(key)
    fac = op._aug_factor(sigma)
    rhs = np.zeros((op.n + op.width, f.shape[1]), dtype=f.dtype)
    rhs[:op.n] = f
    x = fac.solve(rhs)[:op.n]
    op.record("augmented", sigma, x, f, cache_hit=hit)
    return x


def shifted_solve(op: SparsePlusLowRank, sigma, f, strategy: str):
    if strategy == "smw":
        return smw_solve(op, sigma, f)
    if strategy == "augmented":
        return augmented_solve(op, sigma, f)
    raise ValueError(f"unknown strategy {strategy!r}")
