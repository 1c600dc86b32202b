"""Problem containers, manifest I/O, and synthetic problem generators.

Two problem kinds exist: a standard generalized Riccati problem with an
invertible E, and a constrained (flow-type) problem whose coefficients
carry an extra full-row-rank constraint matrix J and a singular block
structure handled through a discrete Leray projection.

The disturbance weight ``gamma`` is folded into B1 once, here: algebra
everywhere else sees ``b1 = b1_raw / gamma``. The raw matrix is kept so
that saving a loaded problem round-trips its files bit-comparably.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import DimensionMismatch, MissingCoefficient, NotFullRowRank
from .linalg import spectral_norm_est, thin_qr
from .mmio import read_matrix, write_matrix

__all__ = [
    "CareProblem",
    "Dae2Problem",
    "LowRankFactor",
    "SolverOptions",
    "load_problem",
    "save_problem",
    "gen_random_care",
    "gen_heat_fd",
    "gen_stokes_dae2",
]


def _shape(m):
    return tuple(m.shape)


def _densify(m):
    """Tall input blocks are always held dense, in C order so products
    are bit-reproducible across construction paths."""
    if sp.issparse(m):
        m = m.todense()
    return np.ascontiguousarray(np.asarray(m, dtype=float))


def _is_square(m):
    return m.shape[0] == m.shape[1]


@dataclass
class LowRankFactor:
    """Tall factor Z representing the symmetric PSD matrix Z Z^T."""

    z: np.ndarray

    @classmethod
    def empty(cls, n: int) -> "LowRankFactor":
        return cls(np.zeros((n, 0)))

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def rank(self) -> int:
        return self.z.shape[1]

    @property
    def is_empty(self) -> bool:
        return self.z.shape[1] == 0

    def gram_norm(self) -> float:
        """||Z^T Z||_2 = ||Z Z^T||_2 without forming either product."""
        if self.is_empty:
            return 0.0
        s = np.linalg.svd(self.z, compute_uv=False)
        return float(s[0] ** 2) if s.size else 0.0


@dataclass
class SolverOptions:
    """Knobs shared by the outer iterations and inner solvers.

    ``inner_tol=None`` selects the adaptive schedule
    min(0.1 * tau, 1e-2 * current outer residual), floored at 1e-13.
    ``check_stabilizability=None`` means on for dense-backed problems and
    off for sparse/constrained ones; divergence detection stands in when
    the check is off.
    """

    tau: float = 1e-9
    max_outer: int = 50
    compression_tol: float = 1e-12
    inner: str = "auto"              # auto | sign | radi
    inner_tol: float | None = None
    inner_max: int = 400
    strategy: str = "augmented"      # augmented | smw
    shifts: object = "projection"    # projection | heuristic | explicit list
    cache_size: int = 8
    dense_cap: int = 600
    check_stabilizability: bool | None = None
    bernoulli: str = "auto"          # auto | never | always
    unstable_cap: int = 32
    divergence_factor: float = 10.0
    keep_updates: bool = False
    factor_tol: float = 1e-14

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")
        if not 0.0 < self.compression_tol < 1.0:
            raise ValueError("compression_tol must lie in (0, 1)")
        if self.inner not in ("auto", "sign", "radi"):
            raise ValueError(f"unknown inner solver {self.inner!r}")
        if self.strategy not in ("augmented", "smw"):
            raise ValueError(f"unknown solve strategy {self.strategy!r}")
        if self.bernoulli not in ("auto", "never", "always"):
            raise ValueError(f"unknown bernoulli mode {self.bernoulli!r}")
        if self.cache_size < 1:
            raise ValueError("cache_size must be at least 1")


class CareProblem:
    """Standard problem: A^T X E + E^T X A + E^T X (B1 B1^T - B2 B2^T) X E
    + C^T C = 0, E invertible, gamma already folded into b1."""

    kind = "standard"

    def __init__(self, a, e, b1, b2, c, gamma: float = 1.0,
                 b1_raw=None, metadata: dict | None = None):
        if e is None:
            e = sp.identity(a.shape[0], format="csr") if sp.issparse(a) \
                else np.eye(a.shape[0])
        for name, m in (("A", a), ("E", e)):
            if not _is_square(m):
                raise DimensionMismatch(f"{name} must be square, got {_shape(m)}")
        n = a.shape[0]
        if e.shape[0] != n:
            raise DimensionMismatch(f"E is {_shape(e)}, expected {n}x{n}")
        b1 = _densify(b1)
        b2 = _densify(b2)
        c = _densify(c)
        if b1.ndim != 2 or b1.shape[0] != n:
            raise DimensionMismatch(f"B1 is {_shape(b1)}, expected {n} rows")
        if b2.ndim != 2 or b2.shape[0] != n:
            raise DimensionMismatch(f"B2 is {_shape(b2)}, expected {n} rows")
        if c.ndim != 2 or c.shape[1] != n:
            raise DimensionMismatch(f"C is {_shape(c)}, expected {n} columns")
        if gamma <= 0:
            raise ValueError("gamma must be positive")
        self.a = a if sp.issparse(a) else _densify(a)
        self.e = e if sp.issparse(e) else _densify(e)
        self.b1_raw = np.asarray(b1_raw, dtype=float) if b1_raw is not None else b1
        self.b1 = self.b1_raw / gamma if b1_raw is None and gamma != 1.0 else (
            b1 if b1_raw is not None else self.b1_raw)
        self.b2 = b2
        self.c = c
        self.gamma = float(gamma)
        self.metadata = dict(metadata or {})
        self._lock = threading.RLock()
        self._cache: dict = {}

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def m1(self) -> int:
        return self.b1.shape[1]

    @property
    def m2(self) -> int:
        return self.b2.shape[1]

    @property
    def p(self) -> int:
        return self.c.shape[0]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.a)

    def with_b1(self, b1_raw) -> "CareProblem":
        """Copy of the problem with a replaced raw disturbance matrix."""
        b1_raw = np.asarray(b1_raw, dtype=float)
        return CareProblem(self.a, self.e, b1_raw / self.gamma, self.b2,
                           self.c, gamma=self.gamma, b1_raw=b1_raw,
                           metadata=self.metadata)


class Dae2Problem:
    """Constrained problem: velocity-block coefficients plus constraint J.

    The pencil is the saddle pencil of ([A, J^T; J, 0], [E, 0; 0, 0]); the
    solvers work on the projected Riccati equation implicitly and keep all
    iterates inside ker J.
    """

    kind = "dae2"

    def __init__(self, a, j, e, b1, b2, c, gamma: float = 1.0,
                 b1_raw=None, metadata: dict | None = None):
        if not _is_square(a):
            raise DimensionMismatch(f"A must be square, got {_shape(a)}")
        n = a.shape[0]
        if e is None or not _is_square(e) or e.shape[0] != n:
            raise DimensionMismatch("E must be square and match A")
        if j.ndim != 2 or j.shape[1] != n:
            raise DimensionMismatch(f"J is {_shape(j)}, expected {n} columns")
        if j.shape[0] >= n:
            raise NotFullRowRank(
                f"J has {j.shape[0]} rows but only {n} columns")
        b1 = _densify(b1)
        b2 = _densify(b2)
        c = _densify(c)
        if b1.shape[0] != n or b2.shape[0] != n or c.shape[1] != n:
            raise DimensionMismatch("B1/B2/C blocks must match A")
        if gamma <= 0:
            raise ValueError("gamma must be positive")
        self.a = a if sp.issparse(a) else _densify(a)
        self.j = j.tocsr() if sp.issparse(j) else sp.csr_matrix(j)
        self.e = e if sp.issparse(e) else _densify(e)
        self.b1_raw = np.asarray(b1_raw, dtype=float) if b1_raw is not None else b1
        self.b1 = self.b1_raw / gamma if b1_raw is None and gamma != 1.0 else (
            b1 if b1_raw is not None else self.b1_raw)
        self.b2 = b2
        self.c = c
        self.gamma = float(gamma)
        self.metadata = dict(metadata or {})
        self._lock = threading.RLock()
        self._cache: dict = {}

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def n_c(self) -> int:
        return self.j.shape[0]

    @property
    def m1(self) -> int:
        return self.b1.shape[1]

    @property
    def m2(self) -> int:
        return self.b2.shape[1]

    @property
    def p(self) -> int:
        return self.c.shape[0]

    @property
    def is_sparse(self) -> bool:
        return True


# ---------------------------------------------------------------------------
# manifest I/O

_REQUIRED = ("A", "B1", "B2", "C")


def load_problem(manifest_path: str):
    """Load a problem from a manifest JSON referencing MatrixMarket files.

    Schema: {"kind": "standard"|"dae2", "files": {"A":..., "E":...,
    "B1":..., "B2":..., "C":..., "J":...}, "gamma": float, "notes": str}.
    E may be omitted (identity). J is required for kind "dae2".
    """
    with open(manifest_path) as fh:
        man = json.load(fh)
    kind = man.get("kind", "standard")
    files = man.get("files")
    if not isinstance(files, dict):
        raise MissingCoefficient("manifest has no 'files' table")
    base = os.path.dirname(os.path.abspath(manifest_path))

    def _load(key):
        if key not in files:
            raise MissingCoefficient(f"manifest is missing files[{key!r}]")
        path = files[key]
        if not os.path.isabs(path):
            path = os.path.join(base, path)
        return read_matrix(path)

    mats = {k: _load(k) for k in _REQUIRED}
    e = _load("E") if "E" in files else None
    gamma = float(man.get("gamma", 1.0))
    meta = dict(man.get("metadata", {}))
    meta.setdefault("name", man.get("notes", os.path.basename(manifest_path)))
    for key in ("B1", "B2"):
        if sp.issparse(mats[key]):
            mats[key] = mats[key].toarray()
    if sp.issparse(mats["C"]):
        mats["C"] = mats["C"].toarray()
    if kind == "dae2":
        j = _load("J")
        return Dae2Problem(mats["A"], j, e, mats["B1"], mats["B2"],
                           mats["C"], gamma=gamma, metadata=meta)
    if kind != "standard":
        raise MissingCoefficient(f"unknown problem kind {kind!r}")
    return CareProblem(mats["A"], e, mats["B1"], mats["B2"], mats["C"],
                       gamma=gamma, metadata=meta)


def save_problem(prob, outdir: str, name: str = "problem") -> str:
    """Write problem files plus a manifest; returns the manifest path.

    B1 is written from the raw (un-scaled) matrix so load -> save
    round-trips files bit-comparably.
    """
    os.makedirs(outdir, exist_ok=True)
    files = {}

    def _put(key, m):
        fname = f"{name}_{key.lower()}.mtx"
        write_matrix(os.path.join(outdir, fname), m)
        files[key] = fname

    _put("A", prob.a)
    _put("E", prob.e)
    _put("B1", prob.b1_raw)
    _put("B2", prob.b2)
    _put("C", prob.c)
    man = {"kind": prob.kind, "files": files, "gamma": prob.gamma,
           "notes": str(prob.metadata.get("name", name)),
           "metadata": {k: v for k, v in prob.metadata.items()
                        if isinstance(v, (str, int, float, bool))}}
    if prob.kind == "dae2":
        _put("J", prob.j)
        man["files"] = files
    path = os.path.join(outdir, f"{name}.json")
    with open(path, "w") as fh:
        json.dump(man, fh, indent=2, sort_keys=True)
    return path


# ---------------------------------------------------------------------------
# generators


def _rng(seed: int) -> np.random.Generator:
    # Counter-based 64-bit generator: streams are stable across platforms
    # for a fixed key, which the determinism contracts rely on.
    return np.random.Generator(np.random.Philox(key=seed))


def gen_random_care(n: int, m1: int, m2: int, p: int, seed: int = 0,
                    stability_margin: float = 0.05, gamma: float = 8.0,
                    n_unstable: int = 0) -> CareProblem:
    """Dense random problem with a controlled pencil spectrum.

    E is a Gaussian matrix made strictly diagonally dominant; A is a
    Gaussian matrix shifted in the pencil metric so that all eigenvalues
    of (A, E) satisfy Re < -stability_margin, after which ``n_unstable``
    eigenvalues are pushed into the right half-plane by a rank-k term
    c*(E Q)Q^T with random orthonormal Q. For n <= 2048 both the margin
    and the unstable count are verified by a dense eigenvalue computation
    (deterministic retries with doubled shift otherwise).
    """
    rng = _rng(seed)
    ge = rng.standard_normal((n, n))
    r = rng.standard_normal((n, n))
    b1_raw = rng.standard_normal((n, m1))
    b2 = rng.standard_normal((n, m2))
    c = rng.standard_normal((p, n))

    d = float(np.abs(ge).sum(axis=1).max()) + max(np.sqrt(n), 3.0) if n else 1.0
    e = ge + d * np.eye(n)

    verified = n <= 2048
    if verified:
        ev = sla.eigvals(np.linalg.solve(e, r), check_finite=False)
        rho_right = float(ev.real.max()) if n else 0.0
        s = stability_margin + max(rho_right, 0.0)
    else:
        norm_r = spectral_norm_est(r, seed=seed + 1) * 1.1 + 1e-3
        sig_e = max(d - spectral_norm_est(ge, seed=seed + 2) * 1.1, 1e-3)
        s = stability_margin + norm_r / sig_e
    a = r - s * e

    count = 0
    if n_unstable:
        if n_unstable >= n:
            raise ValueError("n_unstable must be smaller than n")
        # exact left-invariant unstable block with distinct moderate
        # rates; directions lean on range(B2) so the injected modes stay
        # cheap to stabilize and the default gamma keeps a stabilizing
        # solution
        mu = np.diag(0.5 + 0.5 * np.arange(n_unstable))
        for _ in range(4):
            mix = rng.standard_normal((m2, n_unstable)) if m2 else None
            raw = 0.2 * rng.standard_normal((n, n_unstable))
            if mix is not None:
                raw += b2 @ mix
            p, _ = thin_qr(raw)
            a_try = a + p @ (mu @ (p.T @ e) - p.T @ a)
            if not verified:
                break
            ev = sla.eigvals(np.linalg.solve(e, a_try), check_finite=False)
            count = int((ev.real > 0).sum())
            if count == n_unstable:
                break
        else:
            raise ValueError(
                f"could not inject exactly {n_unstable} unstable modes")
        a = a_try
        count = count if verified else n_unstable

    meta = {"name": f"rand{n}", "generator": "random", "seed": seed,
            "n_unstable": count, "known_stable": n_unstable == 0,
            "verified": verified}
    return CareProblem(a, e, b1_raw / gamma, b2, c, gamma=gamma,
                       b1_raw=b1_raw, metadata=meta)


def _bump_columns(n: int, centers, width: int) -> np.ndarray:
    """Unit-norm smooth bump columns used as actuation patterns."""
    cols = []
    for ctr in centers:
        lo = max(0, ctr - width)
        hi = min(n, ctr + width + 1)
        col = np.zeros(n)
        idx = np.arange(lo, hi)
        col[idx] = np.cos(0.5 * np.pi * (idx - ctr) / (width + 1)) ** 2
        nrm = np.linalg.norm(col)
        cols.append(col / nrm if nrm else col)
    return np.column_stack(cols) if cols else np.zeros((n, 0))


def gen_heat_fd(n: int, m1: int, m2: int, p: int, gamma: float = 16.0,
                strength: float = 6.0) -> CareProblem:
    """1-D heat equation, finite differences on (0, 1), n interior points.

    A is the tridiagonal Laplacian (symmetric negative definite), E the
    tridiagonal SPD mass matrix. Inputs are heat sources of integral
    ``strength``: disturbances in B1 near the left end, control inputs
    in B2 spread over the interior. The source normalization keeps the
    feedback influential on any mesh; with O(1) columns the quadratic
    term would vanish against the h-scaled mass matrix. C measures the
    temperature difference across each sensor pair, which keeps the
    observed energy in well-damped modes and the solution norm small
    enough for residuals near the rounding floor of the factored
    arithmetic. The pencil is stable by symmetry.
    """
    if n < 3:
        raise ValueError("n must be at least 3")
    h = 1.0 / (n + 1)
    main = np.full(n, -2.0 / h**2)
    off = np.full(n - 1, 1.0 / h**2)
    a = sp.diags([off, main, off], [-1, 0, 1], format="csr")
    e = sp.diags([np.full(n - 1, h / 6.0), np.full(n, 4.0 * h / 6.0),
                  np.full(n - 1, h / 6.0)], [-1, 0, 1], format="csr")

    width = max(1, n // 100)
    source = strength / (np.sqrt(width) * h)
    b1_centers = [int((i + 1) * n * 0.04) for i in range(m1)]
    b2_centers = [int((i + 1) * n / (m2 + 1.0)) for i in range(m2)]
    b1_raw = source * _bump_columns(n, b1_centers, width)
    b2 = source * _bump_columns(n, b2_centers, width)
    c_centers = [int((i + 0.5) * n / p) for i in range(p)]
    c_far = [min(ctr + 2 * width, n - 1) for ctr in c_centers]
    c = ((_bump_columns(n, c_far, width)
          - _bump_columns(n, c_centers, width)) / np.sqrt(2.0)).T

    meta = {"name": f"heat{n}", "generator": "heat_fd",
            "n_unstable": 0, "known_stable": True}
    return CareProblem(a, e, b1_raw / gamma, b2, c, gamma=gamma,
                       b1_raw=b1_raw, metadata=meta)


def _mac_operators(g: int, nu: float, convection: float):
    """Staggered-grid Stokes operators: vector Laplacian, divergence, mass."""
    h = 1.0 / g

    def lap1d(m):
        return sp.diags([np.ones(m - 1), -2.0 * np.ones(m), np.ones(m - 1)],
                        [-1, 0, 1]) / h**2

    def skew1d(m):
        return sp.diags([-np.ones(m - 1), np.ones(m - 1)], [-1, 1]) / (2 * h)

    nx_u, ny_u = g - 1, g          # u on interior vertical faces
    nx_v, ny_v = g, g - 1          # v on interior horizontal faces
    lap_u = sp.kron(sp.identity(ny_u), lap1d(nx_u)) + \
        sp.kron(lap1d(ny_u), sp.identity(nx_u))
    lap_v = sp.kron(sp.identity(ny_v), lap1d(nx_v)) + \
        sp.kron(lap1d(ny_v), sp.identity(nx_v))
    a = sp.block_diag([nu * lap_u, nu * lap_v], format="csr")
    if convection:
        u0, v0 = 1.0, 0.4
        conv_u = u0 * sp.kron(sp.identity(ny_u), skew1d(nx_u)) + \
            v0 * sp.kron(skew1d(ny_u), sp.identity(nx_u))
        conv_v = u0 * sp.kron(sp.identity(ny_v), skew1d(nx_v)) + \
            v0 * sp.kron(skew1d(ny_v), sp.identity(nx_v))
        a = (a - convection * sp.block_diag([conv_u, conv_v])).tocsr()

    n_u = nx_u * ny_u
    n_v = nx_v * ny_v
    n = n_u + n_v

    def iu(i, j):               # u-face i=1..g-1, j=0..g-1
        return j * (g - 1) + (i - 1)

    def iv(i, j):               # v-face i=0..g-1, j=1..g-1
        return n_u + (j - 1) * g + i

    rows, cols, vals = [], [], []
    for cj in range(g):
        for ci in range(g):
            cell = cj * g + ci
            if ci + 1 <= g - 1:
                rows.append(cell); cols.append(iu(ci + 1, cj)); vals.append(1.0 / h)
            if ci >= 1:
                rows.append(cell); cols.append(iu(ci, cj)); vals.append(-1.0 / h)
            if cj + 1 <= g - 1:
                rows.append(cell); cols.append(iv(ci, cj + 1)); vals.append(1.0 / h)
            if cj >= 1:
                rows.append(cell); cols.append(iv(ci, cj)); vals.append(-1.0 / h)
    j_full = sp.csr_matrix((vals, (rows, cols)), shape=(g * g, n))
    j = j_full[:-1, :]          # fix one pressure dof -> full row rank

    # variable positive face weights keep E genuinely non-scalar
    wx = np.empty(n)
    for jj in range(ny_u):
        for ii in range(nx_u):
            x, y = (ii + 1) * h, (jj + 0.5) * h
            wx[jj * nx_u + ii] = 1.0 + 0.5 * np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y)
    for jj in range(ny_v):
        for ii in range(nx_v):
            x, y = (ii + 0.5) * h, (jj + 1) * h
            wx[n_u + jj * nx_v + ii] = 1.0 + 0.5 * np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y)
    e = sp.diags(h**2 * wx, format="csr")

    def stream_velocity(cx, cy, spread):
        """Divergence-free velocity from a nodal stream-function bump."""
        psi = np.zeros((g + 1, g + 1))
        for jn in range(1, g):
            for in_ in range(1, g):
                x, y = in_ * h, jn * h
                psi[in_, jn] = np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / spread**2)
        q = np.zeros(n)
        for jj in range(g):
            for ii in range(1, g):
                q[iu(ii, jj)] = (psi[ii, jj + 1] - psi[ii, jj]) / h
        for jj in range(1, g):
            for ii in range(g):
                q[iv(ii, jj)] = -(psi[ii + 1, jj] - psi[ii, jj]) / h
        return q

    return a, j.tocsr(), e, n_u, stream_velocity


def gen_stokes_dae2(grid: int, m1: int = 1, m2: int = 1, p: int = 6,
                    gamma: float = 50.0, nu: float = 1.0,
                    convection: float = 0.0, n_unstable: int = 0,
                    seed: int = 0) -> Dae2Problem:
    """2-D Stokes-type constrained problem on a staggered grid.

    ``convection`` adds a skew transport term (complex spectrum, never
    destabilizing on its own). ``n_unstable`` pins the pencil rates of
    that many divergence-free stream-function directions at distinct
    moderate positive values; the count is verified by a dense pencil
    eigenvalue computation for small grids. Controls act as distributed
    force fields near the injection spots, so unstable modes stay cheap
    to stabilize; disturbances and sensing are single faces plus a tiny
    dense dither.
    """
    if grid < 3:
        raise ValueError("grid must be at least 3")
    a, j, e, n_u, stream_velocity = _mac_operators(grid, nu, convection)
    n = a.shape[0]

    count = 0
    if n_unstable:
        spots = [(0.3, 0.3), (0.7, 0.6), (0.4, 0.75), (0.65, 0.25)]
        if n_unstable > len(spots):
            raise ValueError("at most 4 injected unstable modes supported")
        qs = np.column_stack([stream_velocity(cx, cy, 0.18)
                              for cx, cy in spots[:n_unstable]])
        q, _ = thin_qr(qs)
        # E-orthonormal basis so the bump pins the subspace rates exactly
        low = np.linalg.cholesky(q.T @ (e @ q))
        q = sla.solve_triangular(low, q.T, lower=True).T
        eq = e @ q
        s_loc = q.T @ (a @ q)
        # distinct moderate rates keep the injected pair controllable
        # through a single input and the stabilizing feedback affordable
        mu = 4.0 + 3.0 * np.arange(n_unstable, dtype=float)
        for _ in range(6):
            core = np.diag(mu) - s_loc
            a_try = (a + sp.csr_matrix(eq @ core @ eq.T)).tocsr()
            if n > 900:
                break
            sad_a = np.block([[a_try.toarray(), j.T.toarray()],
                              [j.toarray(), np.zeros((j.shape[0], j.shape[0]))]])
            sad_e = np.zeros_like(sad_a)
            sad_e[:n, :n] = e.toarray()
            ev = sla.eigvals(sad_a, sad_e, check_finite=False)
            finite = ev[np.isfinite(ev)]
            count = int((finite.real > 0).sum())
            if count == n_unstable:
                break
            mu *= 2.0
        a = a_try
        count = count if n <= 900 else n_unstable

    rng = _rng(seed)
    # disturbances hit single faces; controls are distributed force
    # fields wide enough to reach any injected mode
    act_spots = [(0.45, 0.4), (0.6, 0.55), (0.4, 0.65), (0.62, 0.3)]

    def pick(k, offset):
        idx = np.linspace(0.15, 0.85, k) * n_u
        return (idx.astype(int) + offset) % n

    b1_raw = np.zeros((n, m1))
    for col, pos in enumerate(pick(m1, 7)):
        b1_raw[pos, col] = 1.0
    b2 = np.column_stack([stream_velocity(*act_spots[col % len(act_spots)],
                                          0.35)
                          for col in range(m2)])
    c = np.zeros((p, n))
    for row, pos in enumerate(pick(p, n_u // 2 + 11)):
        c[row, pos] = 1.0
    # tiny dense dither keeps sensing/actuation non-degenerate
    b1_raw += 1e-3 * rng.standard_normal(b1_raw.shape)
    b2 += 1e-3 * rng.standard_normal(b2.shape)
    c += 1e-3 * rng.standard_normal(c.shape)

    meta = {"name": f"stokes{grid}", "generator": "stokes_dae2",
            "n_unstable": count, "known_stable": n_unstable == 0,
            "grid": grid, "seed": seed}
    return Dae2Problem(a, j, e, b1_raw / gamma, b2, c, gamma=gamma,
                       b1_raw=b1_raw, metadata=meta)
