"""MatrixMarket file I/O.

Thin wrappers over scipy.io so every coefficient travels through one
place: 1-based coordinate files for sparse matrices, array files for
dense ones, values written with 17 significant digits so doubles
round-trip exactly (modulo the text formatting itself).
"""

from __future__ import annotations

import os

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import MissingCoefficient

__all__ = ["read_matrix", "write_matrix"]


def read_matrix(path: str):
    """Read one MatrixMarket file.

    Coordinate files come back as csr_matrix, array files as ndarray.
    A missing file raises MissingCoefficient (not FileNotFoundError) so
    manifest loading can report the offending key.
    """
    if not os.path.exists(path):
        raise MissingCoefficient(f"matrix file not found: {path}")
    m = scipy.io.mmread(path)
    if sp.issparse(m):
        return m.tocsr()
    return np.asarray(m, dtype=float)


def write_matrix(path: str, m, comment: str = "") -> None:
    """Write a matrix in MatrixMarket format (precision 17)."""
    if sp.issparse(m):
        scipy.io.mmwrite(path, m.tocoo(), comment=comment, precision=17)
    else:
        a = np.asarray(m)
        if a.ndim == 1:
            a = a[:, None]
        scipy.io.mmwrite(path, a, comment=comment, precision=17)
