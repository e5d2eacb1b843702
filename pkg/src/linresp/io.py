"""Text formats for matrices and vectors.

Matrices use a coordinate format: a header line ``n nnz`` followed by one
``i j value`` line per stored entry with 1-based indices, values printed
with 17 significant digits (lossless for doubles).  Vectors are one value
per line.
"""

from __future__ import annotations

import os
from typing import Union

import numpy as np
import scipy.sparse as sp

PathLike = Union[str, os.PathLike]


def _matrix_of(obj) -> sp.csc_matrix:
    entries = getattr(obj, "entries", obj)
    if sp.issparse(entries):
        return entries.tocsc()
    return sp.csc_matrix(np.asarray(entries, dtype=np.float64))


def write_matrix(path: PathLike, matrix) -> None:
    """Write a square matrix (dense, sparse, StochasticMatrix or
    Perturbation) in coordinate text format, column-major order."""
    A = _matrix_of(matrix)
    A.sort_indices()
    coo = A.tocoo()
    order = np.lexsort((coo.row, coo.col))
    with open(path, "w") as fh:
        fh.write(f"{A.shape[0]} {A.nnz}\n")
        for k in order:
            fh.write(f"{coo.row[k] + 1} {coo.col[k] + 1} {coo.data[k]:.17g}\n")


def read_matrix(path: PathLike) -> sp.csc_matrix:
    """Read a square matrix written by :func:`write_matrix`."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"bad matrix header in {path!r}: expected 'n nnz'")
        n, nnz = int(header[0]), int(header[1])
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz, dtype=np.float64)
        for k in range(nnz):
            parts = fh.readline().split()
            if len(parts) != 3:
                raise ValueError(f"bad entry line {k + 2} in {path!r}")
            rows[k] = int(parts[0]) - 1
            cols[k] = int(parts[1]) - 1
            vals[k] = float(parts[2])
    if nnz and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= n):
        raise ValueError(f"index out of range in {path!r}")
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsc()


def write_vector(path: PathLike, v) -> None:
    v = np.asarray(v, dtype=np.float64).ravel()
    with open(path, "w") as fh:
        for x in v:
            fh.write(f"{x:.17g}\n")


def read_vector(path: PathLike) -> np.ndarray:
    with open(path) as fh:
        vals = [float(line) for line in fh if line.strip()]
    return np.asarray(vals, dtype=np.float64)
