"""Orthonormal bases for the set of admissible perturbations.

A perturbation of a column-stochastic matrix must have zero column sums
and vanish wherever the matrix has a structural zero or one.  Per column
``j`` this constraint set is the null space of the all-ones row restricted
to the admissible rows; stacking one orthonormal block per column gives a
block-diagonal basis of the whole feasible subspace, under which the
Frobenius norm of the perturbation equals the Euclidean norm of its
coefficient vector.

The blocks are never materialised at scale: products with a block and its
transpose are evaluated from the closed-form pattern of the nested basis

    (1, -1, 0, ...)/sqrt(2),  (1, 1, -2, 0, ...)/sqrt(6),  ...

using segmented cumulative sums over all columns at once.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, DimensionTooSmall, EmptyFeasibleSet
from .markov import Perturbation, StochasticMatrix


def ones_nullspace_basis(k: int) -> np.ndarray:
    """Orthonormal basis of the zero-sum subspace of R^k, as a k x (k-1)
    matrix.

    Column ``j`` (0-based) is ``(1, ..., 1, -(j+1), 0, ..., 0)`` with
    ``j+1`` leading ones, normalised.  Every column is orthogonal to the
    all-ones vector and the construction is nested: the basis for a
    smaller dimension is the top-left block of the basis for a larger one.
    """
    if k < 2:
        raise DimensionTooSmall(f"need dimension >= 2, got {k}")
    B = np.zeros((k, k - 1))
    for j in range(k - 1):
        c = 1.0 / np.sqrt((j + 1.0) * (j + 2.0))
        B[: j + 1, j] = c
        B[j + 1, j] = -(j + 1.0) * c
    return B


def _ranges(lengths: np.ndarray) -> np.ndarray:
    """Concatenation of arange(l) for each l in lengths."""
    lengths = np.asarray(lengths, dtype=np.int64)
    total = int(lengths.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    starts = np.cumsum(np.concatenate(([0], lengths[:-1])))
    return np.arange(total, dtype=np.int64) - np.repeat(starts, lengths)


class ColumnBasis:
    """Orthonormal basis block for one column's admissible variations.

    The block has one column fewer than the number of admissible rows; an
    empty block means the column admits no variation.
    """

    def __init__(self, n: int, rows: np.ndarray,
                 rotation: Optional[np.ndarray] = None):
        self.n = int(n)
        self.rows = np.asarray(rows, dtype=np.int64)
        mask = np.ones(n, dtype=bool)
        mask[self.rows] = False
        self.excluded_rows = np.nonzero(mask)[0]
        self.rotation = rotation

    @property
    def r(self) -> int:
        return self.n - len(self.rows)

    @property
    def dim(self) -> int:
        return max(len(self.rows) - 1, 0)

    @property
    def vectors(self) -> np.ndarray:
        """Dense n x dim block (zero rows at excluded indices)."""
        V = np.zeros((self.n, self.dim))
        if self.dim:
            V[self.rows, :] = ones_nullspace_basis(len(self.rows))
            if self.rotation is not None:
                V = V @ self.rotation
        return V

    def apply(self, y: np.ndarray) -> np.ndarray:
        return self.vectors @ y

    def apply_transpose(self, v: np.ndarray) -> np.ndarray:
        return self.vectors.T @ v


class ConstraintBasis:
    """Block-diagonal orthonormal basis of the feasible perturbation set.

    Parameters
    ----------
    n : int
        Matrix dimension.
    col_rows : sequence of arrays
        Sorted admissible row indices, one array per column.  Columns with
        fewer than two admissible rows contribute an empty block.
    rotations : sequence of arrays, optional
        Per-column orthogonal matrices mixing each block's columns; used to
        check that optimisers do not depend on the basis choice.
    """

    def __init__(self, n: int, col_rows: Sequence[np.ndarray],
                 rotations: Optional[Sequence[Optional[np.ndarray]]] = None):
        if len(col_rows) != n:
            raise DimensionMismatch("need one row set per column")
        self.n = int(n)
        self.col_rows = [np.asarray(r, dtype=np.int64) for r in col_rows]
        ks = np.array([len(r) for r in self.col_rows], dtype=np.int64)
        self._ks = ks
        self.dims = np.where(ks >= 2, ks - 1, 0)
        self.total_dim = int(self.dims.sum())
        self.rotations = list(rotations) if rotations is not None else None
        if self.rotations is not None:
            for j, R in enumerate(self.rotations):
                if R is not None and R.shape != (self.dims[j], self.dims[j]):
                    raise DimensionMismatch(f"rotation {j} has wrong shape")

        active = ks >= 2
        self._active_cols = np.nonzero(active)[0]
        ak = ks[active]
        ad = self.dims[active]

        # row-slot arrays (concatenated active columns, column-major)
        self.rows_flat = (np.concatenate([self.col_rows[j] for j in self._active_cols])
                          if active.any() else np.zeros(0, dtype=np.int64))
        self.row_col = np.repeat(self._active_cols, ak)
        row_local = _ranges(ak)
        coeff_starts = np.concatenate(([0], np.cumsum(ad)[:-1])) if ad.size else ad
        row_cstart = np.repeat(coeff_starts, ak)
        row_cend = np.repeat(coeff_starts + ad, ak)
        self._fwd_hi = row_cstart + row_local          # index into cum-w
        self._fwd_end = row_cend
        self._fwd_sub = np.maximum(row_cstart + row_local - 1, 0)
        self._fwd_r = row_local.astype(np.float64)
        self._fwd_mask = row_local > 0

        # coefficient-slot arrays
        self.coeff_col = np.repeat(self._active_cols, ad)
        coeff_local = _ranges(ad)
        self.coeff_scale = 1.0 / np.sqrt((coeff_local + 1.0) * (coeff_local + 2.0))
        row_starts = np.concatenate(([0], np.cumsum(ak)[:-1])) if ak.size else ak
        self._adj_prefix_hi = np.repeat(row_starts, ad) + coeff_local + 1
        self._adj_prefix_lo = np.repeat(row_starts, ad)
        self._adj_tail = np.repeat(row_starts, ad) + coeff_local + 1
        self._adj_mult = (coeff_local + 1.0)

        # csc layout over all n columns (empty for inactive ones)
        counts = np.where(active, ks, 0)
        self._indptr = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)

        # coefficient slices per active column, for rotations
        self._coeff_slices = [
            slice(int(a), int(a + d)) for a, d in zip(coeff_starts, ad)
        ]

    # -- rotations ------------------------------------------------------

    def _rotate(self, alpha: np.ndarray, transpose: bool) -> np.ndarray:
        if self.rotations is None:
            return alpha
        out = alpha.copy()
        for j, col in enumerate(self._active_cols):
            R = self.rotations[col]
            if R is None:
                continue
            s = self._coeff_slices[j]
            out[s] = (R.T @ alpha[s]) if transpose else (R @ alpha[s])
        return out

    # -- core block products ---------------------------------------------

    def component_vector(self, alpha: np.ndarray) -> np.ndarray:
        """Entries of the perturbation with coefficients ``alpha``, laid
        out per row slot (column-major over admissible entries)."""
        if alpha.shape != (self.total_dim,):
            raise DimensionMismatch(
                f"expected {self.total_dim} coefficients, got {alpha.shape}")
        a = self._rotate(np.asarray(alpha, dtype=np.float64), transpose=False)
        w = self.coeff_scale * a
        cw = np.concatenate(([0.0], np.cumsum(w)))
        p = cw[self._fwd_end] - cw[self._fwd_hi]
        if w.size:
            p -= np.where(self._fwd_mask, self._fwd_r * w[self._fwd_sub], 0.0)
        return p

    def coefficients(self, values_flat: np.ndarray) -> np.ndarray:
        """Transpose product: coefficients of per-row-slot values."""
        u = np.asarray(values_flat, dtype=np.float64)
        cu = np.concatenate(([0.0], np.cumsum(u)))
        q = self.coeff_scale * (
            cu[self._adj_prefix_hi] - cu[self._adj_prefix_lo]
            - self._adj_mult * u[self._adj_tail]
        ) if self.total_dim else np.zeros(0)
        return self._rotate(q, transpose=True)

    # -- assembled objects -------------------------------------------------

    def assemble(self, alpha: np.ndarray) -> sp.csc_matrix:
        p = self.component_vector(alpha)
        return sp.csc_matrix((p, self.rows_flat.copy(), self._indptr.copy()),
                             shape=(self.n, self.n))

    def apply_response_rhs(self, alpha: np.ndarray, h: np.ndarray) -> np.ndarray:
        """Vector ``m(alpha) h`` without materialising the matrix."""
        p = self.component_vector(alpha)
        return np.bincount(self.rows_flat, weights=p * h[self.row_col],
                           minlength=self.n)

    def adjoint_coefficients(self, g: np.ndarray, h: np.ndarray) -> np.ndarray:
        """Coefficients of the adjoint: column j gets ``h_j * B_j^T g``."""
        q = self.coefficients(g[self.rows_flat])
        return q * h[self.coeff_col]

    def project(self, m) -> np.ndarray:
        """Coefficients reproducing a feasible matrix ``m`` exactly."""
        if sp.issparse(m):
            vals = np.asarray(m.tocsr()[self.rows_flat, self.row_col]).ravel()
        else:
            m = np.asarray(m, dtype=np.float64)
            vals = m[self.rows_flat, self.row_col]
        return self.coefficients(vals)

    def column_basis(self, j: int) -> ColumnBasis:
        rot = self.rotations[j] if self.rotations is not None else None
        return ColumnBasis(self.n, self.col_rows[j], rotation=rot)

    @property
    def column_bases(self) -> list[ColumnBasis]:
        return [self.column_basis(j) for j in range(self.n)]

    def support_mask(self) -> sp.csc_matrix:
        data = np.ones(len(self.rows_flat), dtype=bool)
        return sp.csc_matrix((data, self.rows_flat.copy(), self._indptr.copy()),
                             shape=(self.n, self.n))


def column_basis(M: StochasticMatrix, j: int) -> ColumnBasis:
    """Basis block for column ``j`` of ``M`` (empty when the column has at
    most one admissible row)."""
    rows = M.admissible_rows()[j]
    return ColumnBasis(M.n, rows)


def constraint_basis(M: StochasticMatrix,
                     rng: Optional[np.random.Generator] = None) -> ConstraintBasis:
    """Block-diagonal basis of all admissible perturbations of ``M``.

    Parameters
    ----------
    rng : numpy Generator, optional
        When given, each block is mixed by a random orthogonal matrix.
        The spanned space is unchanged; optimisers should return the same
        perturbation up to sign whenever their leading eigenvalue is
        simple.

    Raises
    ------
    EmptyFeasibleSet
        If every column forbids variation.
    """
    col_rows = M.admissible_rows()
    rotations = None
    if rng is not None:
        rotations = []
        for rows in col_rows:
            d = max(len(rows) - 1, 0)
            if d == 0:
                rotations.append(None)
                continue
            A = rng.standard_normal((d, d))
            Q, R = np.linalg.qr(A)
            Q = Q * np.sign(np.diag(R))
            rotations.append(Q)
    basis = ConstraintBasis(M.n, col_rows, rotations=rotations)
    if basis.total_dim == 0:
        raise EmptyFeasibleSet("no column admits a perturbation")
    return basis


def centered_columns(layout: ConstraintBasis, values_flat: np.ndarray,
                     column_scale: Optional[np.ndarray] = None) -> sp.csc_matrix:
    """Matrix whose admissible entries are the given per-slot values minus
    their column mean (so every column sums to zero), optionally scaled by
    a per-column factor.  Columns with at most one admissible row stay
    zero.  This is the shape of every closed-form optimiser of a linear
    objective under the zero-column-sum, support and norm constraints."""
    vals = np.asarray(values_flat, dtype=np.float64)
    if vals.shape != layout.rows_flat.shape:
        raise DimensionMismatch("one value per admissible entry required")
    n = layout.n
    sums = np.bincount(layout.row_col, weights=vals, minlength=n)
    counts = np.bincount(layout.row_col, minlength=n).astype(np.float64)
    means = np.divide(sums, counts, out=np.zeros(n), where=counts > 0)
    data = vals - means[layout.row_col]
    if column_scale is not None:
        data = data * np.asarray(column_scale)[layout.row_col]
    return sp.csc_matrix((data, layout.rows_flat.copy(), layout._indptr.copy()),
                         shape=(n, n))


def assemble_perturbation(basis: ConstraintBasis, alpha: np.ndarray,
                          epsilon_range=None) -> Perturbation:
    """Perturbation with coefficient vector ``alpha`` in the given basis.

    The blocks are orthonormal, so the Frobenius norm of the result equals
    ``||alpha||_2`` exactly (up to roundoff).
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (basis.total_dim,):
        raise DimensionMismatch(
            f"expected {basis.total_dim} coefficients, got {alpha.shape}")
    m = basis.assemble(alpha)
    return Perturbation(m, support=basis.support_mask(),
                        epsilon_range=epsilon_range)
