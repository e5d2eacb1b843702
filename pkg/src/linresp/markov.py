"""Column-stochastic matrices, stationary vectors and linear response.

A column-stochastic matrix ``M`` acts on probability column vectors.  For a
mixing chain (some power of ``M`` entrywise positive) there is a unique
stationary vector ``h`` with ``M h = h``.  Perturbing ``M`` to ``M + eps*m``
with ``m`` of zero column sums moves ``h`` at first order by ``eps*u`` where
``u`` is the unique solution of

    (I - M) u = m h,     sum(u) = 0.

All solves here work with the sparse augmented system directly; the dense
matrix ``Q = inv(I - M + h 1^T)`` (a generalized inverse of ``I - M``, with
``u = Q m h``) is only formed on request for small problems.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
import scipy.linalg

from .errors import (
    DimensionMismatch,
    InfeasibleEpsilon,
    NoConvergence,
    NonMixing,
    SingularSystem,
    TooLarge,
)

#: entries of M below this are treated as structural zeros when deriving
#: the support mask for perturbations
DEFAULT_ZERO_THRESHOLD = 1e-7

#: entries of M within this of 1 are treated as structural ones
ONE_THRESHOLD = 1e-12

COLUMN_SUM_TOL = 1e-12
STATIONARY_RESIDUAL_TOL = 1e-13
STATIONARY_MAX_ITER = 10 ** 6
RESPONSE_RESIDUAL_TOL = 1e-10
DENSE_EIG_FALLBACK_N = 500
DENSE_INVERSE_CAP = 5000


def _as_csc(entries) -> sp.csc_matrix:
    if sp.issparse(entries):
        out = entries.tocsc().astype(np.float64)
    else:
        out = sp.csc_matrix(np.asarray(entries, dtype=np.float64))
    out.sort_indices()
    return out


class StochasticMatrix:
    """Validated column-stochastic sparse matrix with mixing metadata.

    Parameters
    ----------
    entries : array_like or sparse matrix
        Square nonnegative matrix whose columns each sum to 1 within
        1e-12.
    zero_threshold : float, optional
        Entries below this value count as structural zeros when the
        support mask for admissible perturbations is derived.
    """

    def __init__(self, entries, zero_threshold: float = DEFAULT_ZERO_THRESHOLD):
        A = _as_csc(entries)
        if A.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"matrix must be square, got {A.shape}")
        n = A.shape[0]
        if A.nnz:
            lo = A.data.min()
            hi = A.data.max()
            if lo < -COLUMN_SUM_TOL or hi > 1.0 + COLUMN_SUM_TOL:
                raise ValueError(
                    f"entries must lie in [0, 1]; found range [{lo:g}, {hi:g}]"
                )
        colsums = np.asarray(A.sum(axis=0)).ravel()
        worst = np.abs(colsums - 1.0).max() if n else 0.0
        if worst > COLUMN_SUM_TOL:
            raise ValueError(
                f"columns must sum to 1 within {COLUMN_SUM_TOL:g}; "
                f"worst deviation {worst:g}"
            )
        self._entries = A
        self._entries.data.flags.writeable = False
        self.n = n
        self.zero_threshold = float(zero_threshold)
        self._mixing: Optional[bool] = None
        self._stationary: Optional[np.ndarray] = None
        self._lu_forward = None
        self._lu_adjoint = None

    @property
    def entries(self) -> sp.csc_matrix:
        return self._entries

    def toarray(self) -> np.ndarray:
        return self._entries.toarray()

    # -- structure ------------------------------------------------------

    def support_mask(self) -> sp.csc_matrix:
        """Boolean mask of entries where a perturbation may act.

        Admissible entries are those strictly between the structural-zero
        threshold and 1 (within 1e-12): perturbing a structural zero or a
        structural one would change which transitions are possible.
        """
        A = self._entries
        keep = (A.data > self.zero_threshold) & (np.abs(A.data - 1.0) > ONE_THRESHOLD)
        mask = sp.csc_matrix(
            (keep, A.indices.copy(), A.indptr.copy()), shape=A.shape, dtype=bool
        )
        mask.eliminate_zeros()
        return mask

    def admissible_rows(self) -> list[np.ndarray]:
        """Sorted admissible row indices, one array per column."""
        mask = self.support_mask()
        mask.sort_indices()
        return [
            mask.indices[mask.indptr[j]:mask.indptr[j + 1]].copy()
            for j in range(self.n)
        ]

    # -- mixing ---------------------------------------------------------

    def is_mixing(self) -> bool:
        """Whether some power of the matrix is entrywise positive.

        Checked on the sparsity pattern by repeated squaring: a primitive
        column-stochastic matrix has M^N > 0 for N = (n-1)^2 + 1, and all
        larger powers stay positive because no column is zero, so testing
        powers of two up to that bound is exact.
        """
        if self._mixing is None:
            self._mixing = self._pattern_mixing()
        return self._mixing

    def _pattern_mixing(self) -> bool:
        n = self.n
        if n == 1:
            return self._entries[0, 0] > 0
        P = self._entries.tocsr().copy()
        P.data = np.ones_like(P.data)
        full = n * n
        bound = (n - 1) ** 2 + 1
        power = 1
        while True:
            if P.nnz == full:
                return True
            if power >= bound:
                return False
            P = P @ P
            P.data[:] = 1.0
            power *= 2

    def require_mixing(self) -> None:
        if not self.is_mixing():
            raise NonMixing("matrix is not mixing (no positive power)")

    # -- cached solvers ---------------------------------------------------

    def _forward_lu(self):
        """LU factors of (I - M) with its last row replaced by 1^T.

        The rows of I - M sum to zero, so dropping one row loses nothing,
        and appending the zero-sum constraint yields a square nonsingular
        system whenever the chain is mixing.
        """
        if self._lu_forward is None:
            n = self.n
            A = (sp.identity(n, format="csr") - self._entries.tocsr())[: n - 1]
            ones = sp.csr_matrix(np.ones((1, n)))
            C = sp.vstack([A, ones]).tocsc()
            try:
                self._lu_forward = spla.splu(C)
            except RuntimeError as exc:
                raise SingularSystem(
                    f"response system is singular ({exc}); matrix may be non-mixing"
                ) from exc
        return self._lu_forward

    def _adjoint_lu(self, h: np.ndarray):
        """LU factors of (I - M^T) with its last row replaced by h^T."""
        if self._lu_adjoint is None:
            n = self.n
            A = (sp.identity(n, format="csc") - self._entries).T.tocsr()[: n - 1]
            hrow = sp.csr_matrix(h.reshape(1, n))
            C = sp.vstack([A, hrow]).tocsc()
            try:
                self._lu_adjoint = spla.splu(C)
            except RuntimeError as exc:
                raise SingularSystem(
                    f"adjoint system is singular ({exc}); matrix may be non-mixing"
                ) from exc
        return self._lu_adjoint

    def solve_response(self, v: np.ndarray) -> np.ndarray:
        """Solve (I - M) u = v with sum(u) = 0 for zero-sum v."""
        rhs = np.array(v, dtype=np.float64)
        rhs[-1] = 0.0
        return self._forward_lu().solve(rhs)

    def solve_adjoint(self, c: np.ndarray, h: np.ndarray) -> np.ndarray:
        """Solve (I - M + h 1^T)^T w = c exactly.

        Equivalent sparse form: (I - M^T) w = c - (h.c) 1 with the
        normalisation h.w = h.c pinning the additive constant.
        """
        c = np.asarray(c, dtype=np.float64)
        hc = float(h @ c)
        rhs = c - hc
        rhs[-1] = hc
        return self._adjoint_lu(h).solve(rhs)

    def __repr__(self) -> str:
        return (
            f"StochasticMatrix(n={self.n}, nnz={self._entries.nnz}, "
            f"zero_threshold={self.zero_threshold:g})"
        )


class Perturbation:
    """Additive perturbation direction with zero column sums.

    Parameters
    ----------
    entries : array_like or sparse
        Square matrix whose columns each sum to 0 within 1e-12.
    support : sparse bool matrix, optional
        Entries allowed to be nonzero.  Defaults to the pattern of
        ``entries``; when given, ``entries`` must vanish off it.
    epsilon_range : (float, float), optional
        Feasible magnitudes (eps_minus, eps_plus) preserving nonnegativity
        of ``M + eps*m``, reported by the optimisers.
    require_unit_norm : bool
        Enforce Frobenius norm 1 within 1e-12 (optimiser outputs).
    """

    def __init__(self, entries, support=None, epsilon_range=None,
                 require_unit_norm: bool = False):
        A = _as_csc(entries)
        if A.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"perturbation must be square, got {A.shape}")
        n = A.shape[0]
        colsums = np.asarray(A.sum(axis=0)).ravel()
        worst = np.abs(colsums).max() if n else 0.0
        if worst > COLUMN_SUM_TOL:
            raise ValueError(
                f"perturbation columns must sum to 0 within {COLUMN_SUM_TOL:g}; "
                f"worst deviation {worst:g}"
            )
        if support is not None:
            S = support.tocsc() if sp.issparse(support) else sp.csc_matrix(
                np.asarray(support, dtype=bool))
            if S.shape != A.shape:
                raise DimensionMismatch("support mask shape differs from entries")
            off = A.copy()
            off.data = np.abs(off.data)
            masked = off - off.multiply(S.astype(np.float64))
            if masked.nnz and np.abs(masked.data).max() > 0:
                raise ValueError("perturbation has entries outside its support")
            self.support = S.astype(bool)
        else:
            pattern = A.copy()
            pattern.data = np.ones_like(pattern.data)
            self.support = pattern.astype(bool)
        norm = float(np.sqrt((A.data ** 2).sum()))
        if require_unit_norm and abs(norm - 1.0) > COLUMN_SUM_TOL:
            raise ValueError(f"Frobenius norm must be 1, got {norm!r}")
        self._entries = A
        self._entries.data.flags.writeable = False
        self.n = n
        self.frobenius_norm = norm
        self.epsilon_range = tuple(epsilon_range) if epsilon_range is not None else None

    @property
    def entries(self) -> sp.csc_matrix:
        return self._entries

    def toarray(self) -> np.ndarray:
        return self._entries.toarray()

    def __neg__(self) -> "Perturbation":
        return Perturbation(-self._entries, support=self.support,
                            epsilon_range=None if self.epsilon_range is None
                            else (-self.epsilon_range[1], -self.epsilon_range[0]))

    def __matmul__(self, v: np.ndarray) -> np.ndarray:
        return self._entries @ v

    def __repr__(self) -> str:
        return (
            f"Perturbation(n={self.n}, nnz={self._entries.nnz}, "
            f"fro={self.frobenius_norm:.6g})"
        )


@dataclass
class ResponseResult:
    """Stationary vector, first-order response and objective diagnostics."""

    h: np.ndarray
    u1: np.ndarray
    objective: float
    sign_probe_epsilon: Optional[float] = None
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        if abs(self.u1.sum()) > 1e-10:
            raise ValueError("response vector must have zero sum within 1e-10")
        if self.h.min() < 0 or abs(self.h.sum() - 1.0) > 1e-10:
            raise ValueError("h must be a probability vector")


def _coerce_perturbation_matrix(m) -> sp.csc_matrix:
    if isinstance(m, Perturbation):
        return m.entries
    return _as_csc(m)


def stationary_distribution(M: StochasticMatrix,
                            residual_tol: float = STATIONARY_RESIDUAL_TOL,
                            max_iterations: int = STATIONARY_MAX_ITER) -> np.ndarray:
    """Unique stationary probability vector of a mixing matrix.

    Power iteration with residual stopping (``||M h - h|| < residual_tol``);
    a dense eigensolve is used as fallback for n <= 500 if the iteration
    budget runs out.

    Raises
    ------
    NonMixing
        If no power of M is entrywise positive.
    NoConvergence
        If the iteration budget is exhausted (and no dense fallback applies).
    """
    M.require_mixing()
    if M._stationary is not None:
        return M._stationary.copy()
    A = M.entries
    n = M.n
    x = np.full(n, 1.0 / n)
    Ax = A @ x
    converged = False
    for _ in range(max_iterations):
        if np.linalg.norm(Ax - x) < residual_tol:
            converged = True
            break
        x = Ax / Ax.sum()
        Ax = A @ x
    if not converged:
        if n <= DENSE_EIG_FALLBACK_N:
            x = _dense_stationary(A.toarray())
        else:
            raise NoConvergence(
                f"stationary iteration did not reach {residual_tol:g} "
                f"in {max_iterations} steps"
            )
    h = x / x.sum()
    if np.linalg.norm(A @ h - h) > 10 * residual_tol:
        raise NoConvergence("stationary residual above tolerance after solve")
    if h.min() <= 0:
        raise NoConvergence("stationary vector has nonpositive entries")
    M._stationary = h.copy()
    return h


def _dense_stationary(A: np.ndarray) -> np.ndarray:
    vals, vecs = scipy.linalg.eig(A)
    i = int(np.argmin(np.abs(vals - 1.0)))
    if abs(vals[i] - 1.0) > 1e-8:
        raise NoConvergence("no eigenvalue close to 1 in dense fallback")
    v = np.real(vecs[:, i])
    v = v / v.sum()
    return v


def linear_response(M: StochasticMatrix, h: np.ndarray, m,
                    residual_tol: float = RESPONSE_RESIDUAL_TOL) -> np.ndarray:
    """First-order response of the stationary vector to ``M -> M + eps*m``.

    Solves the augmented system stacking ``(I - M) u = m h`` with the
    zero-sum row, which avoids ever forming the dense generalized inverse
    and exploits sparsity.

    Raises
    ------
    SingularSystem
        If the solve fails or leaves a residual above ``residual_tol``.
    """
    mm = _coerce_perturbation_matrix(m)
    if mm.shape != (M.n, M.n):
        raise DimensionMismatch("perturbation shape differs from matrix")
    colsums = np.asarray(mm.sum(axis=0)).ravel()
    if colsums.size and np.abs(colsums).max() > 1e-10:
        raise ValueError("perturbation columns must sum to zero")
    v = mm @ h
    u = M.solve_response(v)
    res = np.linalg.norm(v - (u - M.entries @ u))
    if res > residual_tol or abs(u.sum()) > residual_tol:
        # one refinement sweep before giving up
        r = v - (u - M.entries @ u)
        r = r - h * r.sum()
        du = M.solve_response(r)
        u = u + du
        res = np.linalg.norm(v - (u - M.entries @ u))
        if res > residual_tol or abs(u.sum()) > residual_tol:
            raise SingularSystem(
                f"response residual {res:g} above {residual_tol:g}; "
                "matrix may be non-mixing"
            )
    return u


def response_result(M: StochasticMatrix, m,
                    sign_probe_epsilon: Optional[float] = None) -> ResponseResult:
    """Convenience bundle: stationary vector, response and squared norm."""
    h = stationary_distribution(M)
    u = linear_response(M, h, m)
    return ResponseResult(
        h=h,
        u1=u,
        objective=float(u @ u),
        sign_probe_epsilon=sign_probe_epsilon,
        notes={"zero_sum_residual": float(abs(u.sum()))},
    )


def fundamental_matrix(M: StochasticMatrix, h: Optional[np.ndarray] = None,
                       dense_cap: int = DENSE_INVERSE_CAP) -> np.ndarray:
    """Dense matrix ``Q = inv(I - M + h 1^T)``.

    ``Q`` is a generalized inverse of ``I - M`` satisfying
    ``(I-M) Q (I-M) = I-M`` and ``1^T Q = 1^T``; the response can be
    written ``u = Q m h``.  Only available up to ``dense_cap`` states;
    larger problems must use the augmented solves.
    """
    if M.n > dense_cap:
        raise TooLarge(f"n={M.n} exceeds dense cap {dense_cap}")
    if h is None:
        h = stationary_distribution(M)
    A = np.eye(M.n) - M.toarray() + np.outer(h, np.ones(M.n))
    return scipy.linalg.inv(A)


def feasible_epsilon_interval(M: StochasticMatrix, m) -> tuple[float, float]:
    """Range of eps keeping ``M + eps*m`` entrywise nonnegative.

    Returns ``(eps_minus, eps_plus)`` with ``eps_minus <= 0 <= eps_plus``;
    infinite endpoints mean no entry constrains that direction.
    """
    mm = _coerce_perturbation_matrix(m).tocoo()
    if mm.shape != (M.n, M.n):
        raise DimensionMismatch("perturbation shape differs from matrix")
    Mv = np.asarray(M.entries[mm.row, mm.col]).ravel()
    neg = mm.data < 0
    pos = mm.data > 0
    eps_plus = float(np.min(Mv[neg] / -mm.data[neg])) if neg.any() else np.inf
    eps_minus = float(-np.min(Mv[pos] / mm.data[pos])) if pos.any() else -np.inf
    return eps_minus, eps_plus


def perturbed_matrix(M: StochasticMatrix, m, eps: float,
                     feasibility_tol: float = 0.0) -> sp.csc_matrix:
    """Entries of ``M + eps*m`` after checking nonnegativity.

    Entries are allowed to dip to ``-feasibility_tol`` (treated as zeros of
    the perturbed chain, mirroring the structural-zero threshold); anything
    below that raises :class:`InfeasibleEpsilon`.
    """
    mm = _coerce_perturbation_matrix(m)
    P = (M.entries + eps * mm).tocsc()
    if P.nnz:
        lo = P.data.min()
        if lo < -feasibility_tol:
            raise InfeasibleEpsilon(
                f"M + eps*m has entry {lo:g} < {-feasibility_tol:g} at eps={eps:g}"
            )
    return P


def perturbed_stationary(M: StochasticMatrix, m, eps: float,
                         feasibility_tol: float = 0.0,
                         residual_tol: float = STATIONARY_RESIDUAL_TOL,
                         max_iterations: int = STATIONARY_MAX_ITER) -> np.ndarray:
    """Stationary vector of ``M + eps*m``.

    The perturbed matrix keeps exact column sums 1 (``m`` has zero column
    sums), so its leading eigenvector is computed by the same power
    iteration as :func:`stationary_distribution`.  Mixing is inherited from
    ``M`` as long as no entry of the support got cancelled.
    """
    if eps == 0.0:
        return stationary_distribution(M, residual_tol, max_iterations)
    P = perturbed_matrix(M, m, eps, feasibility_tol)
    n = M.n
    M.require_mixing()
    x = np.full(n, 1.0 / n)
    Px = P @ x
    for _ in range(max_iterations):
        if np.linalg.norm(Px - x) < residual_tol:
            return x / x.sum()
        x = Px / Px.sum()
        Px = P @ x
    if n <= DENSE_EIG_FALLBACK_N:
        v = _dense_stationary(P.toarray())
        return v / v.sum()
    raise NoConvergence(
        f"perturbed stationary iteration did not reach {residual_tol:g} "
        f"in {max_iterations} steps"
    )
