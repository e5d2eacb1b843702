"""Maximising the response of an observable's expectation.

For a cost vector ``c`` the first-order change of ``<c, h>`` under
``M -> M + eps*m`` is ``eps * w^T m h`` with adjoint weights
``w = Q^T c``.  Under the unit-Frobenius, zero-column-sum and support
constraints the maximiser is available in closed form: on the admissible
rows of column ``j``,

    m*_ij  propto  h_j * (w_i - mean of w over the column's admissible rows),

normalised to unit Frobenius norm.  Columns with at most one admissible
row admit no variation and stay zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .basis import ConstraintBasis, centered_columns
from .errors import ConstantObservable, EmptyFeasibleSet, SingularSystem, \
    ZeroGradient
from .markov import (
    Perturbation,
    StochasticMatrix,
    feasible_epsilon_interval,
    linear_response,
    stationary_distribution,
)

WEIGHT_RESIDUAL_TOL = 1e-10
CONSTANT_TOL = 1e-13
ZERO_GRADIENT_TOL = 1e-13


@dataclass
class ObservableVector:
    """Cost vector with its declared scaling convention.

    ``normalization`` records whether the values are raw samples or are
    density-scaled to Euclidean norm sqrt(n) (the convention under which
    inner products against probability vectors equal integrals against
    piecewise-constant densities).
    """

    values: np.ndarray
    normalization: str = "raw"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if self.normalization not in ("raw", "density"):
            raise ValueError(f"unknown normalization {self.normalization!r}")

    def require_nonconstant(self):
        c = self.values
        if np.linalg.norm(c - c.mean()) <= CONSTANT_TOL * max(1.0, np.linalg.norm(c)):
            raise ConstantObservable("observable is a multiple of the ones vector")


def _observable_values(c) -> np.ndarray:
    if isinstance(c, ObservableVector):
        return c.values
    return np.asarray(c, dtype=np.float64).ravel()


def adjoint_weights(M: StochasticMatrix, h: np.ndarray, c) -> np.ndarray:
    """Weights ``w`` with ``(I - M + h 1^T)^T w = c``.

    Solved sparsely through the equivalent augmented system; the residual
    of the original square system is verified to 1e-10.
    """
    M.require_mixing()
    cvec = _observable_values(c)
    w = M.solve_adjoint(cvec, h)
    residual = np.linalg.norm(w - M.entries.T @ w + (h @ w) - cvec)
    if residual > WEIGHT_RESIDUAL_TOL:
        raise SingularSystem(
            f"adjoint weight residual {residual:g} above {WEIGHT_RESIDUAL_TOL:g}")
    return w


@dataclass
class ExpectationOptimum:
    """Closed-form maximiser of the expectation response."""

    m_star: Perturbation
    u1: np.ndarray
    objective: float
    weights: np.ndarray
    nu: float
    notes: dict = field(default_factory=dict)


def optimize_expectation(M: StochasticMatrix, c) -> ExpectationOptimum:
    """Perturbation maximising the first-order change of ``<c, h>``.

    Raises
    ------
    ConstantObservable
        If ``c`` is (numerically) a multiple of the ones vector.
    EmptyFeasibleSet
        If no column admits variation.
    ZeroGradient
        If every column-centred weight vanishes, so the unit-norm
        constraint cannot be met.
    """
    cvec = _observable_values(c)
    if cvec.shape != (M.n,):
        raise ValueError(f"observable length {cvec.size} != n={M.n}")
    ObservableVector(cvec).require_nonconstant()
    h = stationary_distribution(M)
    w = adjoint_weights(M, h, cvec)

    layout = ConstraintBasis(M.n, M.admissible_rows())
    if layout.total_dim == 0:
        raise EmptyFeasibleSet("no column admits a perturbation")
    raw = centered_columns(layout, w[layout.rows_flat], column_scale=h)
    norm = float(np.sqrt((raw.data ** 2).sum()))
    if norm <= ZERO_GRADIENT_TOL * max(1.0, float(np.abs(w).max())):
        raise ZeroGradient("column-centred weights vanish on every column")
    mstar = raw / norm
    eps_range = feasible_epsilon_interval(M, mstar)
    m = Perturbation(mstar, support=layout.support_mask(),
                     epsilon_range=eps_range)
    u1 = linear_response(M, h, m)
    objective = float(cvec @ u1)
    return ExpectationOptimum(
        m_star=m, u1=u1, objective=objective, weights=w, nu=norm / 2.0,
        notes={"epsilon_range": eps_range},
    )
