"""Maximising the Euclidean norm of the invariant-vector response.

Over unit-Frobenius perturbations with zero column sums (and, for general
matrices, support restricted to non-structural entries), the squared norm
of the response is a quadratic form in the basis coefficients; its maximum
is the leading eigenvalue of the reduced operator and the maximiser its
leading eigenvector.  For strictly positive matrices the reduced operator
factorises and the optimum has the closed form ``m* = B y h^T`` with ``y``
the leading right singular vector of the solution of one multi-column
response solve.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .basis import ConstraintBasis, assemble_perturbation, constraint_basis, \
    ones_nullspace_basis
from .errors import (
    DegenerateOptimumWarning,
    Inconclusive,
    InfeasibleEpsilon,
    NoConvergence,
    NotPositive,
)
from .markov import (
    Perturbation,
    StochasticMatrix,
    feasible_epsilon_interval,
    fundamental_matrix,
    linear_response,
    perturbed_stationary,
    stationary_distribution,
)

RAYLEIGH_TOL = 1e-11
POWER_ITERATION_CAP = 10 ** 4
SINGULAR_GAP_TOL = 1e-9
SIGN_PROBE_DEFAULT = 1e-3
SIGN_RESOLUTION = 1e-14
DENSE_CUTOFF = 60
_POWER_SEED = 20240814


@dataclass
class NormOptimum:
    """Perturbation maximising the squared response norm, with certificate.

    ``leading_singular_values`` holds the top two singular values of the
    reduced response operator; ``objective`` equals the square of the
    first.  ``unique`` is False when they coincide within 1e-9, in which
    case one maximiser of the optimal subspace is returned.
    """

    m_star: Perturbation
    u1: np.ndarray
    objective: float
    leading_singular_values: tuple[float, float]
    unique: bool
    sign_probe_epsilon: Optional[float] = None
    notes: dict = field(default_factory=dict)


def _power_top_pair(matvec: Callable[[np.ndarray], np.ndarray], dim: int,
                    rayleigh_tol: float = RAYLEIGH_TOL,
                    maxiter: int = POWER_ITERATION_CAP,
                    deflate: Optional[np.ndarray] = None,
                    strict: bool = True,
                    seed: int = _POWER_SEED):
    """Leading eigenpair of a PSD operator by power iteration with
    relative Rayleigh-quotient stopping.  Optionally deflates a known
    eigenvector first."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    if deflate is not None:
        v -= deflate * (deflate @ v)
    nv = np.linalg.norm(v)
    if nv == 0:
        raise NoConvergence("degenerate start vector")
    v /= nv
    theta_old = np.inf
    theta = 0.0
    its = 0
    converged = False
    for its in range(1, maxiter + 1):
        w = matvec(v)
        if deflate is not None:
            w -= deflate * (deflate @ w)
        theta = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            theta = 0.0
            converged = True
            break
        if abs(theta - theta_old) <= rayleigh_tol * max(abs(theta), 1e-300):
            v = w / nw
            converged = True
            break
        theta_old = theta
        v = w / nw
    if strict and not converged:
        raise NoConvergence(
            f"power iteration did not meet Rayleigh tolerance {rayleigh_tol:g} "
            f"in {maxiter} steps")
    return max(theta, 0.0), v, its, converged


def select_sign(M: StochasticMatrix, m: Perturbation, probe_epsilon: float,
                feasibility_tol: float = 0.0) -> Perturbation:
    """Orient a perturbation so the probed finite change increases the
    stationary vector's norm.

    Computes the stationary vectors of ``M + eps*m`` and ``M - eps*m`` at
    ``eps = probe_epsilon`` and returns whichever sign of ``m`` gives the
    larger norm.

    Raises
    ------
    InfeasibleEpsilon
        If either probe leaves the feasible set.
    Inconclusive
        If the two probed norms differ by less than 1e-14.
    """
    signed, _ = _select_sign_info(M, m, probe_epsilon, feasibility_tol)
    return signed


def _select_sign_info(M, m, probe_epsilon, feasibility_tol=0.0):
    hp = perturbed_stationary(M, m, +probe_epsilon, feasibility_tol)
    hm = perturbed_stationary(M, m, -probe_epsilon, feasibility_tol)
    diff = float(np.linalg.norm(hp) - np.linalg.norm(hm))
    if abs(diff) < SIGN_RESOLUTION:
        raise Inconclusive(
            f"norm probes at eps={probe_epsilon:g} differ by {diff:g}")
    return (m if diff > 0 else -m), diff


def _default_probe(eps_range, requested: Optional[float]) -> float:
    if requested is not None:
        return float(requested)
    lo, hi = eps_range
    span = min(hi, -lo)  # both signs are probed
    if not np.isfinite(span):
        return SIGN_PROBE_DEFAULT
    return min(SIGN_PROBE_DEFAULT, 0.1 * span)


def _apply_sign(M, m, u1, probe, notes):
    """Probe-based orientation shared by the norm optimisers."""
    try:
        signed, diff = _select_sign_info(M, m, probe)
        notes["sign_probe_difference"] = diff
        if diff < 0:
            return signed, -u1
        return signed, u1
    except Inconclusive:
        notes["sign"] = "inconclusive (degenerate direction, kept +m)"
        return m, u1
    except InfeasibleEpsilon:
        notes["sign"] = "probe infeasible, kept +m"
        return m, u1


def optimize_norm_positive(M: StochasticMatrix,
                           probe_epsilon: Optional[float] = None,
                           svd_cutoff: int = 500) -> NormOptimum:
    """Norm-response optimum for a strictly positive matrix.

    Solves one multi-column augmented system for ``X`` with columns the
    images of the zero-sum basis under the generalized inverse, takes the
    leading right singular vector ``y`` of ``X`` scaled to
    ``||y|| = 1/||h||``, and assembles the rank-one optimum
    ``m* = (B y) h^T``.  The optimal objective is ``s1^2 ||h||^2`` where
    ``s1`` is the leading singular value of ``X``.

    Raises
    ------
    NotPositive
        If any entry of ``M`` is zero (use :func:`optimize_norm_general`).
    """
    n = M.n
    A = M.entries
    if A.nnz < n * n or A.data.min() <= 0.0:
        raise NotPositive("matrix must be entrywise positive")
    h = stationary_distribution(M)
    hnorm = float(np.linalg.norm(h))
    B = ones_nullspace_basis(n)
    rhs = np.vstack([B[:-1, :], np.zeros((1, n - 1))])
    X = M._forward_lu().solve(rhs)

    if n <= svd_cutoff:
        _, s, Vt = np.linalg.svd(X, full_matrices=False)
        s1 = float(s[0])
        s2 = float(s[1]) if len(s) > 1 else 0.0
        y = Vt[0]
        iterations = 0
    else:
        def matvec(v):
            return X.T @ (X @ v)
        th1, y, it1, _ = _power_top_pair(matvec, n - 1)
        th2, _, it2, _ = _power_top_pair(matvec, n - 1, deflate=y, strict=False)
        s1, s2 = float(np.sqrt(th1)), float(np.sqrt(th2))
        iterations = it1 + it2

    y = y / np.linalg.norm(y) / hnorm
    m_dense = np.outer(B @ y, h)
    u1 = (hnorm ** 2) * (X @ y)
    objective = (s1 * hnorm) ** 2
    eps_range = feasible_epsilon_interval(M, m_dense)
    m = Perturbation(m_dense, epsilon_range=eps_range)

    singulars = (s1 * hnorm, s2 * hnorm)
    unique = (singulars[0] - singulars[1]) > SINGULAR_GAP_TOL
    notes = {"iterations": iterations, "epsilon_range": eps_range}
    if not unique:
        warnings.warn("top two singular values coincide; optimum not unique",
                      DegenerateOptimumWarning)
    probe = _default_probe(eps_range, probe_epsilon)
    m, u1 = _apply_sign(M, m, u1, probe, notes)
    return NormOptimum(m_star=m, u1=u1, objective=float(objective),
                       leading_singular_values=singulars, unique=unique,
                       sign_probe_epsilon=probe, notes=notes)


def _dense_reduced_operator(M: StochasticMatrix, h: np.ndarray,
                            basis: ConstraintBasis) -> np.ndarray:
    """Reduced response operator as a dense n x total_dim matrix (small n)."""
    Q = fundamental_matrix(M, h)
    out = np.zeros((M.n, basis.total_dim))
    off = 0
    for j in basis._active_cols:
        V = basis.column_basis(int(j)).vectors
        d = V.shape[1]
        out[:, off:off + d] = h[j] * (Q @ V)
        off += d
    return out


def optimize_norm_general(M: StochasticMatrix,
                          probe_epsilon: Optional[float] = None,
                          basis_rng: Optional[np.random.Generator] = None,
                          dense_cutoff: int = DENSE_CUTOFF,
                          rayleigh_tol: float = RAYLEIGH_TOL,
                          max_power_iterations: int = POWER_ITERATION_CAP
                          ) -> NormOptimum:
    """Norm-response optimum for a general mixing matrix.

    The feasible set is parametrised by the block-diagonal orthonormal
    basis of admissible perturbations; the optimum is the leading
    eigenvector of the reduced quadratic form.  Small problems
    (``n <= dense_cutoff``) compute the reduced operator densely and use
    an exact SVD; larger ones apply it matrix-free (assemble, multiply by
    ``h``, one augmented response solve, and the adjoint chain) inside a
    power iteration, never forming any n^2-sized object.

    Parameters
    ----------
    basis_rng : numpy Generator, optional
        Randomises the orthonormal basis of each column block.  With a
        simple leading eigenvalue the returned perturbation is unchanged
        up to sign.
    """
    M.require_mixing()
    h = stationary_distribution(M)
    basis = constraint_basis(M, rng=basis_rng)

    if M.n <= dense_cutoff:
        U = _dense_reduced_operator(M, h, basis)
        _, s, Vt = np.linalg.svd(U, full_matrices=False)
        s1 = float(s[0])
        s2 = float(s[1]) if len(s) > 1 else 0.0
        alpha = Vt[0]
        u1 = U @ alpha
        objective = s1 ** 2
        notes = {"path": "dense", "iterations": 0}
    else:
        def matvec(a):
            v = basis.apply_response_rhs(a, h)
            u = M.solve_response(v)
            g = M.solve_adjoint(u, h)
            return basis.adjoint_coefficients(g, h)

        th1, alpha, it1, _ = _power_top_pair(
            matvec, basis.total_dim, rayleigh_tol, max_power_iterations)
        th2, _, it2, conv2 = _power_top_pair(
            matvec, basis.total_dim, rayleigh_tol, max_power_iterations,
            deflate=alpha, strict=False)
        s1 = float(np.sqrt(max(th1, 0.0)))
        s2 = float(np.sqrt(max(th2, 0.0)))
        u1 = M.solve_response(basis.apply_response_rhs(alpha, h))
        objective = th1
        notes = {"path": "matrix-free", "iterations": it1 + it2,
                 "second_pair_converged": conv2}

    m = assemble_perturbation(basis, alpha)
    eps_range = feasible_epsilon_interval(M, m)
    m = assemble_perturbation(basis, alpha, epsilon_range=eps_range)
    notes["epsilon_range"] = eps_range

    unique = (s1 - s2) > SINGULAR_GAP_TOL
    if not unique:
        warnings.warn("top two singular values coincide; optimum not unique",
                      DegenerateOptimumWarning)
    probe = _default_probe(eps_range, probe_epsilon)
    m, u1 = _apply_sign(M, m, u1, probe, notes)
    return NormOptimum(m_star=m, u1=u1, objective=float(objective),
                       leading_singular_values=(s1, s2), unique=unique,
                       sign_probe_epsilon=probe, notes=notes)
