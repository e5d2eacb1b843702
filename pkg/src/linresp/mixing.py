"""Maximising the response of the convergence rate to equilibrium.

The rate is governed by the modulus of the subdominant eigenvalue: the
eigenvalue strictly inside the unit circle with largest magnitude.  Its
first-order change under ``M -> M + eps*m`` is ``l* m r`` with ``l, r``
the left/right eigenvectors, and the derivative of ``Re log lambda2``
along ``m`` is the Frobenius pairing of ``m`` with the real sensitivity
matrix

    S_ij = Re(conj(lambda2) * conj(l_i) * r_j),

divided by ``|lambda2|^2``.  Minimising that linear functional under the
usual constraints again has a closed-form solution: column-centred ``S``
on the admissible entries, negated and normalised.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .basis import ConstraintBasis, centered_columns
from .errors import (
    DefectiveEigenvalue,
    EmptyFeasibleSet,
    NoConvergence,
    SpectralGapAmbiguous,
    ZeroGradient,
    ZeroLambda2,
)
from .markov import (
    Perturbation,
    StochasticMatrix,
    feasible_epsilon_interval,
    perturbed_matrix,
    perturbed_stationary,
    stationary_distribution,
)

EIG_RESIDUAL_TOL = 1e-9
GAP_TOL = 1e-9
DENSE_EIG_CUTOFF = 500
SPARSE_EIG_MAXITER = 10 ** 5
_EIG_SEED = 20240815


@dataclass
class SpectralPair:
    """Subdominant eigenvalue with its normalised eigenvector pair.

    Normalisations: ``r2`` has unit Euclidean norm and ``l2* r2 = 1``.
    ``gap_ok`` records whether the modulus is separated from the next
    distinct one by more than 1e-9 (a conjugate partner does not count).
    """

    lambda2: complex
    r2: np.ndarray
    l2: np.ndarray
    gap_ok: bool
    notes: dict = field(default_factory=dict)


@dataclass
class SensitivityMatrix:
    """Entrywise sensitivity of ``Re log lambda2`` to the matrix entries."""

    S: np.ndarray
    lambda2: complex


@dataclass
class MixingOptimum:
    """Perturbation maximally shrinking the subdominant modulus."""

    m_star: Perturbation
    predicted_rate: float
    pair: SpectralPair
    sensitivity: SensitivityMatrix
    notes: dict = field(default_factory=dict)


def _canonicalise(lam: complex, r: np.ndarray, l: np.ndarray):
    """Fix representative and phase: Im(lambda2) >= 0 and the largest
    entry of r2 real positive.  The sensitivity matrix is invariant under
    both choices."""
    if lam.imag < 0:
        lam = np.conj(lam)
        r = np.conj(r)
        l = np.conj(l)
    k = int(np.argmax(np.abs(r)))
    phase = r[k] / abs(r[k])
    r = r / phase
    l = l / phase
    return lam, r, l


def _normalise_pair(lam, r, l, residual_tol, A):
    r = r / np.linalg.norm(r)
    d = np.vdot(l, r)
    scale = np.linalg.norm(l) * np.linalg.norm(r)
    if abs(d) <= 1e-12 * scale:
        raise DefectiveEigenvalue(
            f"left/right eigenvectors nearly orthogonal (|l* r| = {abs(d):g})")
    l = l / np.conj(d)
    lam, r, l = _canonicalise(lam, r, l)
    res_r = np.linalg.norm(A @ r - lam * r)
    res_l = np.linalg.norm(A.T @ l - np.conj(lam) * l) / np.linalg.norm(l)
    if res_r > residual_tol or res_l > residual_tol:
        raise NoConvergence(
            f"eigenpair residuals ({res_r:g}, {res_l:g}) above {residual_tol:g}")
    return lam, r, l, {"residual_right": float(res_r), "residual_left": float(res_l)}


def _dense_second(A: np.ndarray, residual_tol: float, gap_tol: float) -> SpectralPair:
    vals, vl, vr = scipy.linalg.eig(A, left=True, right=True)
    mods = np.abs(vals)
    order = np.argsort(-mods)
    lam2_mod = mods[order[1]]
    cluster = [int(i) for i in order[1:] if mods[i] > lam2_mod - gap_tol]
    if len(cluster) == 1:
        idx = cluster[0]
    elif len(cluster) == 2:
        a, b = vals[cluster[0]], vals[cluster[1]]
        is_conj = (abs(a - np.conj(b)) <= 1e-8 * max(1.0, abs(a))
                   and abs(a.imag) > gap_tol)
        if is_conj:
            idx = cluster[0] if vals[cluster[0]].imag >= 0 else cluster[1]
        else:
            idx = cluster[0]
            r = vr[:, idx]
            l = vl[:, idx]
            if abs(np.vdot(l, r)) <= 1e-12 * np.linalg.norm(l) * np.linalg.norm(r):
                raise DefectiveEigenvalue(
                    "repeated subdominant eigenvalue with a nontrivial Jordan block")
            raise SpectralGapAmbiguous(
                f"two subdominant eigenvalues of equal modulus {lam2_mod:g} "
                "that are not a conjugate pair")
    else:
        raise SpectralGapAmbiguous(
            f"{len(cluster)} eigenvalues share the subdominant modulus {lam2_mod:g}")
    lam = complex(vals[idx])
    lam, r, l, notes = _normalise_pair(lam, vr[:, idx], vl[:, idx],
                                       residual_tol, A)
    partner = {i for i in cluster if i != idx}
    rest = [mods[i] for i in order[1:] if i != idx and i not in partner]
    gap_ok = (abs(lam) - max(rest, default=0.0)) > gap_tol
    notes["path"] = "dense"
    return SpectralPair(lambda2=lam, r2=r, l2=l, gap_ok=gap_ok, notes=notes)


def _project_zero_sum(v: np.ndarray, h: np.ndarray) -> np.ndarray:
    return v - h * v.sum()


def _scalar_power(apply_op, n: int, residual_tol: float, maxiter: int,
                  seed: int, start: Optional[np.ndarray] = None):
    """Power iteration for the dominant eigenvalue of a real operator.
    Returns (lam, v, converged); stalls (complex dominant pair) return
    converged=False."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n) if start is None else start.copy()
    v /= np.linalg.norm(v)
    history = []
    for it in range(1, maxiter + 1):
        w = apply_op(v)
        lam = float(v @ w)
        res = float(np.linalg.norm(w - lam * v))
        if res <= residual_tol:
            return lam, v, True
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0, v, True
        v = w / nw
        history.append(res)
        if it % 200 == 0 and len(history) > 300:
            if history[-1] > 0.9 * history[-301]:
                return lam, v, False
    return lam, v, False


def _block2_ritz(apply_op, n: int, residual_tol: float, maxiter: int, seed: int):
    """Two-dimensional subspace iteration; returns both Ritz pairs sorted
    by modulus once the leading one meets the residual target."""
    rng = np.random.default_rng(seed)
    V = np.linalg.qr(rng.standard_normal((n, 2)))[0]
    for _ in range(maxiter):
        W = np.column_stack([apply_op(V[:, 0]), apply_op(V[:, 1])])
        H = V.T @ W
        evals, evecs = np.linalg.eig(H)
        order = np.argsort(-np.abs(evals))
        evals, evecs = evals[order], evecs[:, order]
        x = V.astype(complex) @ evecs[:, 0]
        x /= np.linalg.norm(x)
        res = np.linalg.norm(apply_op(x) - evals[0] * x)
        if res <= residual_tol:
            y = V.astype(complex) @ evecs[:, 1]
            y /= np.linalg.norm(y)
            return (complex(evals[0]), x), (complex(evals[1]), y)
        V = np.linalg.qr(W)[0]
    raise NoConvergence("two-dimensional eigenvalue iteration did not converge")


def _sparse_second(A: sp.csc_matrix, h: np.ndarray, residual_tol: float,
                   gap_tol: float, maxiter: int) -> SpectralPair:
    n = A.shape[0]
    AT = A.T.tocsr()
    ones = np.ones(n)

    def op_right(v):
        return A @ v - h * v.sum()

    def op_left(v):
        return AT @ v - ones * (h @ v)

    target = 0.3 * residual_tol
    rng0 = np.random.default_rng(_EIG_SEED)
    start = _project_zero_sum(rng0.standard_normal(n), h)
    lam_r, vr_, ok = _scalar_power(op_right, n, target, maxiter, _EIG_SEED,
                                   start=start)
    complex_pair = False
    if ok:
        lam = complex(lam_r)
        r = vr_.astype(complex)
    else:
        (lam, r), (mu2, _) = _block2_ritz(op_right, n, target, maxiter, _EIG_SEED)
        complex_pair = abs(lam.imag) > gap_tol
        if not complex_pair and abs(abs(lam) - abs(mu2)) <= gap_tol \
                and abs(lam - np.conj(mu2)) > 1e-6 * max(1.0, abs(lam)):
            raise SpectralGapAmbiguous(
                "two subdominant eigenvalues of equal modulus that are not "
                "a conjugate pair")

    # left eigenvector for the same eigenvalue: A^T l = conj(lambda2) l
    if not complex_pair:
        lam_l, vl_, ok_l = _scalar_power(op_left, n, target, maxiter,
                                         _EIG_SEED + 1)
        if not ok_l or abs(lam_l - lam.real) > max(1e-6, 1e-6 * abs(lam)):
            raise NoConvergence("left eigenvector iteration disagrees with right")
        l = vl_.astype(complex)
    else:
        (nu1, w1), (nu2, w2) = _block2_ritz(op_left, n, target, maxiter,
                                            _EIG_SEED + 1)
        targetval = np.conj(lam)
        cands = [(abs(nu1 - targetval), w1), (abs(nu2 - targetval), w2)]
        cands.sort(key=lambda t: t[0])
        if cands[0][0] > 1e-6 * max(1.0, abs(lam)):
            raise NoConvergence("left eigenvalue does not match the right one")
        l = cands[0][1]

    lam, r, l, notes = _normalise_pair(lam, r, l, residual_tol, A)

    # rough third-modulus estimate for the gap flag
    lam_c, r_c, l_c = lam, r, l
    def op_deflated(v):
        corr = lam_c * r_c * np.vdot(l_c, v.astype(complex))
        if abs(lam_c.imag) > 0:
            corr = 2.0 * np.real(corr)
        else:
            corr = np.real(corr)
        return op_right(v) - corr
    lam3, _, _ = _scalar_power(op_deflated, n, max(1e-3 * abs(lam), 1e-12),
                               min(2000, maxiter), _EIG_SEED + 2)
    gap_ok = (abs(lam) - abs(lam3)) > gap_tol
    notes["path"] = "sparse"
    notes["lambda3_estimate"] = float(abs(lam3))
    return SpectralPair(lambda2=lam, r2=r, l2=l, gap_ok=gap_ok, notes=notes)


def second_eigenpair(M: StochasticMatrix,
                     dense_cutoff: int = DENSE_EIG_CUTOFF,
                     residual_tol: float = EIG_RESIDUAL_TOL,
                     gap_tol: float = GAP_TOL) -> SpectralPair:
    """Subdominant eigenvalue of ``M`` with normalised eigenvector pair.

    Small matrices use a dense two-sided eigensolve; larger ones use power
    iteration on the matrix with the known dominant pair ``(1, h, 1^T)``
    deflated, escalating to a two-dimensional subspace iteration when the
    subdominant pair is complex.

    Raises
    ------
    SpectralGapAmbiguous
        When distinct eigenvalues tie in modulus (conjugate pairs are
        fine; the representative with nonnegative imaginary part is
        returned).
    DefectiveEigenvalue
        When the left and right eigenvectors are nearly orthogonal.
    """
    M.require_mixing()
    if M.n < 2:
        raise ValueError("need at least two states")
    if M.n <= dense_cutoff:
        return _dense_second(M.toarray(), residual_tol, gap_tol)
    h = stationary_distribution(M)
    return _sparse_second(M.entries, h, residual_tol, gap_tol,
                          SPARSE_EIG_MAXITER)


def second_eigenpair_of_perturbed(M: StochasticMatrix, m, eps: float,
                                  feasibility_tol: float = 0.0,
                                  dense_cutoff: int = DENSE_EIG_CUTOFF,
                                  residual_tol: float = EIG_RESIDUAL_TOL,
                                  gap_tol: float = GAP_TOL) -> SpectralPair:
    """Subdominant eigenpair of ``M + eps*m``."""
    P = perturbed_matrix(M, m, eps, feasibility_tol)
    if M.n <= dense_cutoff:
        return _dense_second(P.toarray(), residual_tol, gap_tol)
    hP = perturbed_stationary(M, m, eps, feasibility_tol)
    return _sparse_second(P, hP, residual_tol, gap_tol, SPARSE_EIG_MAXITER)


def mixing_sensitivity(pair: SpectralPair) -> SensitivityMatrix:
    """Entrywise derivative data for ``Re log lambda2``.

    The derivative along a perturbation ``m`` is
    ``<S, m>_F / |lambda2|^2``; conjugating the eigenvalue representative
    leaves ``S`` unchanged.

    Raises
    ------
    ZeroLambda2
        If the subdominant eigenvalue (numerically) vanishes.
    """
    lam = pair.lambda2
    if abs(lam) <= 1e-12:
        raise ZeroLambda2("subdominant eigenvalue is zero")
    S = np.real(np.conj(lam) * np.outer(np.conj(pair.l2), pair.r2))
    return SensitivityMatrix(S=S, lambda2=lam)


def rate_derivative(sens: SensitivityMatrix, m) -> float:
    """Derivative of ``Re log lambda2`` along ``m`` (Frobenius pairing)."""
    entries = m.entries if isinstance(m, Perturbation) else m
    if sp.issparse(entries):
        coo = entries.tocoo()
        inner = float(np.sum(sens.S[coo.row, coo.col] * coo.data))
    else:
        inner = float(np.sum(sens.S * np.asarray(entries)))
    return inner / abs(sens.lambda2) ** 2


def optimize_mixing(M: StochasticMatrix,
                    dense_cutoff: int = DENSE_EIG_CUTOFF) -> MixingOptimum:
    """Perturbation maximally decreasing the subdominant modulus.

    The optimum is the column-centred sensitivity matrix on the admissible
    entries, negated and scaled to unit Frobenius norm; the predicted rate
    ``rho`` (derivative of ``Re log lambda2``) is negative.

    Raises
    ------
    ZeroLambda2, EmptyFeasibleSet, ZeroGradient
    """
    pair = second_eigenpair(M, dense_cutoff=dense_cutoff)
    sens = mixing_sensitivity(pair)
    layout = ConstraintBasis(M.n, M.admissible_rows())
    if layout.total_dim == 0:
        raise EmptyFeasibleSet("no column admits a perturbation")
    vals = sens.S[layout.rows_flat, layout.row_col]
    raw = centered_columns(layout, vals)
    norm = float(np.sqrt((raw.data ** 2).sum()))
    if norm <= 1e-13 * max(1.0, float(np.abs(sens.S).max())):
        raise ZeroGradient("column-centred sensitivities vanish on every column")
    mstar = raw * (-1.0 / norm)
    eps_range = feasible_epsilon_interval(M, mstar)
    m = Perturbation(mstar, support=layout.support_mask(),
                     epsilon_range=eps_range)
    rho = rate_derivative(sens, m)
    return MixingOptimum(
        m_star=m, predicted_rate=rho, pair=pair, sensitivity=sens,
        notes={"epsilon_range": eps_range},
    )
