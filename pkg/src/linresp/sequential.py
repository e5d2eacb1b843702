"""Linear response along a finite sequence of stochastic matrices.

Pushing a probability vector through ``M0, M1, ..., M(tau-1)`` with each
step perturbed to ``Mt + eps*mt`` changes the terminal vector at first
order by ``eps * u`` where ``u`` follows the recursion

    u(0) = 0,     u(t+1) = Mt u(t) + mt h(t),

with ``h(t)`` the unperturbed trajectory.  The terminal-norm and
expectation objectives both optimise over perturbation sequences with a
joint Frobenius budget: the squared norms of all blocks sum to one.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .basis import ConstraintBasis, centered_columns
from .errors import (
    ConstantObservable,
    DegenerateOptimumWarning,
    DimensionMismatch,
    EmptyFeasibleSet,
)
from .markov import (
    Perturbation,
    StochasticMatrix,
    feasible_epsilon_interval,
    stationary_distribution,
)
from .norm import (
    POWER_ITERATION_CAP,
    RAYLEIGH_TOL,
    SIGN_PROBE_DEFAULT,
    SIGN_RESOLUTION,
    SINGULAR_GAP_TOL,
    _power_top_pair,
)


def _matrices_equal(A: StochasticMatrix, B: StochasticMatrix) -> bool:
    D = A.entries - B.entries
    return D.nnz == 0 or np.abs(D.data).max() == 0.0


@dataclass
class MatrixSequence:
    """Finite sequence of column-stochastic matrices with a start vector.

    ``h0`` defaults to the stationary vector of the first matrix when the
    sequence is constant; otherwise it must be supplied.
    """

    matrices: Sequence[StochasticMatrix]
    h0: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.matrices:
            raise DimensionMismatch("need at least one matrix")
        n = self.matrices[0].n
        for M in self.matrices:
            if M.n != n:
                raise DimensionMismatch("matrices must share one dimension")
        if self.h0 is None:
            same = all(_matrices_equal(self.matrices[0], M)
                       for M in self.matrices[1:])
            if not same:
                raise ValueError("h0 required for a non-constant sequence")
            self.h0 = stationary_distribution(self.matrices[0])
        self.h0 = np.asarray(self.h0, dtype=np.float64).ravel()
        if self.h0.shape != (n,):
            raise DimensionMismatch("h0 length differs from matrix dimension")
        if self.h0.min() < -1e-12 or abs(self.h0.sum() - 1.0) > 1e-10:
            raise ValueError("h0 must be a probability vector")

    @property
    def n(self) -> int:
        return self.matrices[0].n

    @property
    def tau(self) -> int:
        return len(self.matrices)


@dataclass
class PerturbationSequence:
    """One perturbation per step; ``joint_norm`` is the square root of the
    summed squared Frobenius norms (the shared budget)."""

    perturbations: Sequence[Perturbation]
    joint_norm: float = field(init=False)

    def __post_init__(self):
        if not self.perturbations:
            raise DimensionMismatch("need at least one perturbation")
        n = self.perturbations[0].n
        for m in self.perturbations:
            if m.n != n:
                raise DimensionMismatch("perturbations must share one dimension")
        self.joint_norm = float(np.sqrt(sum(
            m.frobenius_norm ** 2 for m in self.perturbations)))

    def __len__(self) -> int:
        return len(self.perturbations)

    def __iter__(self):
        return iter(self.perturbations)

    def __getitem__(self, t):
        return self.perturbations[t]


def propagate(seq: MatrixSequence) -> list[np.ndarray]:
    """Trajectory ``h(0), ..., h(tau)`` of exact pushforwards."""
    hs = [seq.h0.copy()]
    for M in seq.matrices:
        hs.append(M.entries @ hs[-1])
    return hs


def _response_trajectory(seq: MatrixSequence,
                         ms: Sequence[Perturbation]) -> list[np.ndarray]:
    if len(ms) != seq.tau:
        raise DimensionMismatch("need one perturbation per matrix")
    hs = propagate(seq)
    us = [np.zeros(seq.n)]
    for t, M in enumerate(seq.matrices):
        us.append(M.entries @ us[-1] + ms[t] @ hs[t])
    return us


def sequential_response(seq: MatrixSequence, ms) -> np.ndarray:
    """Terminal first-order response ``u(tau)`` of the trajectory."""
    blocks = list(ms.perturbations) if isinstance(ms, PerturbationSequence) else list(ms)
    return _response_trajectory(seq, blocks)[-1]


def _layouts(seq: MatrixSequence) -> list[ConstraintBasis]:
    return [ConstraintBasis(M.n, M.admissible_rows()) for M in seq.matrices]


def _split(alpha: np.ndarray, dims: list[int]) -> list[np.ndarray]:
    out = []
    off = 0
    for d in dims:
        out.append(alpha[off:off + d])
        off += d
    return out


@dataclass
class SequentialNormOptimum:
    perturbations: PerturbationSequence
    objective: float
    leading_singular_values: tuple[float, float]
    unique: bool
    notes: dict = field(default_factory=dict)


@dataclass
class SequentialExpectationOptimum:
    perturbations: PerturbationSequence
    objective: float
    weights: list[np.ndarray]
    notes: dict = field(default_factory=dict)


def optimize_sequential_norm(seq: MatrixSequence,
                             probe_epsilon: Optional[float] = None,
                             rayleigh_tol: float = RAYLEIGH_TOL,
                             max_power_iterations: int = POWER_ITERATION_CAP
                             ) -> SequentialNormOptimum:
    """Perturbation sequence maximising ``||u(tau)||^2`` under the joint
    unit budget.

    The reduced operator maps joint basis coefficients to the terminal
    response by running the response recursion (only sparse mat-vecs);
    its adjoint runs the transposed products backwards.  The optimum is
    the leading eigenvector of the associated quadratic form.  Afterwards
    each block's sign is chosen so the probed one-step pushforward
    ``(Mt + eps*mt) h(t)`` has larger norm than the unperturbed one; the
    attained maximum before these flips is kept in the notes.
    """
    hs = propagate(seq)
    layouts = _layouts(seq)
    dims = [b.total_dim for b in layouts]
    total = int(sum(dims))
    if total == 0:
        raise EmptyFeasibleSet("no step admits a perturbation")

    def forward(alpha):
        parts = _split(alpha, dims)
        u = np.zeros(seq.n)
        for t, M in enumerate(seq.matrices):
            u = M.entries @ u
            if dims[t]:
                u += layouts[t].apply_response_rhs(parts[t], hs[t])
        return u

    def adjoint(z):
        out = np.zeros(total)
        zt = z.copy()
        off = sum(dims)
        for t in range(seq.tau - 1, -1, -1):
            off -= dims[t]
            if dims[t]:
                out[off:off + dims[t]] = layouts[t].adjoint_coefficients(zt, hs[t])
            if t > 0:
                zt = seq.matrices[t].entries.T @ zt
        return out

    def matvec(a):
        return adjoint(forward(a))

    th1, alpha, it1, _ = _power_top_pair(matvec, total, rayleigh_tol,
                                         max_power_iterations)
    th2, _, it2, conv2 = _power_top_pair(matvec, total, rayleigh_tol,
                                         max_power_iterations, deflate=alpha,
                                         strict=False)
    s1, s2 = float(np.sqrt(max(th1, 0.0))), float(np.sqrt(max(th2, 0.0)))
    unique = (s1 - s2) > SINGULAR_GAP_TOL
    if not unique:
        warnings.warn("top two singular values coincide; optimum not unique",
                      DegenerateOptimumWarning)

    parts = _split(alpha, dims)
    blocks = []
    flips = []
    for t, M in enumerate(seq.matrices):
        mt = layouts[t].assemble(parts[t])
        eps_range = feasible_epsilon_interval(M, mt)
        span = min(eps_range[1], -eps_range[0])
        probe = probe_epsilon if probe_epsilon is not None else \
            min(SIGN_PROBE_DEFAULT, 0.1 * span) if np.isfinite(span) else \
            SIGN_PROBE_DEFAULT
        base = seq.matrices[t].entries @ hs[t]
        v = mt @ hs[t]
        diff = (np.linalg.norm(base + probe * v)
                - np.linalg.norm(base - probe * v))
        if diff < -SIGN_RESOLUTION:
            mt = -mt
            eps_range = (-eps_range[1], -eps_range[0])
            flips.append(t)
        blocks.append(Perturbation(mt, support=layouts[t].support_mask(),
                                   epsilon_range=eps_range))
    ms = PerturbationSequence(blocks)
    u = sequential_response(seq, ms)
    objective = float(u @ u)
    notes = {
        "iterations": it1 + it2,
        "second_pair_converged": conv2,
        "pre_flip_objective": float(th1),
        "sign_flips": flips,
    }
    return SequentialNormOptimum(perturbations=ms, objective=objective,
                                 leading_singular_values=(s1, s2),
                                 unique=unique, notes=notes)


def optimize_sequential_expectation(seq: MatrixSequence, c
                                    ) -> SequentialExpectationOptimum:
    """Perturbation sequence maximising ``<c, u(tau)>``.

    Block ``t`` weighs states by ``w(t) = (M(tau-1) ... M(t+1))^T c``;
    each block is the column-centred weight pattern scaled by the current
    ``h(t)``, and one joint normalisation fixes the shared budget.

    Raises
    ------
    ConstantObservable
        If ``c`` is constant, or all column-centred weights vanish.
    EmptyFeasibleSet
        If no step admits a perturbation.
    """
    cvec = np.asarray(c, dtype=np.float64).ravel()
    if cvec.shape != (seq.n,):
        raise DimensionMismatch(f"observable length {cvec.size} != n={seq.n}")
    if np.linalg.norm(cvec - cvec.mean()) <= 1e-13 * max(1.0, np.linalg.norm(cvec)):
        raise ConstantObservable("observable is a multiple of the ones vector")

    hs = propagate(seq)
    layouts = _layouts(seq)
    if sum(b.total_dim for b in layouts) == 0:
        raise EmptyFeasibleSet("no step admits a perturbation")

    ws = [np.zeros(seq.n)] * seq.tau
    ws[seq.tau - 1] = cvec.copy()
    for t in range(seq.tau - 2, -1, -1):
        ws[t] = seq.matrices[t + 1].entries.T @ ws[t + 1]

    raws = []
    for t in range(seq.tau):
        lay = layouts[t]
        if lay.total_dim == 0:
            raws.append(None)
            continue
        raws.append(centered_columns(lay, ws[t][lay.rows_flat],
                                     column_scale=hs[t]))
    joint = float(np.sqrt(sum(
        (r.data ** 2).sum() for r in raws if r is not None)))
    if joint <= 1e-13 * max(1.0, float(np.abs(cvec).max())):
        raise ConstantObservable(
            "all column-centred weights vanish; no ascent direction exists")

    blocks = []
    for t in range(seq.tau):
        if raws[t] is None:
            blocks.append(Perturbation(sp.csc_matrix((seq.n, seq.n))))
        else:
            blocks.append(Perturbation(raws[t] / joint,
                                       support=layouts[t].support_mask()))
    ms = PerturbationSequence(blocks)
    u = sequential_response(seq, ms)
    objective = float(cvec @ u)
    gains = [float(ws[t] @ (blocks[t] @ hs[t])) for t in range(seq.tau)]
    return SequentialExpectationOptimum(
        perturbations=ms, objective=objective, weights=ws,
        notes={"per_step_gain": gains},
    )
