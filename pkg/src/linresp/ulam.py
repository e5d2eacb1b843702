"""Transition matrices of noisy one-dimensional maps on a uniform grid.

A deterministic map followed by additive noise, uniform on a ball of
radius ``eps`` around the image (wrapped on the circle, truncated and
renormalised on the interval), pushes densities forward by an integral
operator with a piecewise-linear kernel.  Projecting onto indicators of
the ``n`` cells ``[(i-1)/n, i/n)`` yields the column-stochastic matrix

    M[i, j] = n * integral over I_j of  len(I_i ∩ B(T y)) / len(X ∩ B(T y)) dy,

where the inner intersection lengths are available in closed form and only
the integral over ``y`` needs quadrature (composite midpoint rule with a
configurable number of subsamples per cell).

The same module keeps the dictionary between matrix-level and
density-level quantities: a probability vector ``v`` represents the
density with cell values ``n*v``, matrix perturbations ``m`` represent
kernel-cell perturbations ``n*m``, and an observable with unit integral of
its square has Euclidean norm ``sqrt(n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp

from .errors import OutOfDomain, QuadratureFailure
from .markov import Perturbation, StochasticMatrix
from .observables import ObservableVector

CIRCLE = "circle"
INTERVAL = "interval"

DEFAULT_NOISE_RADIUS = 0.1
DEFAULT_SUBDIVISIONS = 32
COLUMN_SUM_FAIL = 1e-3
COLUMN_SUM_REPORT = 1e-6


def _lanford_det(x):
    return np.mod(2.0 * x + 0.5 * x * (1.0 - x), 1.0)


def _lanford_raw(x):
    return 2.0 * x + 0.5 * x * (1.0 - x)


def _logistic_det(x):
    return 4.0 * x * (1.0 - x)


def _double_lanford_det(x):
    # two half-scale copies of the circle map, one per half of the circle;
    # transitions between the halves happen only through the noise
    x = np.asarray(x, dtype=np.float64)
    lower = 0.5 * np.mod(_lanford_raw(2.0 * x), 1.0)
    upper = 0.5 * np.mod(_lanford_raw(2.0 * (x - 0.5)), 1.0) + 0.5
    return np.mod(np.where(x <= 0.5, lower, upper), 1.0)


@dataclass(frozen=True)
class MapSpec:
    """Deterministic part of the dynamics on [0, 1].

    ``kind`` is one of ``lanford``, ``logistic``, ``double_lanford`` or
    ``custom`` (then ``func`` and ``domain`` must be given).  The domain is
    either the circle (images taken mod 1) or the interval.
    """

    kind: str
    domain: str = CIRCLE
    func: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.domain not in (CIRCLE, INTERVAL):
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.kind == "custom" and self.func is None:
            raise ValueError("custom maps need a callable")


_BUILTIN_MAPS = {
    "lanford": MapSpec("lanford", CIRCLE, _lanford_det),
    "logistic": MapSpec("logistic", INTERVAL, _logistic_det),
    "double_lanford": MapSpec("double_lanford", CIRCLE, _double_lanford_det),
}


def make_map(name: str) -> MapSpec:
    """Built-in map by name (``lanford``, ``logistic``, ``double_lanford``;
    hyphens accepted)."""
    key = name.replace("-", "_")
    if key not in _BUILTIN_MAPS:
        raise ValueError(
            f"unknown map {name!r}; choose from {sorted(_BUILTIN_MAPS)}")
    return _BUILTIN_MAPS[key]


def map_point(spec: Union[MapSpec, str], x):
    """Deterministic image of ``x`` (scalar or array) under the map.

    Raises
    ------
    OutOfDomain
        If any point lies outside [0, 1].
    """
    if isinstance(spec, str):
        spec = make_map(spec)
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise OutOfDomain("points must lie in [0, 1]")
    fn = spec.func if spec.func is not None else _BUILTIN_MAPS[spec.kind].func
    vals = np.asarray(fn(arr), dtype=np.float64)
    if spec.domain == CIRCLE:
        vals = np.mod(vals, 1.0)
    elif np.any(vals < -1e-12) or np.any(vals > 1.0 + 1e-12):
        raise OutOfDomain("map image leaves the interval [0, 1]")
    return vals if np.ndim(x) else float(vals)


@dataclass(frozen=True)
class NoiseKernel:
    """Uniform noise on a ball of radius ``epsilon`` around the image.

    ``boundary`` is ``wrap`` (circle) or ``truncate`` (interval: the ball
    is clipped to [0, 1] and renormalised so each kernel slice still has
    mass one).
    """

    epsilon: float = DEFAULT_NOISE_RADIUS
    boundary: str = "wrap"

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 0.5:
            raise ValueError("noise radius must lie in (0, 0.5]")
        if self.boundary not in ("wrap", "truncate"):
            raise ValueError(f"unknown boundary rule {self.boundary!r}")

    @staticmethod
    def for_domain(domain: str, epsilon: float = DEFAULT_NOISE_RADIUS
                   ) -> "NoiseKernel":
        return NoiseKernel(epsilon, "wrap" if domain == CIRCLE else "truncate")


def noise_cell_weights(center: float, noise: NoiseKernel, n: int) -> np.ndarray:
    """Mass the noise ball around ``center`` gives to each of the n cells
    (the kernel column profile); sums to 1."""
    eps = noise.epsilon
    w = np.zeros(n)
    if noise.boundary == "wrap":
        lo = int(np.floor(n * (center - eps)))
        hi = int(np.floor(n * (center + eps)))
        t = np.arange(lo, hi + 1)
        overlap = np.clip(
            np.minimum(center + eps, (t + 1) / n) - np.maximum(center - eps, t / n),
            0.0, None)
        np.add.at(w, t % n, overlap / (2.0 * eps))
    else:
        a = max(center - eps, 0.0)
        b = min(center + eps, 1.0)
        lo = max(int(np.floor(n * a)), 0)
        hi = min(int(np.floor(n * b)), n - 1)
        t = np.arange(lo, hi + 1)
        overlap = np.clip(
            np.minimum(b, (t + 1) / n) - np.maximum(a, t / n), 0.0, None)
        w[t] = overlap / (b - a)
    return w


@dataclass
class UlamModel:
    """Discretised annealed transfer operator of a noisy map."""

    map: MapSpec
    noise: NoiseKernel
    n: int
    M: StochasticMatrix
    subdivisions: int
    renormalization_error: float
    notes: dict = field(default_factory=dict)

    @property
    def cell_width(self) -> float:
        return 1.0 / self.n

    def cell_midpoints(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) / self.n


def _column_band_circle(c: np.ndarray, eps: float, n: int):
    lo = int(np.floor(n * (c.min() - eps)))
    hi = int(np.floor(n * (c.max() + eps)))
    t = np.arange(lo, hi + 1)
    left = np.maximum(c[:, None] - eps, t / n)
    right = np.minimum(c[:, None] + eps, (t + 1) / n)
    overlap = np.clip(right - left, 0.0, None)
    weights = overlap.sum(axis=0) / (2.0 * eps * len(c))
    return t % n, weights


def _column_band_interval(c: np.ndarray, eps: float, n: int):
    a = np.maximum(c - eps, 0.0)
    b = np.minimum(c + eps, 1.0)
    lo = max(int(np.floor(n * a.min())), 0)
    hi = min(int(np.floor(n * b.max())), n - 1)
    t = np.arange(lo, hi + 1)
    left = np.maximum(a[:, None], t / n)
    right = np.minimum(b[:, None], (t + 1) / n)
    overlap = np.clip(right - left, 0.0, None)
    weights = (overlap / (b - a)[:, None]).sum(axis=0) / len(c)
    return t, weights


def build_ulam(map_spec: Union[MapSpec, str], noise: Optional[NoiseKernel] = None,
               n: int = 2000, subdivisions: int = DEFAULT_SUBDIVISIONS,
               zero_threshold: Optional[float] = None) -> UlamModel:
    """Discretise the annealed transfer operator on ``n`` uniform cells.

    Per column the map image is evaluated at ``subdivisions`` midpoint
    quadrature nodes; the noise-ball intersection lengths with each cell
    are exact, so only the integral over the source cell is approximate.
    Kernel slices have exact unit mass, hence column sums equal 1 up to
    roundoff; they are renormalised to 1 exactly and the pre-adjustment
    deviation is reported.

    Raises
    ------
    QuadratureFailure
        If some column sum deviates from 1 by more than 1e-3.
    """
    if isinstance(map_spec, str):
        map_spec = make_map(map_spec)
    if noise is None:
        noise = NoiseKernel.for_domain(map_spec.domain)
    if map_spec.domain == CIRCLE and noise.boundary != "wrap":
        raise ValueError("circle maps need wraparound noise")
    if map_spec.domain == INTERVAL and noise.boundary != "truncate":
        raise ValueError("interval maps need truncated noise")
    if n < 2:
        raise ValueError("need at least two cells")
    K = int(subdivisions)
    if K < 1:
        raise ValueError("need at least one quadrature node per cell")

    eps = noise.epsilon
    rows_all = []
    cols_all = []
    vals_all = []
    band = _column_band_circle if noise.boundary == "wrap" else _column_band_interval
    for j in range(n):
        y = (j + (np.arange(K) + 0.5) / K) / n
        c = map_point(map_spec, y)
        rows, weights = band(np.atleast_1d(c), eps, n)
        keep = weights > 0.0
        rows_all.append(rows[keep])
        vals_all.append(weights[keep])
        cols_all.append(np.full(int(keep.sum()), j, dtype=np.int64))

    rows = np.concatenate(rows_all)
    cols = np.concatenate(cols_all)
    vals = np.concatenate(vals_all)
    M = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsc()
    colsums = np.asarray(M.sum(axis=0)).ravel()
    deviation = float(np.abs(colsums - 1.0).max())
    if deviation > COLUMN_SUM_FAIL:
        raise QuadratureFailure(
            f"column sums deviate from 1 by {deviation:g} before renormalisation")
    M = M @ sp.diags(1.0 / colsums)
    kwargs = {} if zero_threshold is None else {"zero_threshold": zero_threshold}
    model = UlamModel(
        map=map_spec, noise=noise, n=n, M=StochasticMatrix(M, **kwargs),
        subdivisions=K, renormalization_error=deviation,
        notes={"column_sum_deviation": deviation},
    )
    return model


# -- scaling dictionary -------------------------------------------------------

def density_from_vector(v: np.ndarray, n: Optional[int] = None) -> np.ndarray:
    """Cell values of the piecewise-constant density represented by a
    probability vector (sums to n instead of 1)."""
    v = np.asarray(v, dtype=np.float64)
    if n is not None and v.size != n:
        raise ValueError(f"vector length {v.size} != n={n}")
    return v * v.size


def vector_from_density(f: np.ndarray, n: Optional[int] = None) -> np.ndarray:
    """Probability vector of a piecewise-constant density given by its
    cell values."""
    f = np.asarray(f, dtype=np.float64)
    if n is not None and f.size != n:
        raise ValueError(f"density length {f.size} != n={n}")
    return f / f.size


def perturbation_kernel_scaling(m, n: Optional[int] = None):
    """Kernel-cell values of a matrix perturbation: ``n * m``.

    A unit-Frobenius matrix perturbation corresponds to a projected kernel
    perturbation of unit Hilbert-Schmidt norm.
    """
    entries = m.entries if isinstance(m, Perturbation) else m
    size = entries.shape[0]
    if n is not None and size != n:
        raise ValueError(f"perturbation size {size} != n={n}")
    return entries * size


def discretize_observable(func: Callable[[np.ndarray], np.ndarray], n: int
                          ) -> ObservableVector:
    """Sample an observable at cell midpoints and rescale to Euclidean
    norm sqrt(n) (unit integral of the square)."""
    x = (np.arange(n) + 0.5) / n
    raw = np.asarray(func(x), dtype=np.float64)
    norm = np.linalg.norm(raw)
    if norm == 0.0:
        raise ValueError("observable vanishes at every midpoint")
    return ObservableVector(np.sqrt(n) / norm * raw, normalization="density")


_BUILTIN_OBSERVABLES = {
    "two-sin-pi-x": lambda x: 2.0 * np.sin(np.pi * x),
}


def make_observable(name: str, n: int) -> ObservableVector:
    """Built-in observable by name, discretised on n cells."""
    if name not in _BUILTIN_OBSERVABLES:
        raise ValueError(
            f"unknown observable {name!r}; choose from {sorted(_BUILTIN_OBSERVABLES)}")
    return discretize_observable(_BUILTIN_OBSERVABLES[name], n)


def density_l2_norm_sq(v: np.ndarray) -> float:
    """Squared L2 norm of the density represented by a probability-level
    vector: ``n * sum(v^2)``."""
    v = np.asarray(v, dtype=np.float64)
    return float(v.size * (v @ v))


def observable_expectation(c, v: np.ndarray) -> float:
    """L2 pairing of a density-scaled observable with the density of a
    probability-level vector; equals the plain dot product."""
    cvec = c.values if isinstance(c, ObservableVector) else np.asarray(c)
    return float(cvec @ np.asarray(v))
