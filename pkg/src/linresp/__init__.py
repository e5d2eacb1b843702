"""Optimal linear response of finite-state Markov chains.

Computes first-order responses of stationary vectors, observable
expectations and convergence rates to matrix perturbations, finds the
perturbations maximising each of them (also along finite matrix
sequences), and discretises noisy one-dimensional maps into the required
column-stochastic matrices.
"""

from .errors import (
    ConstantObservable,
    DefectiveEigenvalue,
    DegenerateOptimumWarning,
    DimensionMismatch,
    DimensionTooSmall,
    EmptyFeasibleSet,
    Inconclusive,
    InfeasibleEpsilon,
    InputError,
    LinearResponseError,
    NoConvergence,
    NonMixing,
    NotPositive,
    NumericalError,
    OutOfDomain,
    QuadratureFailure,
    SingularSystem,
    SpectralGapAmbiguous,
    TooLarge,
    ZeroGradient,
    ZeroLambda2,
)
from .markov import (
    Perturbation,
    ResponseResult,
    StochasticMatrix,
    feasible_epsilon_interval,
    fundamental_matrix,
    linear_response,
    perturbed_stationary,
    response_result,
    stationary_distribution,
)
from .basis import (
    ColumnBasis,
    ConstraintBasis,
    assemble_perturbation,
    column_basis,
    constraint_basis,
    ones_nullspace_basis,
)
from .norm import (
    NormOptimum,
    optimize_norm_general,
    optimize_norm_positive,
    select_sign,
)
from .observables import (
    ExpectationOptimum,
    ObservableVector,
    adjoint_weights,
    optimize_expectation,
)
from .mixing import (
    MixingOptimum,
    SensitivityMatrix,
    SpectralPair,
    mixing_sensitivity,
    optimize_mixing,
    rate_derivative,
    second_eigenpair,
    second_eigenpair_of_perturbed,
)
from .sequential import (
    MatrixSequence,
    PerturbationSequence,
    SequentialExpectationOptimum,
    SequentialNormOptimum,
    optimize_sequential_expectation,
    optimize_sequential_norm,
    propagate,
    sequential_response,
)
from .ulam import (
    MapSpec,
    NoiseKernel,
    UlamModel,
    build_ulam,
    density_from_vector,
    density_l2_norm_sq,
    discretize_observable,
    make_map,
    make_observable,
    map_point,
    noise_cell_weights,
    observable_expectation,
    perturbation_kernel_scaling,
    vector_from_density,
)
from . import io

__version__ = "0.1.0"
