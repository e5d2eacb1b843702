"""Exception and warning types raised across the library.

Exceptions fall into two groups, used by the command line driver to pick
exit codes: ``InputError`` subclasses indicate invalid or inadmissible
input (exit code 2), ``NumericalError`` subclasses indicate a solver or
discretisation failure on admissible input (exit code 3).
"""


class LinearResponseError(Exception):
    """Base class for all library-specific errors."""


class InputError(LinearResponseError, ValueError):
    """Invalid, infeasible or degenerate input."""


class NumericalError(LinearResponseError, RuntimeError):
    """A numerical procedure failed to reach its accuracy target."""


# -- input / precondition violations ----------------------------------------

class NonMixing(InputError):
    """No power of the matrix is entrywise positive."""


class NotPositive(InputError):
    """An operation requiring a strictly positive matrix got zeros."""


class DimensionMismatch(InputError):
    """Inconsistent dimensions between operands."""


class DimensionTooSmall(InputError):
    """The requested basis needs dimension at least 2."""


class EmptyFeasibleSet(InputError):
    """Every column forbids variation; no admissible perturbation exists."""


class InfeasibleEpsilon(InputError):
    """The perturbed matrix would have negative entries."""


class ConstantObservable(InputError):
    """The observable is a multiple of the all-ones vector."""


class ZeroGradient(InputError):
    """All column-centred weights vanish; the unit-norm constraint cannot
    be met by the closed-form solution."""


class OutOfDomain(InputError):
    """A point lies outside the map's domain."""


class TooLarge(InputError):
    """The problem exceeds the configured dense-computation cap."""


class Inconclusive(InputError):
    """Sign probes differ by less than the resolution threshold."""


class ZeroLambda2(InputError):
    """The subdominant eigenvalue vanishes; its relative rate of change
    is undefined."""


# -- numerical failures ------------------------------------------------------

class NoConvergence(NumericalError):
    """An iterative solver exhausted its iteration budget."""


class SingularSystem(NumericalError):
    """The response system could not be solved to tolerance (typically a
    symptom of a non-mixing matrix)."""


class SpectralGapAmbiguous(NumericalError):
    """The subdominant eigenvalue cannot be separated from the next one
    (ties between distinct moduli; conjugate pairs are fine)."""


class DefectiveEigenvalue(NumericalError):
    """The subdominant eigenvalue appears defective (left and right
    eigenvectors nearly orthogonal)."""


class QuadratureFailure(NumericalError):
    """Column sums of the discretised transfer operator deviate too far
    from 1 before renormalisation."""


# -- warnings ----------------------------------------------------------------

class DegenerateOptimumWarning(UserWarning):
    """Top two singular values of the reduced operator coincide; the
    optimiser is not unique and one representative is returned."""
