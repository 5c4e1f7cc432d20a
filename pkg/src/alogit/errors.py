"""Exception types shared across the package."""


class AlogitError(Exception):
    """Base class for all package errors."""


class NotPositiveDefinite(AlogitError):
    """A Cholesky factorization hit a non-positive pivot."""


class InvalidProbability(AlogitError):
    """A probability argument fell outside (0, 1)."""


class DegenerateCovariance(AlogitError):
    """Sample covariance rank is too low for the requested components."""


class SingularInformation(AlogitError):
    """The weighted Gram matrix is not positive definite; Newton step fails."""


class OneClassOnly(AlogitError):
    """Binary labels contain a single class."""


class IllConditioned(AlogitError):
    """Eigenvalue ratio is undefined (nu_min <= 0 or nu_max <= 1)."""


class NoSelectedVariables(AlogitError):
    """Every shrinkage indicator is zero; masked inverse undefined."""


class ZeroSupport(AlogitError):
    """Stopping rule undefined at zero estimated support."""


class EmptyUncertaintySet(AlogitError):
    """No candidates available for uncertainty sampling."""


class CannotBalance(AlogitError):
    """Initial sampling failed to produce both classes."""


class PoolExhausted(AlogitError):
    """No unlabeled subjects left before the stopping rule fired."""


class InsufficientClass(AlogitError):
    """A stratified split requested more subjects than a class holds."""


class NonBinaryLabel(AlogitError):
    """Label column contains values outside the configured binary coding."""


class ParseError(AlogitError):
    """A CSV cell failed to parse; carries row/column location."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column
