"""Exception hierarchy for probit_design.

Library code raises these and never prints; the CLI turns them into log
lines and a nonzero exit status.
"""


class ProbitDesignError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(ProbitDesignError, ValueError):
    """Input outside the domain of an operation (non-finite, out of range, inconsistent)."""


class DegenerateCorrelationError(ProbitDesignError):
    """A utility difference has zero variance or a correlation of +-1.

    Raised where a proper bivariate density is required; the caller has to
    collapse the choice set first.
    """


class InfiniteInformationError(ProbitDesignError):
    """A preference probability sits at 0 or 1 after collapsing duplicates."""


class NoFiniteOptimumError(ProbitDesignError):
    """The quantitative coefficient is zero, so no finite optimal setting exists."""


class OptimalityRefutedError(ProbitDesignError):
    """The equivalence-theorem certificate does not hold for the proposed support."""

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate
