"""Exception hierarchy shared by the certification pipeline."""


class CertificationError(Exception):
    """Base class for every error raised by :mod:`cvqrng`."""


class InvalidParameterError(CertificationError, ValueError):
    """A numeric parameter lies outside its admissible range."""


class TruncationError(CertificationError):
    """A photon-number cutoff is too small for the requested evaluation."""


class BudgetExceededError(CertificationError):
    """A brute-force oracle was asked for more work than it is allowed."""


class VerificationError(CertificationError):
    """A dual certificate failed independent re-verification."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = tuple(violations)
