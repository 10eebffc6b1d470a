"""Exception types raised across the toolkit."""


class KFPError(Exception):
    """Base class for toolkit errors."""


class PotentialParseError(KFPError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NonConvergence(KFPError):
    """Newton refinement failed on sphere cells that were flagged as near-critical."""

    def __init__(self, message, cells=()):
        super().__init__(message)
        self.cells = list(cells)


class BreakdownError(KFPError):
    """Inverse iteration stagnated before reaching the requested accuracy."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class HypothesisViolated(KFPError):
    pass


class NotFound(KFPError):
    """No admissible constant in the search interval."""

    def __init__(self, message, min_eigenvalue=float("nan")):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class SupportViolation(KFPError):
    pass


class ClassificationAmbiguous(UserWarning):
    """A fine-partition patch straddles the epsilon_1 boundary."""
