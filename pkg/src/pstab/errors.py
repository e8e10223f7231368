"""Exception and warning types shared across the package."""


class PstabError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(PstabError):
    """Malformed input: bad domain bounds, intervals, config fields, sizes.

    ``path`` optionally names the config field ("section.field") that failed.
    """

    def __init__(self, message, path=None):
        self.path = path
        if path is not None:
            message = f"{path}: {message}"
        super().__init__(message)


class GridTooCoarse(ValidationError):
    """Fewer interior grid points than the discretization supports."""


class EllipticityViolation(PstabError):
    """Sampled diffusion coefficient leaves the declared ellipticity band."""


class ConvergenceFailure(PstabError):
    """The symmetric eigensolver did not converge."""


class EmptySubdomain(PstabError):
    """A control subdomain indicator marks no grid nodes."""


class DegenerateGram(PstabError):
    """Gram matrix is numerically rank deficient for the requested mode count."""


class BadExponent(ValidationError):
    """Integrability exponent outside the admissible range (q must exceed 2)."""


class SingularStep(PstabError):
    """An implicit time step produced a numerically singular system."""


class NoAdmissibleK(PstabError):
    """No head size gives the tail map the required contraction margin."""


class BoundViolated(PstabError):
    """Perturbed-eigenvalue bound check failed; the grid is too coarse."""


class PerturbationTooLarge(PstabError):
    """Control matrix is numerically singular; the perturbation regime is gone."""


class ResidualCheckFailed(PstabError):
    """Synthesized control failed its final periodicity residual check."""


class NearSingularControl(UserWarning):
    """Warning: control matrix condition is close to the failure threshold."""


class ExprError(PstabError):
    """Base class for expression language errors."""


class ExprSyntaxError(ExprError):
    """Parse failure, carrying the byte offset and the expected token kinds."""

    def __init__(self, message, offset, expected=()):
        self.offset = offset
        self.expected = tuple(expected)
        detail = f"{message} at offset {offset}"
        if self.expected:
            detail += " (expected " + " | ".join(self.expected) + ")"
        super().__init__(detail)


class UnknownIdentifier(ExprSyntaxError):
    """Identifier outside the fixed variable/function table."""


class ArityMismatch(ExprSyntaxError):
    """Function called with the wrong number of arguments."""


class DomainError(ExprError):
    """Evaluation left the real domain (log of a nonpositive value, etc.)."""
