"""Exception hierarchy shared by all modules."""


class AlmostCxError(Exception):
    """Base class for every error raised by the package."""


class AdmissibilityError(AlmostCxError, ValueError):
    """Structure out of admissible range (singular 1 + Q-bar, or norm too large)."""


class DomainError(AlmostCxError, ValueError):
    """A point lies outside the domain where an operation is defined."""


class SingularLocusError(DomainError):
    """Evaluation requested on the singular set of a candidate function."""


class NijenhuisObstructionError(AlmostCxError, ValueError):
    """The symmetry condition needed for normalization fails."""


class SolverError(AlmostCxError, RuntimeError):
    """The disc solver failed (non-contraction, domain exit, residual too large)."""


class RadiusTooLargeError(SolverError):
    pass


class LeftDomainError(SolverError):
    pass


class SchemaError(AlmostCxError, ValueError):
    """Experiment parameter block does not match its schema."""


class NormalizationError(AlmostCxError, ValueError):
    """The quadratic coordinate change cannot remove the frame's linear terms."""
