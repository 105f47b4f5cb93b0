"""Exception types raised by the engine.

Every error derives from :class:`GasDynError` so callers (the CLI in
particular) can map whole families onto exit codes.
"""


class GasDynError(Exception):
    """Base class for all engine errors."""


class DomainError(GasDynError, ValueError):
    """An argument lies outside the domain of an operation."""


class NonPositivePressure(DomainError):
    pass


class NonPositiveDensity(DomainError):
    pass


class NonPositiveSpecificVolume(DomainError):
    pass


class DegenerateGamma(DomainError):
    """gamma is 0 or 1, where the gamma-law closure divides by zero."""


class UnknownPreset(GasDynError, KeyError):
    pass


class ResonantWavenumber(DomainError):
    """The requested wavenumber does not fit the periodic mass interval."""


class GridMismatch(GasDynError, ValueError):
    pass


class InsufficientHistory(GasDynError, ValueError):
    pass


class JacobianCollapse(DomainError):
    pass


class StepError(GasDynError, RuntimeError):
    """A time step could not be completed."""


class NewtonDivergence(StepError):
    pass


class StateLeftDomain(StepError):
    """p or the discrete specific volume became non-positive."""


class CFLViolation(StepError):
    pass


class DegreeOverflow(GasDynError, ValueError):
    pass


class MissingPartials(GasDynError, ValueError):
    pass


class IndexOutOfRange(GasDynError, IndexError):
    pass


class ConfigInvalid(GasDynError, ValueError):
    pass
