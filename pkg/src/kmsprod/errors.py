"""Exception hierarchy shared by all kmsprod modules."""


class KmsprodError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(KmsprodError, ValueError):
    """A distribution parameter or policy field violates its domain."""


class DomainError(KmsprodError, ValueError):
    """A function argument lies outside the supported domain."""


class PoleArgumentError(DomainError):
    """Argument sits on (or within tolerance of) a gamma/digamma pole."""


class MellinStripError(DomainError):
    """Mellin variable outside the strip of convergence."""


class CaseMismatchError(KmsprodError):
    """Coefficient requested for the wrong pole-structure case."""


class NonConvergenceError(KmsprodError, ArithmeticError):
    """A series hit its term budget before the stopping rule fired."""


class QuadratureError(KmsprodError, ArithmeticError):
    """Adaptive quadrature failed to reach the requested tolerance."""
