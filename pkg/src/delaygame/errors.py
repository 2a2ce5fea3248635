"""Exception hierarchy shared by the library and the CLI."""


class DelayGameError(Exception):
    """Base class for all errors raised by :mod:`delaygame`."""


class DomainError(DelayGameError, ValueError):
    """An argument lies outside the domain of the operation."""


class UnidentifiedFundamentalError(DomainError):
    """Participation of exactly 0 or 1 does not pin down the fundamental.

    ``bound`` carries the one-sided information that remains: ``+inf`` when
    nobody acted (the fundamental is above every finite level the signal
    can certify) and ``-inf`` when everybody acted.
    """

    def __init__(self, message: str, bound: float):
        super().__init__(message)
        self.bound = bound


class NumericalError(DelayGameError, ArithmeticError):
    """Quadrature, underflow or conditioning failure."""


class SolverError(NumericalError):
    """A root could not be bracketed or refined."""


class ConsistencyError(NumericalError):
    """An internal cross-check disagreed (e.g. several roots where one is guaranteed)."""
