"""Exception hierarchy shared by the solver, verifier and CLI."""


class EreLabError(Exception):
    """Base class for all errors raised by ere_lab."""


class NotPositiveDefiniteError(EreLabError, ValueError):
    """A matrix expected to be positive definite failed its factorization."""

    def __init__(self, message, min_pivot=None, where=None):
        super().__init__(message)
        self.min_pivot = min_pivot
        self.where = where


class NoConvergenceError(EreLabError, RuntimeError):
    """An iterative routine exhausted its budget."""


class BlowUpError(EreLabError, ArithmeticError):
    """An integrated quantity exceeded the overflow threshold.

    Attributes
    ----------
    index : int
        First grid node at which the threshold was exceeded.
    time : float
        Time of that node.
    quantity : str
        Name of the offending quantity (``"P1"``, ``"P2"``, ``"Phi"`` ...).
    """

    def __init__(self, message, index=None, time=None, quantity=None):
        super().__init__(message)
        self.index = index
        self.time = time
        self.quantity = quantity


class NoContractionError(EreLabError, RuntimeError):
    """Windowed Picard iteration failed even on the smallest window."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class AssumptionError(EreLabError, ValueError):
    """A problem instance violates an assumption required by the solver."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class DomainError(EreLabError, ValueError):
    """A function was evaluated outside its domain."""


class ParseError(EreLabError, ValueError):
    """A problem file could not be parsed.

    The message always names the offending field; ``line`` is set when the
    source position is known.
    """

    def __init__(self, message, field=None, line=None):
        loc = []
        if field:
            loc.append(f"field '{field}'")
        if line is not None:
            loc.append(f"line {line}")
        full = f"{message} ({', '.join(loc)})" if loc else message
        super().__init__(full)
        self.field = field
        self.line = line
