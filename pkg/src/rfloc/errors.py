"""Exception types shared across the package.

Two broad families matter to callers: input/validation problems
(ParseError, ValidationError, DimensionError, InvalidNoise) and solve-time
problems (GeometryDegenerate, NoConvergence, Inconsistent, BudgetExceeded).
The CLI maps the first family to exit code 2 and the second to exit code 1.
"""


class RflocError(Exception):
    """Base class for all package errors."""


class DimensionError(RflocError):
    """Operands live in different dimensions (2D vs 3D), or an unsupported one."""


class DegenerateDirection(RflocError):
    """A direction was requested between coincident points (zero-length vector)."""


class EmptyInput(RflocError):
    """An aggregate operation received an empty collection."""


class InvalidNoise(RflocError):
    """Noise parameters are out of range (e.g. negative standard deviation)."""


class InsufficientReceivers(RflocError):
    """Fewer receivers than the operation needs."""


class GeometryDegenerate(RflocError):
    """Anchor geometry is rank-deficient (e.g. collinear receivers or emitters)."""


class Inconsistent(RflocError):
    """Measured ranges admit no real solution beyond numerical slack."""


class BudgetExceeded(RflocError):
    """A brute-force search lattice exceeds the configured node budget."""


class NoConvergence(RflocError):
    """The iterative solver exhausted its budget without meeting tolerance.

    Attributes:
        best: the best iterate found, as a SolveResult with converged=False,
              or None when no iterate was produced at all.
    """

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class ParseError(RflocError):
    """A scenario file is syntactically malformed."""


class ValidationError(RflocError):
    """A scenario file or domain object violates an invariant.

    Attributes:
        field: name of the offending field, when known.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field
