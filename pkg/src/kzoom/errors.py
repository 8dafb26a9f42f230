"""Exception types shared across the package.

Everything raised on purpose derives from KZoomError so callers (and the CLI)
can separate our failures from genuine bugs.
"""


class KZoomError(Exception):
    """Base class for all deliberate failures in this package."""


class DomainError(KZoomError, ValueError):
    """Input outside the mathematical domain of an operation."""


class DegenerateOrbit(KZoomError):
    """The orbit hit an absorbing value (0, 1, or an exact fixed point)."""

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration


class ZoomExhausted(KZoomError):
    """Deep zoom produced no nonzero digits (all significant digits consumed)."""

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration


class TooFewBits(KZoomError, ValueError):
    """A bit-level statistical test was given fewer bits than it requires."""


class ExpectedTooSmall(KZoomError, ValueError):
    """A chi-square cell's expected count is below the validity floor."""


class ZeroVariance(KZoomError, ValueError):
    """A correlation was requested on a constant series."""


class InsufficientReturns(KZoomError):
    """A return-time experiment ran out of iterations before enough returns."""


class ValidationError(KZoomError, ValueError):
    """A key (or other structured input) violates one or more invariants.

    `problems` lists every violated invariant, not just the first.
    """

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = list(problems)


class ParseError(KZoomError, ValueError):
    """A serialized key or ciphertext file could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ReturnExhausted(KZoomError):
    """Encryption exceeded N_max iterations without an accepted visit."""

    def __init__(self, message: str, unit_index: int | None = None):
        super().__init__(message)
        self.unit_index = unit_index


class InvalidCiphertext(KZoomError):
    """A ciphertext count is outside (N0, N_max] for the key in use."""

    def __init__(self, message: str, unit_index: int | None = None):
        super().__init__(message)
        self.unit_index = unit_index


class ExternalFileExhausted(KZoomError):
    """An external randomness file ran out of words."""
