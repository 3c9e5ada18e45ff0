"""Exception types shared across the package."""


class SepmixError(Exception):
    """Base class for all package-specific errors."""


class NotTransient(SepmixError):
    """The jump-ratio law has no rightward drift: E[log rho] >= 0."""


class NotTrapped(SepmixError):
    """Requested trap analytics for a law whose tilt root is infinite."""


class BadK(SepmixError):
    """Particle number outside the admissible range 1 <= k <= n-1."""


class ShapeMismatch(SepmixError):
    """Configuration length does not match the segment length."""


class EmptyRange(SepmixError):
    """No admissible site pair satisfies the requested length constraint."""


class TooLarge(SepmixError):
    """State space exceeds the cap for exact computation."""


class WindowTooWide(SepmixError):
    """Sweep window does not fit inside the segment (4q >= n)."""


class WindowTooLarge(SepmixError):
    """Boundary-driven window exceeds the exact-solver cap."""


class CapExceeded(SepmixError):
    """Estimator bisection bracket cannot close under the time cap."""


class Timeout(SepmixError):
    """A capped run ended before the monitored event occurred."""


class SchemaError(SepmixError):
    """Config validation failure, carrying the offending field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}")
