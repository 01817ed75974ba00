"""Exception taxonomy shared across the toolkit.

Plain ``ValueError`` is used for programming-level argument mistakes
(negative sigma, dimension mismatch); the classes below cover data and
pipeline failures that callers are expected to handle.
"""


class LesionForgeError(Exception):
    """Base class for all toolkit-specific errors."""


class FormatError(LesionForgeError):
    """File bytes or JSON text do not form a well-formed input."""


class UnsupportedError(LesionForgeError):
    """Input is well-formed but uses a feature outside the supported subset."""


class ValidationError(LesionForgeError):
    """Input parses but violates a documented invariant."""


class NameLookupError(LesionForgeError):
    """A structure name did not resolve against the label table."""

    def __init__(self, message, suggestions=()):
        super().__init__(message)
        self.suggestions = tuple(suggestions)


class DegenerateIntervalError(LesionForgeError):
    """An intensity sampling interval is empty; callers may retry."""


class SynthesisError(LesionForgeError):
    """Anomaly synthesis exhausted its placement retries."""

    def __init__(self, message, attempts=()):
        super().__init__(message)
        self.attempts = tuple(attempts)
