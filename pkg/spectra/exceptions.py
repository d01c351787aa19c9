"""
Exceptions raised by the spectral engine.

Malformed input (files, model parameters) is reported with Django's
``ValidationError`` so the offending block index travels in ``params``.
Everything else that can go wrong inside a computation derives from
``SpectralError``.
"""


class SpectralError(Exception):
    """Base class for computational failures."""


class SpectrumMismatchError(SpectralError, ValueError):
    """Two objects that must share a spectrum do not."""


class BlockIndexError(SpectralError, IndexError):
    """A block index outside 0 <= k < K."""


class InsufficientSamplesError(SpectralError):
    """Too few usable tail samples for a regression."""

    def __init__(self, needed: int, found: int, what: str = "samples"):
        self.needed = needed
        self.found = found
        super().__init__(f"need at least {needed} positive tail {what}, found {found}")


class StructuralError(SpectralError):
    """A block violates a structural precondition (normality, commutation, shape)."""

    def __init__(self, message: str, block: int | None = None):
        self.block = block
        if block is not None:
            message = f"block {block}: {message}"
        super().__init__(message)


class PreconditionError(SpectralError):
    """A witness construction was asked for on data that cannot support it."""
