"""Exception hierarchy shared by all uws modules.

Errors are grouped so the command-line front end can map them onto exit
codes without inspecting messages: usage problems, data/parse problems,
and numerical failures are distinct branches.
"""

from __future__ import annotations


class UwsError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(UwsError, ValueError):
    """An argument violates a documented precondition."""


class InternalConsistencyError(UwsError):
    """A stored object no longer satisfies its own invariants."""


class NumericalFailureError(UwsError):
    """An iterative numerical routine failed to converge within its cap."""


class DegenerateSpectrumError(UwsError):
    """A spectrum is identically zero (or numerically so); no direction
    carries any variance, so rank selection is meaningless."""


class RankDeficiencyError(UwsError):
    """Normal equations are singular; carries a suggested ridge term."""

    def __init__(self, message: str, suggested_ridge: float):
        super().__init__(message)
        self.suggested_ridge = float(suggested_ridge)


class ContainerError(UwsError):
    """Base class for weight-container parse/serialization errors.

    Every container error names the byte offset at which the problem was
    detected, so corrupt files can be diagnosed from the message alone.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = int(offset)


class BadMagicError(ContainerError):
    """File does not start with the expected magic bytes."""


class TruncatedFileError(ContainerError):
    """File ends before a declared structure is complete."""


class ManifestError(ContainerError):
    """Manifest text is not valid or violates the manifest schema."""


class UnknownDtypeError(ContainerError):
    """Manifest declares an element type this format does not define."""


class PayloadMismatchError(ContainerError):
    """Payload length disagrees with what the manifest declares."""


class CorruptPayloadError(ContainerError):
    """Payload decodes to non-finite values."""
