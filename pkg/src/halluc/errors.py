"""Exception hierarchy shared across the package.

The CLI maps these onto its exit-code contract: usage/config problems
exit 2, data preconditions exit 3, numeric aborts exit 4.
"""


class HallucError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(HallucError):
    """Invalid or inconsistent configuration (unknown key, bad value, fingerprint mismatch)."""


class ShapeError(HallucError):
    """Array has the wrong shape, size or layout for the requested operation."""


class RangeError(HallucError):
    """Pixel values fall outside the declared value range."""


class DatasetStructureError(HallucError):
    """Dataset directory or handle violates the expected identity/image layout."""


class InsufficientDiversityError(HallucError):
    """The dataset cannot supply the requested pair kind (too few identities or images)."""

    def __init__(self, kind, message):
        super().__init__(message)
        self.kind = kind


class IntegrityError(HallucError):
    """Checkpoint file is corrupt, truncated or fails its checksum."""


class NumericError(HallucError):
    """A loss or parameter became non-finite during training."""

    def __init__(self, message, term=None, step=None):
        super().__init__(message)
        self.term = term
        self.step = step


class ProtocolError(HallucError):
    """Evaluation protocol violated (empty pair set, probe identity missing from gallery, ...)."""
