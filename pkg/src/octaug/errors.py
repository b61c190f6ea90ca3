"""Typed exceptions raised across the toolkit.

Every error surfaced to callers (and mapped to a nonzero CLI exit code)
derives from OctaugError, so `except OctaugError` catches exactly the
domain failures and nothing else.
"""


class OctaugError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatch(OctaugError):
    """Two inputs that must share a geometry do not."""


class DegenerateSample(OctaugError):
    """Sample has no valid surface positions, so a position-dependent draw is undefined."""


class InvalidL(OctaugError):
    """Requested layer-block size exceeds the number of layers."""


class EmptyPatch(OctaugError):
    """Extracted layer patch contains no copyable pixels."""


class NoSpace(OctaugError):
    """No paste anchor keeps the patch inside the image and out of the labeled region."""


class NonPositiveFactor(OctaugError):
    """Vertical scale factor must be > 0."""


class SingularTransform(OctaugError):
    """Affine scale too close to zero to invert."""


class NoValidColumns(OctaugError):
    """No surface has any column where both inputs are valid."""


class EmptyList(OctaugError):
    """Aggregate statistic requested over an empty collection."""


class SubjectMismatch(OctaugError):
    """Prediction and ground-truth datasets do not cover the same subjects."""


class CorruptHeader(OctaugError):
    """File does not parse as the expected format."""


class TruncatedPayload(OctaugError):
    """File payload ends mid-value."""


class InfeasibleSpec(OctaugError):
    """Phantom layer stack does not fit inside the requested image height."""


class SliceOutOfRange(OctaugError):
    """Slice index outside the volume."""


class ConfigError(OctaugError):
    """Config file is malformed; message carries the offending key path."""
