# Exception hierarchy for Deptrail
# Every library error derives from DeptrailError so callers (CLI, API) can
# catch domain failures in one place and let programming errors propagate.


class DeptrailError(ValueError):
    """Base class for all domain errors raised by the recognition pipeline."""


# ============================================================================
# depth_io
# ============================================================================

class BadMagic(DeptrailError):
    """Stream does not start with the expected magic bytes."""


class TruncatedStream(DeptrailError):
    """Stream is shorter (or longer) than its header declares."""


class DimensionMismatch(DeptrailError):
    """Frames or grids disagree on their dimensions."""


class NonPositiveDims(DeptrailError):
    """A header declares a zero or negative frame count, width or height."""


class InvalidSequence(DeptrailError):
    """A sequence violates the DepthSequence invariants (T >= 2, depth >= 0)."""


# ============================================================================
# mtm
# ============================================================================

class DepthOutOfRange(DeptrailError):
    """A nonzero depth falls outside an explicit z_range."""


class ShapeMismatch(DeptrailError):
    """Two grids that must share a shape do not."""


class EmptyInput(DeptrailError):
    """An operation received no update maps or no samples."""


# ============================================================================
# glac
# ============================================================================

class ImageTooSmall(DeptrailError):
    """Image is smaller than the gradient stencil or the spatial grid."""


class EmptyRegion(DeptrailError):
    """A descriptor region has zero area."""


# ============================================================================
# representation / crc
# ============================================================================

class DegenerateData(DeptrailError):
    """Training vectors carry no variance."""


class LengthMismatch(DeptrailError):
    """Vector length does not match the model dimension."""


class SingularSystem(DeptrailError):
    """The regularized normal equations could not be factorized."""


# ============================================================================
# evaluation
# ============================================================================

class UnknownSubject(DeptrailError):
    """A sample's subject is not part of the protocol's performer roster."""


class UnknownSample(DeptrailError):
    """An explicit id list names a sequence that is not in the dataset."""


class EmptyClassAfterFilter(DeptrailError):
    """An action set class has no samples after subset filtering."""


class MissingClassInTrain(DeptrailError):
    """A test class has no training samples."""


class LabelOutOfRange(DeptrailError):
    """A label is outside the declared class list."""


# ============================================================================
# configuration
# ============================================================================

class ConfigError(DeptrailError):
    """Configuration file or override is malformed or names an unknown key."""
