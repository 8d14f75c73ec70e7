"""Exception types shared across the package."""


class GimbalLockError(ValueError):
    """Euler decomposition requested at (or too near) the beta = +-90 deg singularity."""


class InvalidIntrinsicsError(ValueError):
    """Camera intrinsics violate their invariants (e.g. degenerate stretch matrix)."""


class OutOfFovError(ValueError):
    """Ray direction lies outside the calibrated field of view."""


class MeshFormatError(ValueError):
    """OBJ parse failure; message names the offending line."""


class DegenerateMotionError(ValueError):
    """Hand-eye motion set is rank deficient (rotation axes nearly parallel)."""


class NoSignalError(ValueError):
    """Synchronization input has no usable signal (constant series)."""


class GenerationError(RuntimeError):
    """Synthetic case generation failed (e.g. trajectory exits the mesh interior)."""


class EncodingError(ValueError):
    """Frame cannot be encoded (non-finite values at valid pixels)."""


class FormatError(ValueError):
    """Structured input file is malformed; message names the location."""


class WriteError(RuntimeError):
    """Sequence export failed partway; no manifest was emitted."""
