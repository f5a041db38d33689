"""Exception hierarchy shared across the package."""


class SceneDistillError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(SceneDistillError, ValueError):
    pass


class InvalidBuffer(SceneDistillError, ValueError):
    """A raster payload violates its type invariants (NaN/Inf, range, shape)."""


class NonPositiveDepth(SceneDistillError, ValueError):
    pass


class NoValidPixels(SceneDistillError, ValueError):
    pass


class UnknownClassId(SceneDistillError, ValueError):
    pass


class DecodeError(SceneDistillError, IOError):
    pass


class WrongBitDepth(DecodeError):
    pass


class ParseError(SceneDistillError, ValueError):
    pass


class NonOrthonormalRotation(SceneDistillError, ValueError):
    pass


class SpecError(SceneDistillError, ValueError):
    pass
