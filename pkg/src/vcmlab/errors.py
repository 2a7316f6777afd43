"""Exception hierarchy shared by every vcmlab module."""


class VcmError(Exception):
    """Base class for all library errors."""


class ShapeMismatchError(VcmError, ValueError):
    pass


class DimensionTooSmallError(VcmError, ValueError):
    pass


class ConfigError(VcmError, ValueError):
    pass


class DataError(VcmError):
    pass


class MissingAnnotationError(DataError):
    pass


class EmptySequenceError(DataError, ValueError):
    pass


class FrozenViolationError(VcmError, RuntimeError):
    """The frozen task network changed during a run."""


class CodingError(VcmError):
    pass


class CorruptStreamError(CodingError):
    pass


class VersionMismatchError(CodingError):
    pass


class SymbolOutOfAlphabetError(CodingError, ValueError):
    pass


class UnknownCutPointError(VcmError, KeyError):
    pass


class SchemaMismatchError(VcmError, TypeError):
    pass


class NoOverlapError(VcmError, ValueError):
    pass
