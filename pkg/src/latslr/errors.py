"""Exception types shared across the package."""


class LatslrError(Exception):
    """Base class for all errors raised by latslr."""


class DimensionTooLarge(LatslrError, ValueError):
    pass


class SingularBasis(LatslrError, ValueError):
    pass


class NotSignVector(LatslrError, ValueError):
    pass


class QNotPowerOfTwo(LatslrError, ValueError):
    pass


class BadShape(LatslrError, ValueError):
    pass


class NotInSnk(LatslrError, ValueError):
    pass


class ExtractionFailure(LatslrError):
    """A solver output could not be mapped back to a sign vector."""


class NotKSparse(ExtractionFailure):
    pass


class NotPartite(ExtractionFailure):
    pass


class ZeroMatrix(LatslrError, ValueError):
    pass


class SearchSpaceTooLarge(LatslrError, ValueError):
    pass


class PreconditionViolated(LatslrError, ValueError):
    pass


class LemmaViolated(LatslrError, AssertionError):
    """Raised when a guaranteed-to-exist object was not found. Must never fire."""


class ConfigInvalid(LatslrError, ValueError):
    pass


class HashMismatch(LatslrError, ValueError):
    pass


class SchemaVersionUnsupported(LatslrError, ValueError):
    pass


class IoError(LatslrError, OSError):
    pass
