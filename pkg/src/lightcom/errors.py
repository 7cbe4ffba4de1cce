"""Exception types shared across the toolkit."""


class LightcomError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatch(LightcomError):
    """Block size does not divide the image, or shapes disagree."""


class ShapeMismatch(LightcomError):
    pass


class LengthMismatch(LightcomError):
    pass


class NegativeSnr(LightcomError):
    pass


class InsufficientData(LightcomError):
    """Too few usable samples to fit a model."""


class AllZeroBer(LightcomError):
    pass


class BurstTooLong(LightcomError):
    pass


class NonConvergence(LightcomError):
    """Iterative solver exhausted its iteration budget."""


class TooLarge(LightcomError):
    """Problem size exceeds what an exhaustive method will attempt."""


class InvalidMode(LightcomError):
    pass


class ImageTooSmall(LightcomError):
    pass


class TooFewPatches(LightcomError):
    pass


class ZeroNormEmbedding(LightcomError):
    pass


class ProviderUnavailable(LightcomError):
    pass


class SingularPooledCovariance(LightcomError):
    pass


class NonPositiveInput(LightcomError):
    pass


class ConfigError(LightcomError):
    """Invalid run configuration; message carries the offending field path."""


class FormatError(LightcomError):
    """Malformed file content (bad magic, truncated payload, bad header)."""


class RemoteError(LightcomError):
    """Base class for remote-service failures. Never silently recovered."""


class ServiceUnavailable(RemoteError):
    pass


class Timeout(RemoteError):
    pass


class BadResponse(RemoteError):
    pass
