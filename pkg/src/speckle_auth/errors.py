"""Exception types shared across the package."""


class SpeckleAuthError(Exception):
    """Base class for all errors raised by speckle_auth."""


class ParameterError(SpeckleAuthError, ValueError):
    """An argument is outside its valid domain."""


class DimensionError(SpeckleAuthError, ValueError):
    """An image is too small, or an operation would produce an empty image."""
