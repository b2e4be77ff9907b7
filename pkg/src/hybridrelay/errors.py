"""Exception types raised across the package."""


class HybridRelayError(Exception):
    """Base class for all package errors."""


class InvalidInputError(HybridRelayError, ValueError):
    """An argument is malformed (non-finite entries, bad range, empty input)."""


class ShapeError(InvalidInputError):
    """Matrix dimensions do not chain or conform."""


class NotPSDError(HybridRelayError, ValueError):
    """A matrix expected to be positive (semi-)definite is not."""


class RankError(HybridRelayError, ValueError):
    """A matrix has lower rank than the operation requires."""


class DegenerateWeightError(HybridRelayError, ValueError):
    """The weight normalizer of the analog matching problem has a zero entry."""


class ConfigError(HybridRelayError, ValueError):
    """A network or experiment configuration is infeasible or malformed."""
