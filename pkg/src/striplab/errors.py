"""Exception types shared across the lab."""


class StripLabError(Exception):
    """Base class for all striplab errors."""


class ConfigError(StripLabError):
    """Run configuration is malformed or inconsistent."""


class CompatibilityViolation(StripLabError):
    """Vertical mean of u is not zero where the solver requires it."""


class BandExhausted(StripLabError):
    """Analytic band width a - rate*value has reached zero."""


class WeightOverflow(StripLabError):
    """A band-weighted amplitude exceeded the blowup threshold."""


class BlowupDetected(StripLabError):
    """A solver field exceeded the norm ceiling or became non-finite."""


class SolverSingular(StripLabError):
    """A per-mode implicit factorization failed."""


class InsufficientData(StripLabError):
    """Not enough samples to perform the requested fit."""


class VersionMismatch(StripLabError):
    """Checkpoint manifest written by an incompatible format version."""


class CorruptPayload(StripLabError):
    """Checkpoint payload fails its length or shape checks."""
