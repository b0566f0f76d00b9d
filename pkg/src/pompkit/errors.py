"""Exception types raised across the toolkit.

Everything derives from :class:`PompError` so callers can catch toolkit
failures with a single except clause.  The CLI maps these onto exit codes.
"""


class PompError(Exception):
    """Base class for all toolkit errors."""


class ShapeMismatchError(PompError):
    """A state or parameter tree does not match the model structure.

    Carries the tree path (e.g. ``"root.left.right"``) where the walk failed.
    """

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{message} (at {path})")


class ParamError(PompError):
    """A parameter value violates its constraint (e.g. nonpositive scale)."""


class ObservationError(PompError):
    """An observed value lies outside the observation distribution's support."""


class NonmonotoneTimeError(PompError):
    """Timestamps moved backwards where nondecreasing times are required.

    Carries the 1-based data line number when raised while reading a stream.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        suffix = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{suffix}")


class AllWeightsZeroError(PompError):
    """Every particle weight underflowed to zero; the likelihood is undefined."""


class WeightSumError(PompError):
    """A weight vector handed to a resampler does not sum to one."""


class UnusableIdentityError(PompError):
    """The identity model has no observation distribution of its own."""


class ConfigError(PompError):
    """A configuration file or option set is invalid."""


class DataError(PompError):
    """A data stream is malformed.  Carries the 1-based line number."""

    def __init__(self, line: int | None, message: str):
        self.line = line
        suffix = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{suffix}")
