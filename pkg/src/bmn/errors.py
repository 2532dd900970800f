"""Exception hierarchy shared by all bmn modules."""


class BmnError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(BmnError):
    """A binary file is missing its magic or is otherwise malformed."""


class TruncationError(FormatError):
    """A binary file's declared payload size disagrees with its contents."""


class DataError(BmnError):
    """Loaded data violates an invariant (non-finite values, bad ranges)."""


class ValidationError(BmnError):
    """An annotation or record fails schema validation."""


class LookupError_(BmnError):
    """A referenced video id is unknown to the annotation set."""


class ShapeError(BmnError):
    """Tensor shapes are inconsistent with the operation's contract."""


class ParameterError(BmnError):
    """A structural hyperparameter is out of its legal range."""


class DegenerateInputError(BmnError):
    """An interval or sequence has zero extent where positive is required."""


class ConfigError(BmnError):
    """A run configuration is invalid or missing a required field."""


class TrainingError(BmnError):
    """Training aborted (non-finite loss or empty dataset)."""


class MetricsError(BmnError):
    """A metric is undefined for the given inputs."""


class GenerationError(BmnError):
    """Synthetic data generation could not satisfy its constraints."""
