"""Exception hierarchy shared by every module."""


class ArgueError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(ArgueError, ValueError):
    pass


class ConfigError(ArgueError, ValueError):
    pass


class ModeError(ArgueError, ValueError):
    pass


class IngestionError(ArgueError, ValueError):
    pass


class SchemaError(ArgueError, KeyError):
    pass


class FormatError(ArgueError, ValueError):
    pass


class ProtocolError(ArgueError, ValueError):
    pass


class MetricError(ArgueError, ValueError):
    pass


class ClusteringError(ArgueError, ValueError):
    pass


class PersistenceError(ArgueError, OSError):
    pass


class StageError(ArgueError):
    """Wraps an error raised inside a pipeline stage, keeping the stage name."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


class ModelKindError(PersistenceError, TypeError):
    """A model file holds a different model kind than requested."""
