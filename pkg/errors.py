"""
Error types for the spatial modelling engine
Each error carries the process exit code the CLI reports for it
"""


class SpatialEngineError(Exception):
    """Base class for every failure the engine reports on purpose"""

    exit_code = 1


class ConfigError(SpatialEngineError, ValueError):
    """Run configuration is unreadable, malformed or points at missing files"""

    exit_code = 2


class DataError(SpatialEngineError, ValueError):
    """Input data violates a documented schema or precondition"""

    exit_code = 3


class EstimationError(SpatialEngineError):
    """Numerical failure while fitting or diagnosing a model"""

    exit_code = 4

    def __init__(self, message, trace=None):
        super().__init__(message)
        # profiled likelihood (parameter, value) pairs, when available
        self.trace = trace


class StageError(SpatialEngineError):
    """A pipeline stage failed; wraps the underlying cause"""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
