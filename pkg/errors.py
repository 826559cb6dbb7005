"""
Error types shared by every package.

Each error carries a machine-readable kind and the exit code the command
line maps it to. They also derive from the closest builtin exception so
callers that only know about ValueError / FileNotFoundError still work.
"""
from typing import Any, Dict, Optional

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_DATA_MISMATCH = 3
EXIT_RESOLUTION = 4
EXIT_MISSING_ARTIFACT = 5


class EITError(Exception):
    """Base class for all toolkit errors."""
    kind = "internal"
    exit_code = EXIT_INTERNAL

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.context = dict(context or {})

    def __str__(self):
        return self.message

    def with_context(self, **context) -> "EITError":
        """Attach extra context (e.g. the drive pair being solved) and return self."""
        self.context.update(context)
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "message": self.message,
            "context": {k: _jsonable(v) for k, v in self.context.items()},
        }


def _jsonable(value):
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    try:
        return float(value)
    except (TypeError, ValueError):
        return str(value)


class ConfigError(EITError, ValueError):
    kind = "config"
    exit_code = EXIT_CONFIG


class DataMismatchError(EITError, ValueError):
    kind = "data-mismatch"
    exit_code = EXIT_DATA_MISMATCH


class SchemaVersionError(DataMismatchError):
    """Raised when a file was written with a schema version we don't read."""


class ResolutionError(EITError, ValueError):
    kind = "resolution"
    exit_code = EXIT_RESOLUTION


class MissingArtifactError(EITError, FileNotFoundError):
    kind = "missing-artifact"
    exit_code = EXIT_MISSING_ARTIFACT


class GeometryError(EITError, ValueError):
    kind = "geometry"


class PatternError(EITError, ValueError):
    kind = "pattern"


class SolverError(EITError, RuntimeError):
    kind = "solver"


class ConvergenceError(SolverError):
    kind = "convergence"


class DegenerateError(EITError, ZeroDivisionError):
    kind = "degenerate"


class ParameterError(EITError, ValueError):
    kind = "parameter"


class EmptyInputError(EITError, ValueError):
    kind = "empty-input"


class MergeError(EITError, ValueError):
    kind = "merge"


class DependencyError(EITError, KeyError):
    """A required intermediate result (e.g. a potential field) is missing."""
    kind = "dependency"


class EstimationError(EITError, ValueError):
    kind = "estimation"
