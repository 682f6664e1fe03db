"""
Exception hierarchy for the training engine.

Every error carries a ``category`` string so the CLI can map failures to
exit codes and machine-readable error reports.
"""

from typing import Dict, List, Optional


class EngineError(Exception):
    """Base class for all engine errors"""

    category = "internal"


class ShapeError(EngineError, ValueError):
    """Input shapes are invalid for a primitive or a layer"""

    category = "shape"


class PrimitiveError(EngineError, KeyError):
    """Unknown primitive id"""

    category = "internal"

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class TapeError(EngineError, RuntimeError):
    """Misuse of the tape during backward"""

    category = "internal"


class NonFiniteError(EngineError, FloatingPointError):
    """A primitive or cost produced NaN or Inf"""

    category = "numerical"


class ConfigError(EngineError, ValueError):
    """Invalid experiment configuration; lists every violation found"""

    category = "config"

    def __init__(self, violations: List[str]):
        self.violations = list(violations)
        message = "Invalid configuration:\n" + "\n".join(f"  - {v}" for v in self.violations)
        super().__init__(message)


class DataError(EngineError, ValueError):
    """Dataset, split or sampler precondition failed"""

    category = "data"


class DataFormatError(DataError):
    """Malformed IDX file"""

    def __init__(self, message: str, offset: int, path: Optional[str] = None):
        self.offset = offset
        self.path = path
        location = f"{path} " if path else ""
        super().__init__(f"{location}at byte offset {offset}: {message}")


class CheckpointError(EngineError, IOError):
    """Checkpoint could not be read or does not match the run"""

    category = "checkpoint"


EXIT_CODES: Dict[str, int] = {
    "internal": 1,
    "shape": 1,
    "config": 2,
    "data": 3,
    "numerical": 4,
    "checkpoint": 5,
}


def exit_code_for(error: BaseException) -> int:
    """Exit code for an exception raised out of the CLI"""
    category = getattr(error, "category", "internal")
    return EXIT_CODES.get(category, 1)
