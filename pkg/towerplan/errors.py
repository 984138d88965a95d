"""
TowerPlan - Error Types
Each failure class carries the exit status the CLI reports for it.
"""


class TowerPlanError(Exception):
    """Base class for all library failures."""

    exit_code = 1
    label = "error"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message

    def one_line(self) -> str:
        text = " ".join(str(self.message).split())
        return f"error[{self.label}]: {text}"


class ScenarioParseError(TowerPlanError):
    """Scenario or transmitter file is not well-formed."""

    exit_code = 2
    label = "parse"


class ScenarioValidationError(TowerPlanError):
    """Input parsed but violates an invariant."""

    exit_code = 3
    label = "validation"


class InfeasibleTargetError(TowerPlanError):
    """Coverage target exceeds S of the full candidate set."""

    exit_code = 4
    label = "infeasible-target"


class CapExceededError(TowerPlanError):
    """Exhaustive enumeration would exceed the configured subset cap."""

    exit_code = 5
    label = "cap-exceeded"

    def __init__(self, message: str, required_cap: int):
        super().__init__(message)
        self.required_cap = required_cap


class FieldIOError(TowerPlanError):
    """Reading or writing a field, raster or cache entry failed."""

    exit_code = 6
    label = "io"

    def __init__(self, message: str, path=None):
        if path is not None:
            message = f"{message} ({path})"
        super().__init__(message)
        self.path = path


class GridMismatchError(FieldIOError):
    """Field header does not describe the receiver grid in use."""


class FieldValueError(FieldIOError):
    """Field payload contains a negative or non-finite value."""


class UnsupportedOperationError(TowerPlanError):
    """Operation refused for the given configuration."""

    exit_code = 7
    label = "unsupported"


class ProblemMismatchError(UnsupportedOperationError):
    """Two results were produced for different problems."""
