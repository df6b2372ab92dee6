"""
Error hierarchy shared by the services, the CLI and the HTTP layer.
"""
from __future__ import annotations


class PlannerError(ValueError):
    """Base class for every input or precondition problem."""


class ScenarioParseError(PlannerError):
    def __init__(self, path: str, message: str):
        self.path = path or "$"
        self.message = message
        super().__init__(f"{self.path}: {message}")


class ScenarioValidationError(PlannerError):
    pass


class OutOfLaneletError(PlannerError):
    pass


class DomainError(PlannerError):
    pass


class EmptyRegionError(PlannerError):
    pass


class PreconditionError(PlannerError):
    pass


class InvariantViolation(RuntimeError):
    """Raised when an internal guarantee is broken; never recovered from."""


class BudgetExceeded(RuntimeError):
    """A computation ran past its wall-clock deadline."""
