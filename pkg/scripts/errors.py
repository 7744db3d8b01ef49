"""Exception hierarchy shared by the planning modules."""

from typing import Optional


class PlanningError(Exception):
    """Base class for every error raised by the toolkit."""


class ProfileError(PlanningError):
    """Malformed or invalid model profile document."""


class ScenarioError(PlanningError):
    """Invalid scenario, system change or unknown change target."""


class AccuracyProfileError(PlanningError):
    """Malformed or incomplete accuracy profile."""


class PlanError(PlanningError):
    """A plan violates one of the structural constraints."""

    def __init__(self, constraint: str, message: str) -> None:
        super().__init__(f"[{constraint}] {message}")
        self.constraint = constraint


class ConstraintViolation(PlanningError):
    """An expanded assignment tensor breaks a structural constraint."""

    def __init__(self, code: str, message: str) -> None:
        super().__init__(f"[{code}] {message}")
        self.code = code


class InfeasiblePlanError(PlanningError):
    """No (h, v) pair satisfies 1 < h < v < L for the given candidates."""


class BudgetExceededError(PlanningError):
    """Oracle search space is larger than the configured guard."""

    def __init__(self, estimate: int, guard: int, detail: Optional[str] = None) -> None:
        message = f"estimated {estimate} configurations exceeds guard {guard}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)
        self.estimate = estimate
        self.guard = guard


class SimulationError(PlanningError):
    """The simulated task graph is not a DAG."""
