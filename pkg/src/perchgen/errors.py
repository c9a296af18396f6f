class PerchError(Exception):
    """Base class for all errors raised by perchgen."""


class InvalidParameterError(PerchError, ValueError):
    pass


class DegenerateGeometryError(PerchError, ValueError):
    """Raised when a line passes (numerically) through the camera center."""


class InfeasibleStartError(PerchError):
    pass


class NumericalFailureError(PerchError):
    def __init__(self, message: str, block: str | None = None):
        super().__init__(message)
        self.block = block


class ChainingError(PerchError):
    def __init__(self, message: str, max_deviation: float):
        super().__init__(message)
        self.max_deviation = max_deviation


class SolverStageError(PerchError):
    """A solve inside the maneuver pipeline did not converge."""

    def __init__(self, stage: str, report):
        super().__init__(f"solver did not converge during stage '{stage}' (status={report.status})")
        self.stage = stage
        self.report = report


class AuditFailureError(PerchError):
    def __init__(self, violations):
        first = violations[0]
        super().__init__(
            f"{len(violations)} collision samples remain after re-solve "
            f"(first at t={first.time:.4f}s, segment {first.segment_index})"
        )
        self.violations = violations


class ScenarioFormatError(PerchError, ValueError):
    pass
