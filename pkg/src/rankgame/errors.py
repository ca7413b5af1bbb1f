"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input rejected before any work is done."""


class GuardError(RuntimeError):
    """An enumeration or size guard refused to run.

    ``guard`` names the limit that tripped, e.g. ``"joint_strategy_space"``.
    """

    def __init__(self, guard: str, message: str):
        super().__init__(message)
        self.guard = guard


class NoDataError(ValueError):
    """An estimator was asked for a rank with no observations."""
