"""Exception hierarchy. The CLI maps each family to an exit code."""


class MspcGuardError(Exception):
    """Base class for all package errors."""

    exit_code = 2


class InputFault(MspcGuardError, ValueError):
    """Malformed or non-finite input data."""


class CalibrationFault(MspcGuardError):
    """Calibration cannot produce a usable model or limits."""


class SimulationFault(MspcGuardError):
    """The plant state became non-finite during a run."""

    exit_code = 3

    def __init__(self, message, step=None):
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
        self.step = step


class NumericalFault(MspcGuardError):
    """A numerical routine failed to converge."""

    exit_code = 3
