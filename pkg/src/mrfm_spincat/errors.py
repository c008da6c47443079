"""Exception hierarchy for the simulator."""


class SpinCatError(Exception):
    """Base class for every error raised by mrfm_spincat."""


class ParameterError(SpinCatError, ValueError):
    """A model, grid or initial-state invariant is violated."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class ScheduleError(ParameterError):
    """Drive schedule segments are malformed."""


class GridError(ParameterError):
    """The spatial grid cannot represent the requested state."""


class ScheduleRangeError(SpinCatError, ValueError):
    """A schedule was evaluated outside its interval."""

    def __init__(self, tau: float, t_start: float, t_end: float):
        self.tau = tau
        super().__init__(f"tau={tau!r} outside schedule range [{t_start}, {t_end}]")


class PropagationError(SpinCatError, ArithmeticError):
    """Non-finite amplitudes appeared during propagation."""

    def __init__(self, tau: float, message: str = "non-finite amplitudes"):
        self.tau = tau
        super().__init__(f"{message} at tau={tau:.6g}")


class TruncationError(SpinCatError):
    """Fock-basis truncation lost more weight than allowed."""

    def __init__(self, leakage: float, tau: float, n_max: int):
        self.leakage = leakage
        self.tau = tau
        self.n_max = n_max
        super().__init__(
            f"truncation leakage {leakage:.3e} at tau={tau:.6g} with n_max={n_max}"
        )


class StiffnessError(SpinCatError):
    """The classical integrator failed to control its step."""

    def __init__(self, tau: float, message: str):
        self.tau = tau
        super().__init__(f"integration failed at tau={tau:.6g}: {message}")


class AnalysisError(SpinCatError, ValueError):
    """An analysis precondition does not hold."""


class DecompositionError(AnalysisError):
    """Peak supports cannot be decomposed."""


class ConfigError(SpinCatError, ValueError):
    """A run configuration is invalid."""

    def __init__(
        self,
        message: str,
        field: str | None = None,
        unknown_keys: list[str] | None = None,
    ):
        self.field = field
        self.unknown_keys = unknown_keys or []
        super().__init__(message)
