"""Exception hierarchy shared by every stage of the link simulator."""


class SemLinkError(Exception):
    """Base class for all errors raised by :mod:`semlink`."""


class ConfigError(SemLinkError, ValueError):
    """Invalid parameters, shapes or configuration files."""


class DataError(SemLinkError, ValueError):
    """Malformed data: NaNs, out-of-range indices, duplicate packets."""


class ScheduleError(ConfigError):
    """A diffusion noise schedule violates its invariants."""


class InfeasibleSignalError(SemLinkError, ValueError):
    """Every channel gain is zero, so no power allocation can carry data."""


class UnsupportedError(SemLinkError, ValueError):
    """Request outside what an operation supports (e.g. oracle with B > 3)."""


class NumericError(SemLinkError, ArithmeticError):
    """Singular or otherwise unusable matrices."""


class ContractError(SemLinkError, RuntimeError):
    """A pluggable component returned something violating its interface."""


class SolverError(SemLinkError, RuntimeError):
    """Iterative solver did not converge within its iteration cap."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(f"{message} (residual={residual:.3g})")
        self.residual = residual


class StageError(SemLinkError):
    """Wraps an error raised inside a pipeline stage with the stage label."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
