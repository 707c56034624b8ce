"""Exception types shared across the package."""


class BfluxError(Exception):
    """Base class for all package-specific errors."""


class InvalidClamp(BfluxError):
    """Requested slope clamp admits no cut point for this flux model."""


class NewtonFailed(BfluxError):
    """Implicit solve did not converge, even after substep refinement."""

    def __init__(self, t, residual):
        super().__init__(f"Newton failed at t={t:.6g} (residual {residual:.3g})")
        self.t = t
        self.residual = residual


class ScheduleNotCauchy(BfluxError):
    """Clamp-schedule gaps failed to contract; mesh or window too coarse."""


class InconclusiveBlowup(BfluxError):
    """Threshold crossings do not stabilise under timestep refinement."""


class NoConvergence(BfluxError):
    """Stationary Newton solve ran out of iterations from this guess."""


class NotSettled(BfluxError):
    """Long-time integration hit its horizon before reaching tolerance."""


class InsufficientSamples(BfluxError):
    """Too few samples inside the requested fit window."""


class ConfigError(BfluxError):
    """Experiment configuration is missing keys or fails validation."""
