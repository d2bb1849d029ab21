"""Exception and warning types shared across the package."""


class InvalidInputError(ValueError):
    """Input violates a documented precondition (shape, finiteness, range)."""


class SizeLimitError(ValueError):
    """Requested result would exceed a configured dimension cap."""


class UninitializedProjectorError(RuntimeError):
    """Projection requested before the projector was ever refreshed."""


class UndefinedQuantityError(ValueError):
    """Quantity is mathematically undefined for this input (e.g. stable rank
    of the zero matrix, or the decay bound when the minimal-eigenspace
    component vanishes)."""


class StabilityError(ValueError):
    """Step size too large for the simulated dynamics to be stable."""


class UnsupportedConfigurationError(RuntimeError):
    """Operation not defined for this configuration (e.g. closed-form
    gradients with a nonlinear activation)."""


class ConfigError(ValueError):
    """Run configuration failed validation; message carries the field path."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message, last_valid_step=None):
        super().__init__(message)
        self.last_valid_step = last_valid_step


class DegenerateRefreshWarning(UserWarning):
    """A projector refresh saw a zero gradient and kept (or defaulted) its factors."""


class RankClampWarning(UserWarning):
    """Requested rank exceeded min(m, n) and was clamped."""
