"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Invalid scalar parameter, count, or step ordering."""


class ShapeError(ValueError):
    """Array shapes do not agree."""


class NumericDivergenceError(FloatingPointError):
    """A latent became non-finite during sampling."""

    def __init__(self, frame: int, timestep: int, message: str = ""):
        self.frame = frame
        self.timestep = timestep
        super().__init__(message or f"non-finite latent at frame {frame}, timestep {timestep}")


class TrainingDivergenceError(FloatingPointError):
    def __init__(self, step: int, loss: float):
        self.step = step
        self.loss = loss
        super().__init__(f"non-finite loss {loss!r} at training step {step}")


class UndefinedMetricError(ValueError):
    """Metric cannot be computed for the given inputs (e.g. no valid frames)."""


class UnsupportedMetricError(LookupError):
    """No external scorer registered under the requested name."""


class ScorerParseError(ValueError):
    """External scorer produced output that is not a single number."""


class ValidationError(ValueError):
    """Input record failed validation (e.g. non-normalized embedding)."""


class SplitError(ValueError):
    pass


class EmptyReportError(ValueError):
    pass


class ConfigError(ValueError):
    pass
