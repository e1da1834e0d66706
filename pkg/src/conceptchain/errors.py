"""Exception types shared across the pipeline."""


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(PipelineError):
    """A file could not be parsed; message carries path and line context."""


class ValidationError(PipelineError):
    """Data violated an invariant (shapes, ids, value ranges, preconditions)."""


class ConfigError(PipelineError):
    """An invalid or infeasible run configuration."""


class DivergenceError(PipelineError):
    """Numerical optimization produced a non-finite value."""


class RenderError(PipelineError):
    """A rationale could not be rendered from its templates."""
