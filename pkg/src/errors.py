"""
Exception types shared by every subpackage
"""


class SagError(Exception):
    """Base class for all errors raised by this package"""


class ShapeError(SagError, ValueError):
    """Tensor shapes are incompatible for an operation"""


class GraphError(SagError):
    """Computation graph misuse (unbound input, backward before forward, ...)"""


class CacheError(SagError):
    """Reuse buffer does not match the activation it should replace"""


class ScheduleError(SagError, ValueError):
    """Invalid caching schedule or schedule file"""


class ConfigError(SagError, ValueError):
    """Invalid or unknown configuration key/value"""


class CheckpointError(SagError):
    """Parameter or dataset file is missing, truncated or of the wrong kind"""


class DivergenceError(SagError):
    """Training produced a non-finite loss"""


class PolicyDivergenceError(SagError):
    """The policy emitted a non-finite action chunk"""


class AnalysisError(SagError, ValueError):
    """Degenerate input to a diagnostic, such as a zero-norm activation"""
