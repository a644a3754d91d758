"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand dimensions do not satisfy an operation's geometry contract."""


class NumericError(ArithmeticError):
    """A computation left the valid numeric domain (NaN/Inf, log of x <= 0, ...)."""


class ContractError(ValueError):
    """A caller violated an operation precondition (non-scalar loss, missing grads, ...)."""


class GraphError(RuntimeError):
    """Autodiff graph misuse: backpropagating twice through the same forward pass."""


class ConfigError(ValueError):
    """Invalid, inconsistent, or unknown configuration."""


class CheckpointError(ValueError):
    """A checkpoint file could not be loaded (version, truncation, shape mismatch)."""


class ImageFormatError(ValueError):
    """An image file is unreadable or not an 8-bit square RGB PNG."""


class TrainingAbort(RuntimeError):
    """Training stopped because a loss term became non-finite."""
