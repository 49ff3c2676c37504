"""Exception types shared across the package."""


class ReglearnError(Exception):
    """Base class for errors raised by reglearn."""


class ConfigurationError(ReglearnError, ValueError):
    """Invalid architecture, hyperparameters or run configuration."""


class DataError(ReglearnError, ValueError):
    """Malformed or incompatible input data."""


class NumericError(ReglearnError, ArithmeticError):
    """A non-finite value appeared during a forward, backward or update pass.

    ``layer`` and ``step`` locate the failure when known.
    """

    def __init__(self, message, *, layer=None, step=None, epoch=None):
        self.layer = layer
        self.step = step
        self.epoch = epoch
        where = []
        if epoch is not None:
            where.append(f"epoch {epoch}")
        if step is not None:
            where.append(f"step {step}")
        if layer is not None:
            where.append(f"layer {layer}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class SequencingError(ReglearnError, RuntimeError):
    """Training operations were invoked out of order."""
