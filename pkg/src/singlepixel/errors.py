"""Exception types shared across the package."""


class SinglePixelError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(SinglePixelError):
    """Operands of a tensor op do not conform."""

    def __init__(self, op, *shapes, detail=""):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        msg = f"{op}: incompatible shapes {' vs '.join(str(s) for s in self.shapes)}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class NonFiniteError(SinglePixelError):
    """An op produced NaN or Inf."""

    def __init__(self, op, where="forward"):
        self.op = op
        super().__init__(f"{op}: non-finite values in {where} output")


class GraphError(SinglePixelError):
    """Misuse of the autodiff graph (e.g. backward called twice)."""


class FormatError(SinglePixelError):
    """A binary file failed to parse."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class ConfigError(SinglePixelError):
    """Invalid configuration values."""


class DegenerateEnsembleError(SinglePixelError):
    """Pattern ensemble carries no fluctuations; DGI is identically zero."""


class DivergenceError(SinglePixelError):
    """An iterative solver or training loop diverged."""

    def __init__(self, message, iteration=None, report=None):
        self.iteration = iteration
        self.report = report
        super().__init__(message)
