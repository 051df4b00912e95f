"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line can map failures to
its documented codes (2 configuration, 3 numerical, 4 I/O).
"""


class DPRGMIError(Exception):
    exit_code = 1


class ConfigError(DPRGMIError, ValueError):
    exit_code = 2


class ShapeError(DPRGMIError, ValueError):
    exit_code = 2


class InputError(DPRGMIError, ValueError):
    exit_code = 2


class DegenerateLabelError(InputError):
    def __init__(self, label, message=None):
        self.label = label
        super().__init__(message or f"label {label} has a single class")


class UnitError(InputError):
    pass


class SpecificationError(ConfigError):
    """A privacy spec was used before its noise multiplier was resolved."""


class NumericalError(DPRGMIError, ArithmeticError):
    exit_code = 3


class DivergenceError(NumericalError):
    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite loss or parameters at step {step}")


class CalibrationError(NumericalError):
    def __init__(self, message, bracket=None):
        self.bracket = bracket
        super().__init__(message)




class PairingError(ShapeError):
    pass


class UndefinedStatisticError(NumericalError):
    """Raised by a statistic that has no value on a given resample."""


class BootstrapDegeneracyError(NumericalError):
    def __init__(self, dropped, total):
        self.dropped = dropped
        self.total = total
        super().__init__(f"{dropped} of {total} bootstrap resamples undefined")


class EvaluationError(NumericalError):
    pass


class StateError(DPRGMIError, RuntimeError):
    exit_code = 3


class FormatError(DPRGMIError, OSError):
    exit_code = 4


class TruncationError(FormatError):
    pass


class VersionError(FormatError):
    pass


class UndefinedLabelError(UndefinedStatisticError):
    """AUROC of a label whose scores cover only one class."""


class AllLabelsDegenerateError(EvaluationError, UndefinedStatisticError):
    pass


class ConvergenceWarning(UserWarning):
    def __init__(self, message, grad_norm=None):
        self.grad_norm = grad_norm
        super().__init__(message)


class DegenerateGeometryError(UndefinedStatisticError):
    """Covariance of identical embeddings: effective dimension is 0/0."""
