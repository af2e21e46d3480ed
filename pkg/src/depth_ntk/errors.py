class ConfigurationError(ValueError):
    pass


class ShapeError(ValueError):
    pass


class NumericOverflowError(ArithmeticError):
    def __init__(self, message: str, layer: int | None = None):
        super().__init__(message)
        self.layer = layer


class NumericError(ArithmeticError):
    pass


class ContractViolation(ValueError):
    pass


class DegenerateKernelError(ValueError):
    pass


class IterationLimitError(RuntimeError):
    def __init__(self, message: str, estimate: float):
        super().__init__(message)
        self.estimate = estimate


class SingularKernelError(ArithmeticError):
    pass


class DivergenceError(ArithmeticError):
    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch


class FormatError(ValueError):
    pass


class TruncatedFileError(FormatError):
    pass


class OracleRefusal(RuntimeError):
    pass


class ValidationError(ValueError):
    pass
