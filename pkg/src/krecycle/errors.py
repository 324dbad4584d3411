"""Exception hierarchy shared by all modules."""


class KrecycleError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(KrecycleError, ValueError):
    pass


class InputError(KrecycleError, ValueError):
    pass


class InnerProductError(KrecycleError):
    """A pairing that should be positive definite produced ``<v, v> <= 0``."""


class NumericsError(KrecycleError, ArithmeticError):
    """NaN or infinity showed up during an iteration."""


class DeflationSpaceError(KrecycleError):
    """``E = <U, AU>`` is singular or too ill-conditioned to be used."""


class OrthogonalityError(KrecycleError):
    """Lanczos basis and deflation basis are not orthogonal."""


class PreconditionerError(KrecycleError):
    pass


class DivergenceError(KrecycleError):
    pass


class ParseError(KrecycleError, ValueError):
    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class ConfigError(KrecycleError, ValueError):
    pass
