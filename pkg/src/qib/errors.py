class QIBError(ValueError):
    """Base class for invalid input to the qib library."""


class DimensionError(QIBError):
    pass


class NotHermitianError(QIBError):
    pass


class StateError(QIBError):
    pass


class ChannelError(QIBError):
    pass


class SchemaError(QIBError):
    pass


class NumericalError(ArithmeticError):
    """A computation lost the precision it needs to return a valid result."""
