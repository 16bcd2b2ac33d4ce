"""Exception hierarchy shared by every module."""


class Sim2RealError(Exception):
    pass


class ShapeError(Sim2RealError, ValueError):
    pass


class SchemaError(Sim2RealError, ValueError):
    pass


class ParseError(Sim2RealError, ValueError):
    pass


class ValidationError(Sim2RealError, ValueError):
    pass


class ConfigError(Sim2RealError, ValueError):
    pass


class ContractError(Sim2RealError, ValueError):
    """An operation was called with inputs its contract does not cover."""


class InsufficientDataError(Sim2RealError, ValueError):
    pass


class NumericError(Sim2RealError, ArithmeticError):
    pass
