"""Exception hierarchy. The CLI maps each family to an exit code."""


class EpexForestError(Exception):
    """Base class for all package errors."""


class ConfigError(EpexForestError):
    """Invalid configuration or argument."""


class DataError(EpexForestError):
    """Input data violates a precondition."""


class ParseError(DataError):
    pass


class SchemaError(DataError):
    pass


class IntegrityError(DataError):
    pass


class InsufficientDataError(DataError):
    pass


class NumericalError(EpexForestError):
    """A numerical routine could not produce a trustworthy result."""


class RankError(NumericalError):
    pass
