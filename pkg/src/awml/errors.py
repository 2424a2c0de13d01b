"""Exception types shared across the package."""


class AWMLError(Exception):
    pass


class SchemaError(AWMLError):
    """Two parameter sets (or a parameter set and a layer) disagree on names/shapes."""


class ConfigError(AWMLError, ValueError):
    pass


class ContractError(AWMLError, ValueError):
    """A precondition of an operation was violated by the caller."""


class ValidationError(AWMLError, ValueError):
    """Non-finite or otherwise invalid numeric input."""


class GeometryError(AWMLError, ValueError):
    pass


class AnalysisError(AWMLError):
    pass


class OracleError(AWMLError):
    pass
