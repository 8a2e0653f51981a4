"""Exception hierarchy shared by all perfmodel modules.

The CLI maps each family onto its own exit code, so raise the most specific
class available.
"""


class PerfModelError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(PerfModelError):
    """Invalid schema file, flag, or configuration value."""


class DataError(PerfModelError):
    """Malformed or schema-violating input data."""


class ParseError(DataError):
    pass


class SchemaViolation(DataError):
    def __init__(self, message, row=None, field=None):
        self.row = row
        self.field = field
        where = []
        if row is not None:
            where.append(f"row {row}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class NumericalError(PerfModelError):
    """A computation produced a non-finite or undefined result."""


class EvaluationError(NumericalError):
    pass


class OptimizerAbort(NumericalError):
    """Differential evolution hit a non-finite objective value."""

    def __init__(self, message, vector=None):
        self.vector = vector
        super().__init__(message)
