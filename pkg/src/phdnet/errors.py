"""Exception hierarchy. The CLI maps each family onto an exit code."""


class ArtifactError(Exception):
    exit_code = 2


class ConfigurationError(ArtifactError, ValueError):
    exit_code = 1


class DataError(ArtifactError, ValueError):
    exit_code = 2


class IngestError(DataError):
    """The records source could not be read at all."""


class DimensionError(DataError):
    pass


class CollinearityError(DataError):
    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class UnknownGradeError(DataError):
    def __init__(self, token, row=None):
        where = f" (row {row})" if row is not None else ""
        super().__init__(f"unknown grade token {token!r}{where}")
        self.token = token
        self.row = row


class NumericError(ArtifactError, ArithmeticError):
    exit_code = 3


class DomainError(NumericError, ValueError):
    """Distribution parameters outside their domain."""
