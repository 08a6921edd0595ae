"""Exception hierarchy.

Each family carries the process exit code the command line interface maps it to.
"""


class EFMError(Exception):
    exit_code = 1


class DataError(EFMError):
    """Bad input data (schema problems, invalid rows, unseen levels)."""

    exit_code = 2


class SchemaError(DataError):
    pass


class RowError(DataError):
    def __init__(self, row: int, message: str):
        self.row = row
        super().__init__(f"row {row}: {message}")


class UnseenLevelError(DataError):
    def __init__(self, attribute: str, value: str, row: int | None = None):
        self.attribute = attribute
        self.value = value
        where = f" (row {row})" if row is not None else ""
        super().__init__(f"unseen level {value!r} for attribute {attribute!r}{where}")


class DegenerateBinningError(DataError):
    pass


class SplitError(DataError):
    pass


class PartitionError(DataError):
    pass


class MissingParameterError(DataError):
    pass


class DivergenceError(EFMError):
    """Training produced non-finite values."""

    exit_code = 3

    def __init__(self, iteration: int, eta: float):
        self.iteration = iteration
        self.eta = eta
        super().__init__(f"training diverged at iteration {iteration} (eta={eta:g})")


class ConfigError(EFMError):
    exit_code = 4
