"""Exception hierarchy and CLI exit codes"""

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


class DiagnosisError(Exception):
    """Base class for every error raised by the toolkit"""

    exit_code = EXIT_RUNTIME


class DataValidationError(DiagnosisError):
    """Input matrices, ids or shapes violate a documented invariant"""

    exit_code = EXIT_VALIDATION


class MatrixParseError(DataValidationError):
    """A CSV cell could not be parsed; carries the offending position"""

    def __init__(self, path, line: int, row_id: str, column: str, value: str):
        self.path = str(path)
        self.line = line
        self.row_id = row_id
        self.column = column
        self.value = value
        super().__init__(
            f"{self.path}: line {line} (row '{row_id}'), column '{column}': "
            f"expected 0 or 1, got '{value}'"
        )


class PlanError(DiagnosisError):
    """Experiment plan does not match its schema or the datasets it names"""

    exit_code = EXIT_VALIDATION


class NumericalError(DiagnosisError):
    """Training or evaluation produced a non-finite or infeasible state"""

    exit_code = EXIT_RUNTIME
