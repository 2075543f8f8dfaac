"""Exception types shared across the package."""


class OrdlagError(Exception):
    """Base class for all package errors."""


class DegenerateInputError(OrdlagError):
    """Input data cannot support the requested operation (e.g. too few
    distinct values for clustering, zero-variance series)."""


class CsvFormatError(OrdlagError):
    """A CSV input file is structurally malformed."""

    def __init__(self, path, message, line=None):
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


class ArchiveFormatError(OrdlagError):
    """A model archive file is missing entries or has the wrong layout."""


class ValidationFailedError(OrdlagError):
    """Model fitting was requested on a panel that fails validation."""

    def __init__(self, report):
        self.report = report
        lines = "\n".join(report.format_lines())
        super().__init__(f"panel failed validation:\n{lines}")


class InvariantViolationError(OrdlagError):
    """A chain state violated a structural invariant mid-run. Carries the
    iteration index and the offending parameter description."""

    def __init__(self, iteration, problems):
        self.iteration = iteration
        self.problems = list(problems)
        super().__init__(
            f"invariant violation at iteration {iteration}: " + "; ".join(self.problems)
        )
