"""Exception hierarchy shared across the package."""


class PhysioMTLError(Exception):
    """Base class for all package errors."""


class InvalidInput(PhysioMTLError, ValueError):
    pass


class DegenerateFit(PhysioMTLError):
    """A cosinor design is rank deficient and no ridge term was given."""

    def __init__(self, message, task_id=None):
        self.task_id = task_id
        if task_id is not None:
            message = f"{message} (task {task_id!r})"
        super().__init__(message)


class NumericalFailure(PhysioMTLError):
    pass


class DivergedSolve(PhysioMTLError):
    def __init__(self, message, iteration):
        self.iteration = iteration
        super().__init__(f"{message} at outer iteration {iteration}")


class InsufficientData(PhysioMTLError, ValueError):
    pass


class IngestError(PhysioMTLError):
    def __init__(self, message, subject=None, path=None, line=None):
        self.subject = subject
        self.path = path
        self.line = line
        parts = [message]
        if subject is not None:
            parts.append(f"subject={subject}")
        if path is not None:
            parts.append(f"file={path}")
        if line is not None:
            parts.append(f"line={line}")
        super().__init__("; ".join(parts))
