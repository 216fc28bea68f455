"""Exception hierarchy shared across the toolkit."""


class ReplayCmError(Exception):
    """Base class for all toolkit errors."""


class InvalidAudio(ReplayCmError):
    """Audio input violates a precondition (empty, wrong rate, not mono...)."""


class InvalidConfig(ReplayCmError):
    """A configuration value or key is out of contract."""


class InvalidInput(ReplayCmError):
    """An operation received data violating its precondition."""


class InvalidDataset(ReplayCmError):
    """Dataset-level precondition failure (e.g. an empty class)."""


class ParseError(ReplayCmError):
    """Malformed text input. Carries the offending line number when known."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class TrainingDiverged(ReplayCmError):
    """Non-finite loss during optimization. Carries the global step index."""

    def __init__(self, message: str, step: int):
        self.step = step
        super().__init__(f"{message} (step {step})")
