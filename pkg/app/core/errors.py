from typing import Optional


class SynthesisError(ValueError):
    """Base class for every validation failure raised by the models"""


class ConfigError(SynthesisError):
    pass


class DSLSyntaxError(SynthesisError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} at line {line}, column {column}")
        self.line = line
        self.column = column


class DialectError(SynthesisError):
    def __init__(self, message: str, token: Optional[str] = None,
                 line: Optional[int] = None, column: Optional[int] = None):
        where = f" at line {line}, column {column}" if line is not None else ""
        super().__init__(f"{message}{where}")
        self.token = token
        self.line = line
        self.column = column


class TaskValidationError(SynthesisError):
    def __init__(self, field: str, reason: str):
        super().__init__(f"{field}: {reason}")
        self.field = field
        self.reason = reason


class DecisionError(SynthesisError):
    pass


class MalformedDecisions(DecisionError):
    pass


class DecisionsExhausted(DecisionError):
    """Raised when a run needs a choice the decision string does not supply"""

    def __init__(self, pending: str, index: int):
        super().__init__(f"Decisions exhausted at position {index}: pending {pending}")
        self.pending = pending
        self.index = index


class ConstraintStructureError(SynthesisError):
    pass


class ReferenceMismatchError(SynthesisError):
    pass
