import json
import sys
from pydantic import ValidationError
import logging

from app.core.errors import DSLSyntaxError, DecisionsExhausted, DialectError, SynthesisError, TaskValidationError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2


def error_content(exc: Exception) -> dict:
    """{"message": ...} plus the structured fields the error carries"""
    content = {"message": str(exc)}
    if isinstance(exc, DSLSyntaxError):
        content.update(line=exc.line, column=exc.column)
    elif isinstance(exc, DialectError) and exc.token is not None:
        content["token"] = exc.token
    elif isinstance(exc, TaskValidationError):
        content.update(field=exc.field, reason=exc.reason)
    elif isinstance(exc, DecisionsExhausted):
        content.update(pending=exc.pending, index=exc.index)
    return content


def handle_exception(exc: Exception, stream=None) -> int:
    """Write the error payload to stderr and return the process exit code"""
    stream = stream if stream is not None else sys.stderr
    if isinstance(exc, (SynthesisError, ValidationError)):
        code, content = EXIT_VALIDATION, error_content(exc)
        logger.debug(f"Validation error: {exc}")
    elif isinstance(exc, OSError):
        code, content = EXIT_IO, {"message": f"{exc.strerror or exc}: {exc.filename}" if exc.filename else str(exc)}
        logger.error(f"I/O error: {exc}")
    else:
        code, content = EXIT_VALIDATION, {"message": "Internal error"}
        logger.error(f"Unhandled error: {exc}")
    stream.write(json.dumps(content) + "\n")
    return code
