from typing import Generic, Optional, TypeVar

from pydantic import BaseModel, ConfigDict, Field

from constants.exit_codes import ExitCode


T = TypeVar("T")


class CommandResponse(BaseModel, Generic[T]):
    """Envelope printed by every command: stdout on success, stderr on failure."""

    message: str
    exit_code: int = Field(..., ge=ExitCode.SUCCESS, le=ExitCode.INTERNAL_ERROR)
    data: Optional[T] = None
    error: Optional[str] = None

    model_config = ConfigDict(arbitrary_types_allowed=True)


def success_response(message: str, data=None) -> CommandResponse:
    return CommandResponse(message=message, exit_code=ExitCode.SUCCESS, data=data)


def error_response(exit_code: int, error: str, message: str = "Command failed") -> CommandResponse:
    return CommandResponse(message=message, exit_code=exit_code, error=error)
