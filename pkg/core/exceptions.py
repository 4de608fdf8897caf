"""
DirForge Exceptions

A single exception type carries an exit code and a detail message,
the way an HTTP exception carries a status code. The global handler in
main.py converts it into the command response envelope.
"""

from constants.exit_codes import ExitCode


class DirForgeError(Exception):
    def __init__(self, exit_code: int = ExitCode.DATA_ERROR, detail: str = ""):
        super().__init__(detail)
        self.exit_code = exit_code
        self.detail = detail

    def __repr__(self) -> str:
        return f"DirForgeError(exit_code={self.exit_code}, detail={self.detail!r})"
