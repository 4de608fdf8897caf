import argparse
import sys
from typing import Optional, Sequence

from pydantic import ValidationError

from constants.exit_codes import ExitCode
from controllers import (
    evaluate_controller,
    info_controller,
    phantom_controller,
    register_controller,
    train_controller,
)
from core.exceptions import DirForgeError
from schemas.response_schema import error_response
from utils.logger_utils import get_logger

logger = get_logger(__name__)

CONTROLLERS = (
    phantom_controller,
    train_controller,
    register_controller,
    evaluate_controller,
    info_controller,
)


class CommandParser(argparse.ArgumentParser):
    """Usage errors become DirForgeError so they share the error envelope."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise DirForgeError(exit_code=ExitCode.USAGE_ERROR, detail=message)


def build_parser() -> argparse.ArgumentParser:
    parser = CommandParser(
        prog="dirforge",
        description="Unsupervised two-stage deformable registration for CBCT volumes",
    )
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=CommandParser)
    for controller in CONTROLLERS:
        controller.add_parser(subparsers)
    return parser


# ==============================
# Global Exception Handler
# ==============================

def _fail(exit_code: int, error: str) -> int:
    print(error_response(exit_code=exit_code, error=error).model_dump_json(indent=2), file=sys.stderr)
    return exit_code


def run(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        response = args.handler(args)
    except DirForgeError as exc:
        logger.error("Command failed | exit_code=%d detail=%s", exc.exit_code, exc.detail)
        return _fail(exc.exit_code, exc.detail)
    except ValidationError as exc:
        logger.error("Validation failed | errors=%d", exc.error_count())
        return _fail(ExitCode.DATA_ERROR, str(exc))
    except OSError as exc:
        logger.error("I/O failed | error=%s", exc)
        return _fail(ExitCode.DATA_ERROR, str(exc))
    except Exception as exc:
        logger.exception("Unexpected error")
        return _fail(ExitCode.INTERNAL_ERROR, f"{type(exc).__name__}: {exc}")

    if response is None:
        return ExitCode.SUCCESS
    print(response.model_dump_json(indent=2))
    return response.exit_code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
