"""
Register Controller
"""

from pathlib import Path

from schemas.response_schema import success_response
from services.registration_services import register_service


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("register", help="register a moving volume to a target volume")
    parser.add_argument("--moving", type=Path, required=True)
    parser.add_argument("--target", type=Path, required=True)
    parser.add_argument("--ckpt", type=Path, required=True, help="checkpoint directory written by train")
    parser.add_argument("--out", type=Path, required=True)
    parser.add_argument("--config", type=Path, default=None, help="overrides <ckpt>/config.json")
    parser.add_argument("--workers", type=int, default=None, help="patch inference threads; defaults to the config worker_count (DIRFORGE_WORKERS)")
    parser.set_defaults(handler=run_register)


def run_register(args):
    timing = register_service(
        args.moving,
        args.target,
        args.ckpt,
        args.out,
        worker_count=args.workers,
        config_path=args.config,
    )
    return success_response(
        message="Registration finished successfully",
        data=timing,
    )
