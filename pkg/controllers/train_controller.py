"""
Train Controller

Runs the global then the local adversarial stage on a pairs manifest.
"""

from pathlib import Path

from schemas.response_schema import success_response
from services.training_services import train_service


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("train", help="train the global and local networks")
    parser.add_argument("--pairs", type=Path, required=True, help="pairs manifest or phantom manifest")
    parser.add_argument("--config", type=Path, default=None, help="TrainConfig JSON (defaults when omitted)")
    parser.add_argument("--out", type=Path, required=True, help="checkpoint directory")
    parser.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    parser.set_defaults(handler=run_train)


def run_train(args):
    summary = train_service(args.pairs, args.out, config_path=args.config, seed=args.seed)
    return success_response(
        message="Training finished successfully",
        data=summary,
    )
