"""
Phantom Controller

Generates a synthetic moving/target pair with its ground-truth field
and landmarks.
"""

from pathlib import Path

from repositories import report_repository
from schemas.phantom_schema import PhantomSpec
from schemas.response_schema import success_response
from services.phantom_services import generate_phantom_service


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("phantom", help="generate a synthetic phantom pair")
    parser.add_argument("--spec", type=Path, required=True, help="PhantomSpec JSON")
    parser.add_argument("--out", type=Path, required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="overrides the spec seed")
    parser.set_defaults(handler=run_phantom)


def run_phantom(args):
    spec = report_repository.read_model(args.spec, PhantomSpec)
    if args.seed is not None:
        spec = spec.model_copy(update={"seed": args.seed})
    manifest = generate_phantom_service(spec, args.out)
    return success_response(
        message="Phantom generated successfully",
        data=manifest,
    )
