"""
Evaluate Controller

Computes TRE, MAE, NCC, DSC and Jacobian statistics for one registered
pair and writes the per-fraction report.
"""

from pathlib import Path

from constants.exit_codes import ExitCode
from core.exceptions import DirForgeError
from schemas.response_schema import success_response
from services.metric_services import evaluate_service


def parse_profile(text: str):
    """'x=12,z=30' -> (12, 30)."""
    try:
        fields = dict(item.split("=", 1) for item in text.split(","))
        return int(fields["x"]), int(fields["z"])
    except (KeyError, ValueError):
        raise DirForgeError(exit_code=ExitCode.USAGE_ERROR, detail=f"--profile expects x=N,z=M, got {text!r}")


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("evaluate", help="score a registration")
    parser.add_argument("--deformed", type=Path, required=True)
    parser.add_argument("--target", type=Path, required=True)
    parser.add_argument("--dvf", type=Path, required=True)
    parser.add_argument("--landmarks-moving", type=Path, required=True)
    parser.add_argument("--landmarks-target", type=Path, required=True)
    parser.add_argument("--out", type=Path, required=True, help="report stem; writes <out>.json and <out>.csv")
    parser.add_argument("--body-hu", type=float, default=None)
    parser.add_argument("--bone-hu", type=float, default=None)
    parser.add_argument("--fraction", default="fx1", help="row label")
    parser.add_argument("--append", action="store_true", help="add or replace the row in an existing report")
    parser.add_argument("--difference-out", type=Path, default=None)
    parser.add_argument("--profile", default=None, help="x=N,z=M")
    parser.set_defaults(handler=run_evaluate)


def run_evaluate(args):
    profile = parse_profile(args.profile) if args.profile else None
    report = evaluate_service(
        args.deformed,
        args.target,
        args.dvf,
        args.landmarks_moving,
        args.landmarks_target,
        args.out,
        body_hu=args.body_hu,
        bone_hu=args.bone_hu,
        fraction=args.fraction,
        append=args.append,
        difference_out=args.difference_out,
        profile=profile,
    )
    return success_response(
        message="Evaluation finished successfully",
        data=report,
    )
