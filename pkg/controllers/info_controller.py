"""
Info Controller

Prints a container header summary as `key: value` lines and optionally
renders one axial slice.
"""

from pathlib import Path

from constants.exit_codes import ExitCode
from constants.hounsfield import Hounsfield
from core.exceptions import DirForgeError
from services.volume_services import describe_container, render_slice


def parse_slice(text: str) -> int:
    key, _, value = text.partition("=")
    if key != "z" or not value.lstrip("-").isdigit():
        raise DirForgeError(exit_code=ExitCode.USAGE_ERROR, detail=f"--slice expects z=N, got {text!r}")
    return int(value)


def parse_window(text: str):
    try:
        low, high = (float(v) for v in text.split(","))
    except ValueError:
        raise DirForgeError(exit_code=ExitCode.USAGE_ERROR, detail=f"--window expects lo,hi, got {text!r}")
    return low, high


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("info", help="summarize a container")
    parser.add_argument("--file", type=Path, required=True)
    parser.add_argument("--slice", default=None, help="z=N renders one axial slice")
    parser.add_argument("--window", default=None, help="lo,hi display window in HU")
    parser.add_argument("--slice-out", type=Path, default=None, help="image path (default <file>_z<N>.pgm/.ppm)")
    parser.add_argument("--fusion", type=Path, default=None, help="second container for a red/green fusion")
    parser.set_defaults(handler=run_info)


def summary_lines(summary) -> list:
    return [
        f"path: {summary.path}",
        f"kind: {summary.kind}",
        f"dims: {' '.join(str(n) for n in summary.dims)}",
        f"spacing_mm: {' '.join(repr(s) for s in summary.spacing_mm)}",
        f"channels: {summary.channels}",
        f"dtype: {summary.dtype}",
        f"min: {summary.min!r}",
        f"max: {summary.max!r}",
        f"sha256: {summary.sha256}",
    ]


def run_info(args):
    window = parse_window(args.window) if args.window else Hounsfield.WINDOW
    z = parse_slice(args.slice) if args.slice else None
    summary = describe_container(args.file)
    lines = summary_lines(summary)

    if z is not None:
        suffix = ".ppm" if args.fusion else ".pgm"
        out_path = args.slice_out or Path(summary.path).with_name(f"{Path(summary.path).stem}_z{z}{suffix}")
        render_slice(args.file, z, out_path, window=window, fusion_path=args.fusion)
        lines.append(f"slice: {out_path}")

    print("\n".join(lines))
    return None
