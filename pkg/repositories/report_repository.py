"""
Report Repository - File Operations

JSON documents (configs, manifests, reports, timing) go through pydantic;
tables (loss history, metric rows, difference profiles) go through
pandas. Every write is atomic.
"""

import io
import json
from pathlib import Path
from typing import List, Sequence, Tuple, Type, TypeVar

import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError

from constants.exit_codes import ExitCode
from core.exceptions import DirForgeError
from schemas.manifest_schema import PairEntry, PairsManifest, PhantomManifest
from schemas.report_schema import LOSS_COLUMNS, REPORT_COLUMNS, EvaluationReport, LossRecord
from utils.file_utils import atomic_write_text

M = TypeVar("M", bound=BaseModel)


def _frame_csv(frame: pd.DataFrame) -> str:
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, float_format="%.17g")
    return buffer.getvalue()


# ==============================
# JSON documents
# ==============================

def write_model(path, model: BaseModel) -> None:
    atomic_write_text(Path(path), model.model_dump_json(indent=2) + "\n")


def read_model(path, model_type: Type[M]) -> M:
    path = Path(path)
    if not path.is_file():
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"missing file: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"invalid JSON in {path}: {exc}")
    try:
        return model_type.model_validate(raw)
    except ValidationError as exc:
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"invalid {model_type.__name__} in {path}: {exc}")


# ==============================
# Training pairs
# ==============================

def read_pairs(path) -> List[Tuple[Path, Path]]:
    """
    (moving, target) container paths from a pairs manifest. A phantom
    manifest is accepted as a single pair.
    """
    path = Path(path)
    if not path.is_file():
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"missing file: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"invalid JSON in {path}: {exc}")

    try:
        if isinstance(raw, dict) and "files" in raw:
            phantom = PhantomManifest.model_validate(raw)
            moving, target = phantom.entry("moving"), phantom.entry("target")
            if moving is None or target is None:
                raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"{path}: phantom manifest lacks moving/target")
            manifest = PairsManifest(pairs=[PairEntry(moving=moving.path, target=target.path)])
        else:
            manifest = PairsManifest.model_validate(raw)
    except ValidationError as exc:
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"invalid pairs manifest {path}: {exc}")

    base = path.parent
    return [(base / pair.moving, base / pair.target) for pair in manifest.pairs]


# ==============================
# Loss history
# ==============================

def loss_history_csv(records: Sequence[LossRecord]) -> str:
    frame = pd.DataFrame([record.model_dump() for record in records], columns=list(LOSS_COLUMNS))
    return _frame_csv(frame)


def write_loss_history(path, records: Sequence[LossRecord]) -> None:
    atomic_write_text(Path(path), loss_history_csv(records))


def read_loss_history(path) -> List[LossRecord]:
    frame = pd.read_csv(path, float_precision="round_trip")
    if list(frame.columns) != list(LOSS_COLUMNS):
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"{path}: unexpected loss history columns")
    return [LossRecord(**row) for row in frame.to_dict(orient="records")]


# ==============================
# Evaluation reports
# ==============================

def report_csv(report: EvaluationReport) -> str:
    rows = [fraction.row() for fraction in report.fractions] + [report.overall.row()]
    return _frame_csv(pd.DataFrame(rows, columns=list(REPORT_COLUMNS)))


def report_paths(stem) -> Tuple[Path, Path]:
    stem = Path(stem)
    stem = stem.with_suffix("") if stem.suffix in (".json", ".csv") else stem
    return stem.with_name(stem.name + ".json"), stem.with_name(stem.name + ".csv")


def write_report(stem, report: EvaluationReport) -> Tuple[Path, Path]:
    """Writes <stem>.json and <stem>.csv."""
    json_path, csv_path = report_paths(stem)
    write_model(json_path, report)
    atomic_write_text(csv_path, report_csv(report))
    return json_path, csv_path


def read_report(stem) -> EvaluationReport:
    return read_model(report_paths(stem)[0], EvaluationReport)


def write_profile(path, profile: np.ndarray) -> None:
    frame = pd.DataFrame({"index": np.arange(len(profile)), "abs_diff_hu": np.asarray(profile, dtype=np.float64)})
    atomic_write_text(Path(path), _frame_csv(frame))
