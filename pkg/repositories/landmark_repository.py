"""
Landmark CSV files: header "id,x_mm,y_mm,z_mm", one row per landmark.
"""

import io
from pathlib import Path

import pandas as pd

from constants.exit_codes import ExitCode
from core.exceptions import DirForgeError
from models.landmark_model import LandmarkSet
from utils.file_utils import atomic_write_text

LANDMARK_COLUMNS = ["id", "x_mm", "y_mm", "z_mm"]


def load_landmarks(path) -> LandmarkSet:
    path = Path(path)
    if not path.is_file():
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"missing file: {path}")
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"unreadable landmark file {path}: {exc}")

    if list(frame.columns) != LANDMARK_COLUMNS:
        raise DirForgeError(
            exit_code=ExitCode.DATA_ERROR,
            detail=f"{path}: expected columns {','.join(LANDMARK_COLUMNS)}, got {','.join(map(str, frame.columns))}",
        )
    if frame.isna().any().any():
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"{path}: missing values")
    try:
        ids = frame["id"].astype("int64").tolist()
        positions = frame[LANDMARK_COLUMNS[1:]].astype("float64").to_numpy()
    except (TypeError, ValueError) as exc:
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"{path}: non-numeric landmark values: {exc}")
    return LandmarkSet.from_arrays(ids, positions)


def landmarks_csv(landmarks: LandmarkSet) -> str:
    frame = pd.DataFrame(landmarks.positions(), columns=LANDMARK_COLUMNS[1:])
    frame.insert(0, "id", landmarks.ids)
    buffer = io.StringIO()
    # repr-precision floats so a save/load cycle is exact
    frame.to_csv(buffer, index=False, float_format="%.17g")
    return buffer.getvalue()


def save_landmarks(path, landmarks: LandmarkSet) -> None:
    atomic_write_text(Path(path), landmarks_csv(landmarks))
