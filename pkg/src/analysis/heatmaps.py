"""
Matrix emitters: CSV tables and plain (P2) portable graymaps

Both writers are pure functions of their inputs; the same matrix always gives
byte-identical files.
"""

from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..errors import ShapeError

MAX_GRAY = 255


def gray_levels(matrix: np.ndarray, vmin: Optional[float] = None, vmax: Optional[float] = None) -> np.ndarray:
    """Map values linearly onto 0..255 (vmin -> 0, vmax -> 255), clipping outside the range"""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"heatmaps need a 2-D matrix, got shape {list(m.shape)}")
    lo = float(np.min(m)) if vmin is None else float(vmin)
    hi = float(np.max(m)) if vmax is None else float(vmax)
    if hi <= lo:
        return np.zeros(m.shape, dtype=np.int64)
    scaled = np.clip((m - lo) / (hi - lo), 0.0, 1.0)
    return np.rint(scaled * MAX_GRAY).astype(np.int64)


def format_graymap(matrix: np.ndarray, vmin: Optional[float] = None, vmax: Optional[float] = None) -> str:
    levels = gray_levels(matrix, vmin, vmax)
    height, width = levels.shape
    lines = ["P2", f"{width} {height}", str(MAX_GRAY)]
    lines.extend(" ".join(str(v) for v in row) for row in levels)
    return "\n".join(lines) + "\n"


def write_graymap(matrix: np.ndarray, path: Union[str, Path], vmin: Optional[float] = None,
                  vmax: Optional[float] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write(format_graymap(matrix, vmin, vmax))
    return path


def matrix_frame(matrix: np.ndarray, row_labels: Optional[Sequence[str]] = None,
                 col_labels: Optional[Sequence[str]] = None, index_name: str = "row") -> pd.DataFrame:
    m = np.asarray(matrix)
    frame = pd.DataFrame(m, columns=list(col_labels) if col_labels is not None else [str(j) for j in range(m.shape[1])])
    frame.insert(0, index_name, list(row_labels) if row_labels is not None else list(range(m.shape[0])))
    return frame


def write_matrix_csv(matrix: np.ndarray, path: Union[str, Path], row_labels: Optional[Sequence[str]] = None,
                     col_labels: Optional[Sequence[str]] = None, index_name: str = "row") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    matrix_frame(matrix, row_labels, col_labels, index_name).to_csv(path, index=False, float_format="%.6f")
    return path


def write_heatmap(matrix: np.ndarray, stem: Union[str, Path], vmin: Optional[float] = None,
                  vmax: Optional[float] = None, row_labels: Optional[Sequence[str]] = None,
                  col_labels: Optional[Sequence[str]] = None, index_name: str = "row") -> Tuple[Path, Path]:
    """``<stem>.csv`` and ``<stem>.pgm`` for one matrix"""
    stem = Path(stem)
    csv_path = write_matrix_csv(matrix, stem.with_suffix(".csv"), row_labels, col_labels, index_name)
    pgm_path = write_graymap(matrix, stem.with_suffix(".pgm"), vmin, vmax)
    return csv_path, pgm_path
