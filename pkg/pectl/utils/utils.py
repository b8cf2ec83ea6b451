#!/usr/bin/env python3
"""
pectl - Utility Functions
-----------
CSV writers/readers and number formatting shared by the CLI and reports.
"""
import csv
import datetime
import math
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Union

import numpy as np

TRAJECTORY_COLUMNS = (
    "t", "norm_u", "norm_v", "omega",
    "norm_u_hat", "norm_v_hat", "norm_err_u", "norm_err_v",
)


def format_elapsed(seconds: float) -> str:
    """Format a wall-clock duration as HH:MM:SS.s"""
    td = datetime.timedelta(seconds=seconds)
    hours, rem = divmod(td.total_seconds(), 3600)
    mins, secs = divmod(rem, 60)
    return f"{int(hours):02}:{int(mins):02}:{secs:04.1f}"


def format_value(value) -> str:
    """Compact rendering for report cells: 6 significant digits, inf/nan spelled out."""
    if isinstance(value, (bool, np.bool_)):
        return "pass" if value else "FAIL"
    if isinstance(value, str):
        return value
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.6g}"


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def write_rows_csv(path: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    return path


def write_trajectory_csv(trajectory, path: Union[str, Path]) -> Path:
    """One row per step; observer columns are left empty when no observer ran."""
    observer = trajectory.has_observer
    columns = [trajectory.times, trajectory.norm_u, trajectory.norm_v, trajectory.omega]
    if observer:
        columns += [trajectory.norm_u_hat, trajectory.norm_v_hat, trajectory.norm_err_u, trajectory.norm_err_v]

    def rows():
        for i in range(len(trajectory)):
            row = [col[i] for col in columns]
            if not observer:
                row += [None] * 4
            yield row

    return write_rows_csv(path, TRAJECTORY_COLUMNS, rows())


def read_trajectory_csv(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    """Columns by name; empty cells come back as NaN."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        data: List[List[float]] = [[float(c) if c else math.nan for c in row] for row in reader]
    table = np.array(data, dtype=float).reshape(-1, len(header))
    return {name: table[:, i] for i, name in enumerate(header)}
