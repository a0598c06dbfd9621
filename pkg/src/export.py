import io
import json
import logging
import os
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd

from src.kernel_operator import TestFunction, grid_from_header


class ReportWriter:
    """
    Writes analysis results for downstream scripts.
    JSON for structured results, CSV for sequences; every file is written to a
    temporary file next to its destination and renamed into place, so readers
    never see a partial file.
    """

    JSON_INDENT = 2

    @staticmethod
    def dumps_json(data):
        return json.dumps(data, sort_keys=True, indent=ReportWriter.JSON_INDENT, allow_nan=False) + "\n"

    @staticmethod
    def frame_to_csv(df, header_line=None):
        buffer = io.StringIO()
        if header_line is not None:
            buffer.write(f"# {header_line}\n")
        df.to_csv(buffer, index=False, lineterminator="\n")
        return buffer.getvalue()

    def _write_atomic(self, path, text):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, temp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
        try:
            with os.fdopen(fd, "w", newline="") as f:
                f.write(text)
            os.replace(temp_name, path)
        except BaseException:
            if os.path.exists(temp_name):
                os.remove(temp_name)
            raise
        size_kb = len(text.encode("utf-8")) / 1024
        logging.info(f"Saved {path.name} ({size_kb:.1f} KB)")

    def save_json(self, data, path):
        self._write_atomic(path, self.dumps_json(data))

    def save_csv(self, df, path, header_line=None):
        self._write_atomic(path, self.frame_to_csv(df, header_line))

    def save_test_function(self, f, path):
        """Single `value` column aligned with the grid nodes, grid header on the first line."""
        header = json.dumps(f.grid.header(), sort_keys=True)
        self.save_csv(pd.DataFrame({"value": np.asarray(f.values)}), path, header_line=header)


def read_test_function_csv(path):
    """Returns (grid header dict or None, values) of a test function CSV."""
    path = Path(path)
    if not path.exists():
        raise ValueError(f"test function file not found: {path}")
    with open(path) as f:
        first = f.readline().strip()
    header = None
    if first.startswith("#"):
        try:
            header = json.loads(first[1:])
        except json.JSONDecodeError as e:
            raise ValueError(f"invalid grid header in {path}: {e.msg}")

    try:
        df = pd.read_csv(path, comment="#", header=None, dtype=str)
    except pd.errors.EmptyDataError:
        raise ValueError(f"{path} has no values")
    if df.shape[1] != 1:
        raise ValueError(f"{path} must have a single column, found {df.shape[1]}")
    column = df.iloc[:, 0].str.strip()
    if len(column) and column.iloc[0] == "value":
        column = column.iloc[1:]
    values = pd.to_numeric(column, errors="coerce").to_numpy(dtype=float)
    if len(values) == 0 or not np.all(np.isfinite(values)):
        raise ValueError(f"{path} contains no values, or non-numeric or non-finite ones")
    return header, values


def load_test_function(path, grid=None):
    """
    Reads a test function CSV. The grid comes from the `# {json}` header line
    when present, otherwise from `grid`.
    """
    header, values = read_test_function_csv(path)
    if header is not None:
        file_grid = grid_from_header(header)
        if grid is not None and (grid.mode != file_grid.mode or grid.n != file_grid.n
                                 or grid.step != file_grid.step):
            raise ValueError(f"grid header of {path} does not match the requested grid")
        grid = file_grid
    if grid is None:
        raise ValueError(f"{path} has no grid header; pass the grid explicitly")
    return TestFunction(values, grid)
