"""
TowerPlan - Field Exchange Format
Text and binary raster files shared by the field cache, the importer and
the raster exports.

Text:   header line `rows cols origin_x origin_y spacing height`, then
        rows*cols whitespace-separated values in row-major order.
Binary: the same header line, a blank line, then little-endian float64s.
"""

from pathlib import Path
from typing import Tuple, Union

import numpy as np

from towerplan.errors import FieldIOError, FieldValueError, GridMismatchError
from towerplan.services.scene_service import ReceiverGrid

PathLike = Union[str, Path]


class FieldIOService:
    """Reader/writer for the field exchange format."""

    VALUES_PER_LINE = 8

    @classmethod
    def parse_header(cls, line: str, path: PathLike) -> ReceiverGrid:
        parts = line.split()
        if len(parts) != 6:
            raise FieldIOError("field header must have 6 entries: rows cols origin_x origin_y spacing height", path)
        try:
            return ReceiverGrid(
                rows=int(parts[0]),
                cols=int(parts[1]),
                origin_x=float(parts[2]),
                origin_y=float(parts[3]),
                spacing=float(parts[4]),
                height=float(parts[5]),
            )
        except ValueError as e:
            raise FieldIOError(f"malformed field header: {e}", path) from e

    @classmethod
    def check_values(cls, values: np.ndarray, path: PathLike, allow_negative: bool = False) -> None:
        """Reject NaN/inf (and negatives unless allowed), naming the first bad cell."""
        bad = ~np.isfinite(values)
        if not allow_negative:
            bad |= values < 0
        if bad.any():
            row, col = (int(v) for v in np.argwhere(bad)[0])
            raise FieldValueError(f"invalid value {values[row, col]!r} at cell (row {row}, col {col})", path)

    @classmethod
    def write_text(cls, path: PathLike, grid: ReceiverGrid, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=float).reshape(grid.shape)
        lines = [grid.header()]
        flat = values.ravel()
        for start in range(0, flat.size, cls.VALUES_PER_LINE):
            chunk = flat[start:start + cls.VALUES_PER_LINE]
            lines.append(" ".join(repr(float(v)) for v in chunk))
        try:
            Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
        except OSError as e:
            raise FieldIOError(f"cannot write raster: {e}", path) from e

    @classmethod
    def read_text(cls, path: PathLike) -> Tuple[ReceiverGrid, np.ndarray]:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise FieldIOError(f"cannot read raster: {e}", path) from e
        header, _, body = text.partition("\n")
        grid = cls.parse_header(header, path)
        try:
            flat = np.array(body.split(), dtype=float)
        except ValueError as e:
            raise FieldIOError(f"non-numeric raster payload: {e}", path) from e
        if flat.size != grid.n_cells:
            raise FieldIOError(f"expected {grid.n_cells} values, found {flat.size}", path)
        return grid, flat.reshape(grid.shape)

    @classmethod
    def write_binary(cls, path: PathLike, grid: ReceiverGrid, values: np.ndarray) -> None:
        payload = np.ascontiguousarray(values, dtype="<f8").reshape(grid.shape)
        try:
            with open(path, "wb") as fh:
                fh.write((grid.header() + "\n\n").encode("utf-8"))
                fh.write(payload.tobytes(order="C"))
        except OSError as e:
            raise FieldIOError(f"cannot write field: {e}", path) from e

    @classmethod
    def read_binary(cls, path: PathLike) -> Tuple[ReceiverGrid, np.ndarray]:
        try:
            data = Path(path).read_bytes()
        except OSError as e:
            raise FieldIOError(f"cannot read field: {e}", path) from e
        header, sep, payload = data.partition(b"\n\n")
        if not sep:
            raise FieldIOError("binary field is missing the blank line after its header", path)
        grid = cls.parse_header(header.decode("utf-8"), path)
        if len(payload) != grid.n_cells * 8:
            raise FieldIOError(f"expected {grid.n_cells * 8} payload bytes, found {len(payload)}", path)
        values = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(grid.shape)
        return grid, values

    @classmethod
    def read_for_grid(cls, path: PathLike, grid: ReceiverGrid, allow_negative: bool = False) -> np.ndarray:
        """Read a text raster and require that it describes `grid`."""
        file_grid, values = cls.read_text(path)
        if not file_grid.matches(grid):
            raise GridMismatchError(
                f"raster grid '{file_grid.header()}' does not match receiver grid '{grid.header()}'", path
            )
        cls.check_values(values, path, allow_negative=allow_negative)
        return values
