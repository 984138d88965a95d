"""
TowerPlan - Report Service
Artifact writers: JSON result documents, comparison tables and graymap
images of rasters.
"""

import logging
from pathlib import Path
from typing import Sequence, Tuple, Union

import numpy as np
import pandas as pd
from PIL import Image
from pydantic import BaseModel

from towerplan import __version__
from towerplan.errors import FieldIOError
from towerplan.models import ComparisonResult, ComparisonRow, EvaluationResult
from towerplan.services.oracle_service import STATISTICS, change_pct

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
GRAY_LEVELS = 255


class ReportService:
    """Writes result documents and raster images."""

    @staticmethod
    def write_json(model: BaseModel, path: PathLike) -> Path:
        """Pretty-printed JSON; no timestamps so reruns are byte-identical."""
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(model.model_dump_json(indent=2) + "\n", encoding="utf-8")
        except OSError as e:
            raise FieldIOError(f"cannot write artifact: {e}", path) from e
        logger.info(f"Wrote {path}")
        return path

    # ============================================================
    # Comparison
    # ============================================================

    @staticmethod
    def compare(scenario: str, reference: EvaluationResult, new: EvaluationResult) -> ComparisonResult:
        """Per-statistic change of `new` relative to `reference`, in percent."""
        pairs = [("S", reference.s_value, new.s_value)]
        pairs += [(name, getattr(reference.report, name), getattr(new.report, name)) for name in STATISTICS]
        rows = [
            ComparisonRow(statistic=name, reference=ref, new=value, change_pct=change_pct(ref, value))
            for name, ref, value in pairs
        ]
        return ComparisonResult(scenario=scenario, reference=reference, new=new, rows=rows)

    @staticmethod
    def comparison_table(result: ComparisonResult) -> pd.DataFrame:
        return pd.DataFrame([row.model_dump() for row in result.rows], columns=list(ComparisonRow.model_fields))

    @classmethod
    def write_csv(cls, frame: pd.DataFrame, path: PathLike) -> Path:
        """CSV behind a `# towerplan <version>` line; read back with `comment="#"`."""
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with path.open("w", encoding="utf-8", newline="") as fh:
                fh.write(f"# towerplan {__version__}\n")
                frame.to_csv(fh, index=False, float_format="%.6f")
        except OSError as e:
            raise FieldIOError(f"cannot write table: {e}", path) from e
        return path

    # ============================================================
    # Graymap export
    # ============================================================

    @staticmethod
    def scale_to_gray(values: np.ndarray) -> Tuple[np.ndarray, float, float]:
        """Min/max scaling to 0..255, north up (last grid row first)."""
        values = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(values)):
            raise FieldIOError("raster contains non-finite values and cannot be exported")
        lo, hi = float(values.min()), float(values.max())
        if hi > lo:
            scaled = np.rint((values - lo) / (hi - lo) * GRAY_LEVELS)
        else:
            scaled = np.zeros_like(values)
        return np.flipud(scaled).astype(np.uint8), lo, hi

    @classmethod
    def export_graymap(cls, values: np.ndarray, path: PathLike, unit: str = "") -> Sequence[Path]:
        """Write a binary PGM plus a `<path>.scale.txt` sidecar recording the scale."""
        path = Path(path)
        gray, lo, hi = cls.scale_to_gray(values)
        sidecar = path.with_name(path.name + ".scale.txt")
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            Image.fromarray(gray).save(path, format="PPM")
            sidecar.write_text(
                f"min {lo!r}\nmax {hi!r}\nlevels {GRAY_LEVELS}\nunit {unit or '-'}\n"
                f"value = min + gray / {GRAY_LEVELS} * (max - min)\n"
                f"version towerplan {__version__}\n",
                encoding="utf-8",
            )
        except OSError as e:
            raise FieldIOError(f"cannot write image: {e}", path) from e
        logger.info(f"Wrote {path} (min {lo:.6g}, max {hi:.6g})")
        return path, sidecar


# Convenience functions
def write_json(model: BaseModel, path: PathLike) -> Path:
    return ReportService.write_json(model, path)


def export_graymap(values: np.ndarray, path: PathLike, unit: str = "") -> Sequence[Path]:
    return ReportService.export_graymap(values, path, unit)
