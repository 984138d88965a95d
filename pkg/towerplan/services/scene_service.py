"""
TowerPlan - Scene Service
Loads and validates the 2.5D environment, rasterizes the receiver lattice
and generates the feasible candidate site set.
"""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import shapely
from pydantic import ValidationError

from towerplan.errors import FieldIOError, ScenarioParseError, ScenarioValidationError
from towerplan.models import CandidateSpec, ExclusionZone, Point2D, Scenario, Scene, Site

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReceiverGrid:
    """Cell-centered receiver lattice (row index grows with y)."""
    origin_x: float
    origin_y: float
    spacing: float
    rows: int
    cols: int
    height: float

    @property
    def cell_weight(self) -> float:
        return self.spacing * self.spacing

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def n_cells(self) -> int:
        return self.rows * self.cols

    def centers(self) -> Tuple[np.ndarray, np.ndarray]:
        """Cell-center coordinates as two rows×cols arrays."""
        xs = self.origin_x + (np.arange(self.cols) + 0.5) * self.spacing
        ys = self.origin_y + (np.arange(self.rows) + 0.5) * self.spacing
        return np.meshgrid(xs, ys)

    def header(self) -> str:
        return f"{self.rows} {self.cols} {self.origin_x!r} {self.origin_y!r} {self.spacing!r} {self.height!r}"

    def matches(self, other: "ReceiverGrid", tol: float = 1e-9) -> bool:
        return (
            self.rows == other.rows
            and self.cols == other.cols
            and abs(self.origin_x - other.origin_x) <= tol
            and abs(self.origin_y - other.origin_y) <= tol
            and abs(self.spacing - other.spacing) <= tol
            and abs(self.height - other.height) <= tol
        )


@dataclass(frozen=True)
class CandidateSet:
    """Feasible transmitter sites in row-major order."""
    sites: Tuple[Site, ...]
    exclusion_zones: Tuple[ExclusionZone, ...] = ()

    def __len__(self) -> int:
        return len(self.sites)

    def positions(self) -> np.ndarray:
        return np.array([[s.x, s.y] for s in self.sites], dtype=float).reshape(-1, 2)

    def index_of(self, x: float, y: float, tol: float = 1e-9) -> Optional[int]:
        for i, site in enumerate(self.sites):
            if abs(site.x - x) <= tol and abs(site.y - y) <= tol:
                return i
        return None


class SceneService:
    """
    Scenario loading and the geometric preprocessing that precedes
    field computation.
    """

    @classmethod
    def read_document(cls, path: Union[str, Path]) -> dict:
        """Raw JSON document of a scenario (or transmitter) file."""
        path = Path(path)
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError as e:
            raise FieldIOError("file not found", path) from e
        except json.JSONDecodeError as e:
            raise ScenarioParseError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from e
        except (OSError, UnicodeDecodeError) as e:
            raise FieldIOError(f"cannot read file: {e}", path) from e

    @classmethod
    def load_scenario(cls, path: Union[str, Path]) -> Scenario:
        """Parse and validate a scenario file."""
        path = Path(path)
        return cls.scenario_from_dict(cls.read_document(path), base_dir=path.parent)

    @classmethod
    def scenario_from_dict(cls, raw: dict, base_dir: Union[str, Path, None] = None) -> Scenario:
        if not isinstance(raw, dict):
            raise ScenarioParseError("scenario document must be a JSON object")
        try:
            scenario = Scenario.model_validate(raw)
        except ValidationError as e:
            raise ScenarioValidationError(cls._first_error(e)) from e
        scenario._base_dir = str(base_dir) if base_dir is not None else None
        return scenario

    @classmethod
    def load_scene(cls, path: Union[str, Path]) -> Scene:
        return cls.load_scenario(path).scene

    @staticmethod
    def _first_error(exc: ValidationError) -> str:
        first = exc.errors()[0]
        location = ".".join(str(part) for part in first.get("loc", ())) or "scenario"
        message = first.get("msg", "invalid value")
        if message.startswith("Value error, "):
            message = message[len("Value error, "):]
        return f"{location}: {message}"

    @classmethod
    def make_grid(cls, scene: Scene) -> ReceiverGrid:
        """Cell-centered lattice covering the bounds at the receiver height."""
        spacing = scene.grid_spacing
        bounds = scene.bounds
        if spacing > bounds.width or spacing > bounds.height:
            raise ScenarioValidationError(
                f"grid spacing {spacing} m exceeds the domain ({bounds.width} x {bounds.height} m)"
            )
        return ReceiverGrid(
            origin_x=bounds.min_x,
            origin_y=bounds.min_y,
            spacing=spacing,
            rows=int(math.floor(bounds.height / spacing)),
            cols=int(math.floor(bounds.width / spacing)),
            height=scene.receiver_height,
        )

    @classmethod
    def lattice_points(cls, scene: Scene, pitch: float) -> List[Point2D]:
        """Interior lattice: floor(extent/pitch) points per axis at half-pitch offsets."""
        bounds = scene.bounds
        nx = int(math.floor(bounds.width / pitch))
        ny = int(math.floor(bounds.height / pitch))
        return [
            (bounds.min_x + (i + 0.5) * pitch, bounds.min_y + (j + 0.5) * pitch)
            for j in range(ny)
            for i in range(nx)
        ]

    @classmethod
    def excluded_mask(cls, points: np.ndarray, zones: Sequence[ExclusionZone]) -> np.ndarray:
        mask = np.zeros(len(points), dtype=bool)
        if len(points) == 0:
            return mask
        for zone in zones:
            mask |= zone.contains_xy(points[:, 0], points[:, 1])
        return mask

    @classmethod
    def build_candidates(
        cls,
        scene: Scene,
        spec: CandidateSpec,
        exclusions: Sequence[ExclusionZone] = (),
        pinned: Sequence[Point2D] = (),
    ) -> CandidateSet:
        """
        Merge pinned, explicit and lattice sites, then filter.

        Pinned positions (existing transmitters given by coordinates) enter the
        pool first so the minimum-spacing filter never drops them; two pinned
        positions closer than one grid spacing are an error. Sites outside
        the bounds or inside an exclusion zone are removed; of two sites closer
        than one grid spacing the later one is dropped. The result is sorted
        row-major by position.
        """
        pool: List[Point2D] = [(float(x), float(y)) for x, y in pinned]
        pool += [(float(x), float(y)) for x, y in spec.sites]
        if spec.lattice_pitch is not None:
            pool += cls.lattice_points(scene, spec.lattice_pitch)

        points = np.array(pool, dtype=float).reshape(-1, 2)
        in_bounds = np.array([scene.bounds.contains(x, y) for x, y in pool], dtype=bool)
        excluded = cls.excluded_mask(points, exclusions)

        for i, (x, y) in enumerate(pool[: len(pinned)]):
            if not in_bounds[i] or excluded[i]:
                raise ScenarioValidationError(
                    f"fixed site ({x}, {y}) lies outside the bounds or inside an exclusion zone"
                )
            for px, py in pool[:i]:
                if math.hypot(x - px, y - py) < scene.grid_spacing:
                    raise ScenarioValidationError(
                        f"fixed sites ({px}, {py}) and ({x}, {y}) are closer than the "
                        f"grid spacing {scene.grid_spacing} m"
                    )

        kept: List[Point2D] = []
        dropped_excluded = 0
        dropped_spacing = 0
        for i, (x, y) in enumerate(pool):
            if not in_bounds[i] or excluded[i]:
                dropped_excluded += 1
                continue
            if any(math.hypot(x - kx, y - ky) < scene.grid_spacing for kx, ky in kept):
                dropped_spacing += 1
                continue
            kept.append((x, y))

        if not kept:
            raise ScenarioValidationError("candidate set is empty after exclusion filtering")
        if dropped_excluded or dropped_spacing:
            logger.info(
                f"Candidates: {len(kept)} kept, {dropped_excluded} excluded, "
                f"{dropped_spacing} dropped for spacing"
            )

        kept.sort(key=lambda p: (p[1], p[0]))
        sites = tuple(Site(x=x, y=y, z=spec.mount_height) for x, y in kept)
        return CandidateSet(sites=sites, exclusion_zones=tuple(exclusions))

    @classmethod
    def resolve_fixed(
        cls, candidates: CandidateSet, fixed_sites: Sequence[Union[int, Point2D]]
    ) -> Tuple[int, ...]:
        """Map fixed-site entries (indices or positions) to candidate indices."""
        resolved: List[int] = []
        for entry in fixed_sites:
            if isinstance(entry, int):
                index = entry
                if not 0 <= index < len(candidates):
                    raise ScenarioValidationError(
                        f"fixed site index {index} out of range for {len(candidates)} candidates"
                    )
            else:
                index = candidates.index_of(*entry)
                if index is None:
                    raise ScenarioValidationError(f"fixed site {tuple(entry)} is not a candidate")
            if index in resolved:
                raise ScenarioValidationError(f"fixed site {index} listed twice")
            resolved.append(index)
        return tuple(resolved)

    @classmethod
    def candidates_for(cls, scenario: Scenario) -> Tuple[CandidateSet, Tuple[int, ...]]:
        """Candidate set and fixed indices for a scenario."""
        pinned = [entry for entry in scenario.optimizer.fixed_sites if not isinstance(entry, int)]
        candidates = cls.build_candidates(
            scenario.scene, scenario.candidates, scenario.exclusions, pinned=pinned
        )
        return candidates, cls.resolve_fixed(candidates, scenario.optimizer.fixed_sites)

    @classmethod
    def validate_sites(cls, scene: Scene, sites: Sequence[Site], zones: Sequence[ExclusionZone]) -> None:
        """Reject transmitter sites outside the bounds or inside exclusion zones."""
        if not sites:
            raise ScenarioValidationError("transmitter list is empty")
        points = np.array([[s.x, s.y] for s in sites], dtype=float)
        excluded = cls.excluded_mask(points, zones)
        for site, bad in zip(sites, excluded):
            if not scene.bounds.contains(site.x, site.y):
                raise ScenarioValidationError(f"site ({site.x}, {site.y}) is outside the bounds")
            if bad:
                raise ScenarioValidationError(f"site ({site.x}, {site.y}) is inside an exclusion zone")

    @classmethod
    def indoor_mask(cls, scene: Scene, grid: ReceiverGrid) -> np.ndarray:
        """Cells whose center lies strictly inside a footprint below the roof."""
        xs, ys = grid.centers()
        mask = np.zeros(grid.shape, dtype=bool)
        for building in scene.buildings:
            if grid.height >= building.height:
                continue
            mask |= shapely.contains_xy(building.polygon, xs, ys)
        return mask


# Convenience functions
def load_scene(path: Union[str, Path]) -> Scene:
    return SceneService.load_scene(path)


def make_grid(scene: Scene) -> ReceiverGrid:
    return SceneService.make_grid(scene)


def build_candidates(
    scene: Scene,
    spec: CandidateSpec,
    exclusions: Sequence[ExclusionZone] = (),
    pinned: Sequence[Point2D] = (),
) -> CandidateSet:
    return SceneService.build_candidates(scene, spec, exclusions, pinned)
