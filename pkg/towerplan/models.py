"""
TowerPlan - Pydantic Models
Scenario file schema, run configuration and result documents
"""

import hashlib
import math
from enum import Enum
from functools import cached_property
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PrivateAttr,
    RootModel,
    field_validator,
    model_validator,
)
from shapely.geometry import LinearRing, Polygon, box

from towerplan import __version__


Point2D = Tuple[float, float]


# ============================================================
# Enums
# ============================================================

class AggregationMode(str, Enum):
    """How the signals of a transmitter set combine at a receiver"""
    MAX = "max"  # strongest server
    SUM = "sum"  # total received power


class WeightFamily(str, Enum):
    """Utility antiderivative families"""
    LOG1P = "log1p"
    SATURATING = "saturating"
    CUSTOM_TABLE = "custom_table"


class DensityKind(str, Enum):
    """Sources for the spatial priority density"""
    UNIFORM = "uniform"
    RASTER = "raster"
    HOTSPOTS = "hotspots"


class ZoneKind(str, Enum):
    POLYGON = "polygon"
    ELLIPSE = "ellipse"


class TerminatedBy(str, Enum):
    """Why a placement run stopped"""
    BUDGET = "budget"
    COVERAGE = "coverage"
    EXHAUSTED = "exhausted"


# ============================================================
# Scene Models
# ============================================================

class Bounds(BaseModel):
    """Axis-aligned domain rectangle in meters"""
    min_x: float = 0.0
    min_y: float = 0.0
    max_x: float
    max_y: float

    @model_validator(mode="after")
    def _positive_extent(self):
        if not (self.max_x - self.min_x > 0 and self.max_y - self.min_y > 0):
            raise ValueError("bounds must have strictly positive width and height")
        return self

    @property
    def width(self) -> float:
        return self.max_x - self.min_x

    @property
    def height(self) -> float:
        return self.max_y - self.min_y

    def contains(self, x: float, y: float) -> bool:
        return self.min_x <= x <= self.max_x and self.min_y <= y <= self.max_y

    def as_polygon(self) -> Polygon:
        return box(self.min_x, self.min_y, self.max_x, self.max_y)


class GridSpec(BaseModel):
    """Receiver lattice settings"""
    spacing: float = Field(gt=0)
    receiver_height: float = Field(default=1.5, ge=0)


class MaterialTable(RootModel[Dict[str, float]]):
    """Material id -> attenuation in dB per meter"""

    @field_validator("root")
    @classmethod
    def _finite_non_negative(cls, entries: Dict[str, float]) -> Dict[str, float]:
        for material_id, coefficient in entries.items():
            if not math.isfinite(coefficient) or coefficient < 0:
                raise ValueError(
                    f"material '{material_id}' attenuation must be finite and >= 0, got {coefficient}"
                )
        return entries

    @property
    def entries(self) -> Dict[str, float]:
        return self.root

    def attenuation(self, material_id: str) -> float:
        return self.root[material_id]


def _normalize_ring(vertices: List[Point2D], what: str) -> List[Point2D]:
    points = [(float(x), float(y)) for x, y in vertices]
    if len(points) > 3 and points[0] == points[-1]:
        points = points[:-1]
    if len(points) < 3:
        raise ValueError(f"{what} needs at least 3 distinct vertices")
    ring = LinearRing(points)
    if not ring.is_simple:
        raise ValueError(f"{what} is self-intersecting")
    if Polygon(points).area <= 0:
        raise ValueError(f"{what} has zero area")
    if not ring.is_ccw:
        points.reverse()
    return points


class Building(BaseModel):
    """Extruded footprint (2.5D prism)"""
    footprint: List[Point2D] = Field(min_length=3)
    height: float = Field(gt=0)
    material: str

    @field_validator("footprint")
    @classmethod
    def _simple_ccw(cls, footprint: List[Point2D]) -> List[Point2D]:
        return _normalize_ring(footprint, "building footprint")

    @cached_property
    def polygon(self) -> Polygon:
        return Polygon(self.footprint)


class ExclusionZone(BaseModel):
    """Region where no transmitter may be placed"""
    kind: ZoneKind
    vertices: Optional[List[Point2D]] = None
    center: Optional[Point2D] = None
    semi_axes: Optional[Point2D] = None
    angle_deg: float = 0.0

    @model_validator(mode="after")
    def _shape_fields(self):
        if self.kind == ZoneKind.POLYGON:
            if not self.vertices:
                raise ValueError("polygon exclusion zone needs 'vertices'")
            self.vertices = _normalize_ring(self.vertices, "exclusion polygon")
        else:
            if self.center is None or self.semi_axes is None:
                raise ValueError("ellipse exclusion zone needs 'center' and 'semi_axes'")
            if min(self.semi_axes) <= 0:
                raise ValueError("ellipse semi axes must be > 0")
        return self

    @cached_property
    def polygon(self) -> Optional[Polygon]:
        return Polygon(self.vertices) if self.kind == ZoneKind.POLYGON else None

    def contains_xy(self, xs, ys) -> np.ndarray:
        """Vectorized membership test; boundary points count as inside."""
        import shapely

        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        if self.kind == ZoneKind.POLYGON:
            return np.asarray(shapely.intersects_xy(self.polygon, xs, ys), dtype=bool)
        cx, cy = self.center
        a, b = self.semi_axes
        theta = math.radians(self.angle_deg)
        dx, dy = xs - cx, ys - cy
        u = dx * math.cos(theta) + dy * math.sin(theta)
        v = -dx * math.sin(theta) + dy * math.cos(theta)
        return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def check_scene_geometry(bounds: Bounds, buildings: List[Building], materials: MaterialTable) -> None:
    """Raise ValueError naming the first violated scene invariant."""
    domain = bounds.as_polygon()
    for i, building in enumerate(buildings):
        if not domain.covers(building.polygon):
            raise ValueError(f"building {i} footprint is not inside bounds")
        if building.material not in materials.entries:
            raise ValueError(f"building {i} uses unknown material '{building.material}'")


class Scene(BaseModel):
    """Validated 2.5D environment"""
    bounds: Bounds
    buildings: List[Building] = Field(default_factory=list)
    materials: MaterialTable = Field(default_factory=lambda: MaterialTable({}))
    grid_spacing: float = Field(gt=0)
    receiver_height: float = Field(default=1.5, ge=0)

    @model_validator(mode="after")
    def _geometry(self):
        check_scene_geometry(self.bounds, self.buildings, self.materials)
        return self

    def digest(self) -> str:
        return hashlib.sha256(self.model_dump_json().encode("utf-8")).hexdigest()

    def with_receiver_height(self, height: float) -> "Scene":
        return self.model_copy(update={"receiver_height": float(height)})


class Site(BaseModel):
    """Transmitter position (mount height z) in meters"""
    model_config = ConfigDict(frozen=True)

    x: float
    y: float
    z: float

    @property
    def key(self) -> str:
        return f"{self.x!r},{self.y!r},{self.z!r}"

    @property
    def xy(self) -> Point2D:
        return (self.x, self.y)


# ============================================================
# Scenario Sections
# ============================================================

class CandidateSpec(BaseModel):
    """Explicit site list and/or an interior lattice"""
    mount_height: float = Field(default=20.0, ge=0)
    sites: List[Point2D] = Field(default_factory=list)
    lattice_pitch: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _some_source(self):
        if not self.sites and self.lattice_pitch is None:
            raise ValueError("candidates need 'sites' or 'lattice_pitch'")
        return self


class HotSpot(BaseModel):
    center: Point2D
    sigma: float = Field(gt=0)
    weight: float = Field(gt=0)


class PrioritySpec(BaseModel):
    """Source of the spatial priority density"""
    kind: DensityKind = DensityKind.UNIFORM
    raster_path: Optional[str] = None
    hotspots: List[HotSpot] = Field(default_factory=list)
    floor: float = Field(default=1.0, ge=0)  # uniform base level under the hotspots

    @model_validator(mode="after")
    def _kind_fields(self):
        if self.kind == DensityKind.RASTER and not self.raster_path:
            raise ValueError("raster priority density needs 'raster_path'")
        if self.kind == DensityKind.HOTSPOTS and not self.hotspots:
            raise ValueError("hotspot priority density needs at least one hotspot")
        return self


class WeightSpec(BaseModel):
    """Utility antiderivative W̄ and its parameters"""
    family: WeightFamily = WeightFamily.LOG1P
    c: float = Field(default=1.0, gt=0)
    table: Optional[List[Point2D]] = None  # (x, W̄(x)) knots for CUSTOM_TABLE

    @model_validator(mode="after")
    def _table_shape(self):
        if self.family != WeightFamily.CUSTOM_TABLE:
            return self
        if not self.table or len(self.table) < 2:
            raise ValueError("custom_table weight needs at least 2 knots")
        xs = [p[0] for p in self.table]
        ys = [p[1] for p in self.table]
        if not all(math.isfinite(v) for v in xs + ys):
            raise ValueError("custom_table knots must be finite")
        if xs[0] != 0.0 or ys[0] != 0.0:
            raise ValueError("custom_table must start at (0, 0) so that W̄(0) = 0")
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("custom_table x values must be strictly increasing")
        if any(b < a for a, b in zip(ys, ys[1:])):
            raise ValueError("custom_table W̄ values must be non-decreasing")
        return self

    def is_concave(self) -> bool:
        if self.family != WeightFamily.CUSTOM_TABLE:
            return True
        slopes = [
            (y1 - y0) / (x1 - x0)
            for (x0, y0), (x1, y1) in zip(self.table, self.table[1:])
        ]
        return all(b <= a + 1e-12 for a, b in zip(slopes, slopes[1:]))


class ObjectiveSpec(BaseModel):
    mode: AggregationMode = AggregationMode.MAX
    weight: WeightSpec = Field(default_factory=WeightSpec)


class RadioConfig(BaseModel):
    """Link budget parameters"""
    carrier_frequency: float = Field(default=1.8e9, gt=0)  # Hz
    tx_power_dbm: float = 40.0
    bandwidth: float = Field(default=10e6, gt=0)  # Hz
    gap: float = Field(default=2.0, ge=1)  # Shannon gap Γ, linear
    min_distance: float = Field(default=1.0, gt=0)  # m
    noise_figure_db: float = Field(default=0.0, ge=0)
    thermal_noise_dbm_per_hz: float = -174.0

    @property
    def noise_power(self) -> float:
        """σ² after normalization."""
        return 1.0

    @property
    def noise_floor_dbm(self) -> float:
        return self.thermal_noise_dbm_per_hz + 10.0 * math.log10(self.bandwidth) + self.noise_figure_db

    @property
    def noise_power_w(self) -> float:
        return 10.0 ** ((self.noise_floor_dbm - 30.0) / 10.0)

    def digest(self) -> str:
        return hashlib.sha256(self.model_dump_json().encode("utf-8")).hexdigest()


class OptimizerConfig(BaseModel):
    """Termination rule, randomization and incremental-deployment settings"""
    epsilon: float = Field(default=0.0, ge=0, lt=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    budget: Optional[int] = Field(default=None, ge=1)
    coverage_target: Optional[float] = Field(default=None, gt=0)
    fixed_sites: List[Union[int, Point2D]] = Field(default_factory=list)
    lazy: bool = False

    @model_validator(mode="after")
    def _one_termination(self):
        if (self.budget is None) == (self.coverage_target is None):
            raise ValueError("optimizer needs exactly one of 'budget' or 'coverage_target'")
        return self

    @property
    def termination(self) -> TerminatedBy:
        return TerminatedBy.BUDGET if self.budget is not None else TerminatedBy.COVERAGE


class Scenario(BaseModel):
    """Top-level scenario document"""
    model_config = ConfigDict(extra="forbid")

    name: str = "scenario"
    bounds: Bounds
    grid: GridSpec
    materials: MaterialTable = Field(default_factory=lambda: MaterialTable({}))
    buildings: List[Building] = Field(default_factory=list)
    candidates: CandidateSpec
    exclusions: List[ExclusionZone] = Field(default_factory=list)
    priority: PrioritySpec = Field(default_factory=PrioritySpec)
    objective: ObjectiveSpec = Field(default_factory=ObjectiveSpec)
    optimizer: OptimizerConfig
    radio: RadioConfig = Field(default_factory=RadioConfig)

    _base_dir: Optional[str] = PrivateAttr(default=None)

    @model_validator(mode="after")
    def _scene_invariants(self):
        check_scene_geometry(self.bounds, self.buildings, self.materials)
        return self

    @property
    def scene(self) -> Scene:
        return Scene(
            bounds=self.bounds,
            buildings=self.buildings,
            materials=self.materials,
            grid_spacing=self.grid.spacing,
            receiver_height=self.grid.receiver_height,
        )


# ============================================================
# Result Models
# ============================================================

class TransmitterSet(BaseModel):
    """Greedy-ordered selection plus the pre-existing fixed set"""
    selected: List[int] = Field(default_factory=list)
    fixed: List[int] = Field(default_factory=list)

    @model_validator(mode="after")
    def _disjoint(self):
        members = self.fixed + self.selected
        if any(i < 0 for i in members):
            raise ValueError("transmitter indices must be >= 0")
        if len(set(members)) != len(members):
            raise ValueError("selected and fixed indices must be distinct and disjoint")
        return self

    @property
    def members(self) -> List[int]:
        """Fixed first, then selection order."""
        return self.fixed + self.selected

    def check_range(self, n_candidates: int) -> None:
        bad = [i for i in self.members if i >= n_candidates]
        if bad:
            raise ValueError(f"transmitter indices {bad} out of range for {n_candidates} candidates")


class IterationRecord(BaseModel):
    iteration: int
    index: int
    site: Site
    max_gain: float
    chosen_gain: float
    omega_size: int
    s_after: float


class PlacementResult(BaseModel):
    version: str = __version__
    scenario: str
    problem_hash: str
    seed: int
    epsilon: float
    lazy: bool = False
    budget: Optional[int] = None
    coverage_target: Optional[float] = None
    selection: TransmitterSet
    selected_sites: List[Site]
    fixed_sites: List[Site]
    s_initial: float
    s_final: float
    trajectory: List[IterationRecord]
    terminated_by: TerminatedBy

    @model_validator(mode="after")
    def _trajectory_length(self):
        if len(self.trajectory) != len(self.selection.selected):
            raise ValueError("trajectory length must equal the number of selected sites")
        return self


class MetricsReport(BaseModel):
    """Network statistics over the receiver grid (rates in bit/s, interference in nW)"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    mode: AggregationMode
    mean_rate: float
    std_rate: float
    max_rate: float
    edge_rate_p5: float
    mean_interf: Optional[float] = None
    std_interf: Optional[float] = None
    max_interf: Optional[float] = None
    rate_raster: Optional[np.ndarray] = Field(default=None, exclude=True)
    interference_raster: Optional[np.ndarray] = Field(default=None, exclude=True)

    def statistics(self) -> Dict[str, Optional[float]]:
        return self.model_dump(exclude={"mode"})


class EvaluationResult(BaseModel):
    version: str = __version__
    scenario: str
    sites: List[Site]
    heights: List[float]
    s_value: float
    report: MetricsReport


class ComparisonRow(BaseModel):
    statistic: str
    reference: Optional[float]
    new: Optional[float]
    change_pct: Optional[float]


class ComparisonResult(BaseModel):
    version: str = __version__
    scenario: str
    reference: EvaluationResult
    new: EvaluationResult
    rows: List[ComparisonRow]


class BruteForceResult(BaseModel):
    problem_hash: str
    k: int
    best_subset: List[int]
    best_S: float
    subsets_evaluated: int
    ties_at_best: int = 1


class BoundCertificate(BaseModel):
    passed: bool
    n: int
    k: int
    epsilon: float
    bound_constant: float
    greedy_S: float
    optimal_S: float
    ratio: float
    margin: float


class BaselineResult(BaseModel):
    version: str = __version__
    scenario: str
    seed: int
    count_towers: int
    draws: int
    subsets: List[List[int]]
    s_values: List[float]
    per_draw: List[MetricsReport]
    averaged: MetricsReport
    greedy: Optional[MetricsReport] = None
    greedy_S: Optional[float] = None
    greedy_beats_draws: Optional[int] = None
    change_pct: Dict[str, Optional[float]] = Field(default_factory=dict)


class PropertyCheck(BaseModel):
    name: str
    trials: int
    violations: int
    passed: bool
    counterexamples: List[Dict[str, Any]] = Field(default_factory=list)
    note: Optional[str] = None


class SuiteReport(BaseModel):
    version: str = __version__
    scenario: str
    seed: int
    trials: int
    checks: List[PropertyCheck]
    certificates: List[BoundCertificate] = Field(default_factory=list)
    timing: Optional[Dict[str, Optional[float]]] = None
    passed: bool
