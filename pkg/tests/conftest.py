"""
TowerPlan - Shared test fixtures
"""

from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pytest

from towerplan.models import AggregationMode, Bounds, RadioConfig, Scene, Site, WeightSpec
from towerplan.services.objective_service import ObjectiveConfig, ObjectiveService, PriorityDensity
from towerplan.services.optimizer_service import PlacementProblem
from towerplan.services.scene_service import CandidateSet, ReceiverGrid, SceneService

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


def build_problem(
    fields: np.ndarray,
    mode: AggregationMode = AggregationMode.MAX,
    weight: Optional[WeightSpec] = None,
    density: Optional[np.ndarray] = None,
    fixed: Sequence[int] = (),
) -> PlacementProblem:
    """Placement problem over an arbitrary |X| × cells field matrix (one-row grid)."""
    fields = np.asarray(fields, dtype=float)
    n_sites, n_cells = fields.shape
    scene = Scene(bounds=Bounds(max_x=float(n_cells), max_y=1.0), grid_spacing=1.0, receiver_height=1.5)
    grid = ReceiverGrid(origin_x=0.0, origin_y=0.0, spacing=1.0, rows=1, cols=n_cells, height=1.5)
    candidates = CandidateSet(sites=tuple(Site(x=i + 0.5, y=0.5, z=20.0) for i in range(n_sites)))
    weights = np.ones((1, n_cells)) if density is None else np.asarray(density, dtype=float).reshape(1, n_cells)
    objective = ObjectiveConfig(
        mode=mode,
        weight=weight or WeightSpec(),
        density=PriorityDensity.normalized(weights),
        M=ObjectiveService.compute_M(fields, mode),
    )
    return PlacementProblem(
        scenario_name="synthetic",
        scene=scene,
        grid=grid,
        candidates=candidates,
        fields=fields,
        fixed=tuple(fixed),
        objective=objective,
        radio=RadioConfig(),
    )


@pytest.fixture
def problem_factory():
    return build_problem


@pytest.fixture(scope="session")
def toy_path() -> Path:
    return SCENARIO_DIR / "toy_city.json"


@pytest.fixture(scope="session")
def park_path() -> Path:
    return SCENARIO_DIR / "toy_city_park.json"


@pytest.fixture(scope="session")
def incremental_path() -> Path:
    return SCENARIO_DIR / "toy_city_incremental.json"


@pytest.fixture(scope="session")
def hotspots_path() -> Path:
    return SCENARIO_DIR / "toy_city_hotspots.json"


@pytest.fixture(scope="session")
def toy_scenario(toy_path):
    return SceneService.load_scenario(toy_path)


@pytest.fixture(scope="session")
def toy_problem(toy_scenario) -> PlacementProblem:
    """Golden toy city: 16 candidates on a 20 x 20 grid, fields computed without a cache."""
    return PlacementProblem.from_scenario(toy_scenario)


@pytest.fixture(scope="session")
def park_problem(park_path) -> PlacementProblem:
    return PlacementProblem.from_scenario(SceneService.load_scenario(park_path))


@pytest.fixture
def cache_dir(tmp_path) -> Path:
    return tmp_path / "cache"
