"""
TowerPlan - build-fields command
Precompute the field of every candidate into the persistent cache.
"""

import argparse
import logging

from towerplan.commands.common import load_scenario, open_cache, output_dir
from towerplan.errors import ScenarioValidationError
from towerplan.services.propagation_service import PropagationService
from towerplan.services.scene_service import SceneService

logger = logging.getLogger(__name__)


def register(subparsers, parent: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("build-fields", parents=[parent], help="populate the field cache")
    parser.add_argument("scenario", help="scenario file")
    parser.add_argument("--export", action="store_true", help="also write each field as a text raster under --out")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    scenario = load_scenario(args)
    cache = open_cache(args)
    if cache is None:
        raise ScenarioValidationError("build-fields needs the field cache; drop --no-cache")

    scene = scenario.scene
    grid = SceneService.make_grid(scene)
    candidates, _ = SceneService.candidates_for(scenario)
    fields = PropagationService.field_matrix(candidates, scene, grid, scenario.radio, cache=cache, workers=args.workers)

    if args.export:
        target = output_dir(args) / "fields"
        target.mkdir(parents=True, exist_ok=True)
        for i, field in enumerate(fields):
            PropagationService.export_field(field, target / f"field_{i:04d}.txt")
        logger.info(f"Exported {len(fields)} fields to {target}")

    stats = cache.stats
    logger.info(f"✅ Field cache at {cache.directory}: {cache.entry_count()} entries")
    print(
        f"{len(fields)} fields of {grid.rows}x{grid.cols} cells "
        f"(cache hits {stats.hits}, computed {stats.misses})"
    )
    return 0
