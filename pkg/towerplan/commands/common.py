"""
TowerPlan - Shared command plumbing
Common options, scenario overrides, transmitter lists and problem setup.
"""

import argparse
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from pydantic import ValidationError

from towerplan.config import settings
from towerplan.errors import ScenarioParseError, ScenarioValidationError
from towerplan.models import EvaluationResult, PlacementResult, Scenario, Site
from towerplan.services.field_cache_service import FieldCache
from towerplan.services.field_io_service import FieldIOService
from towerplan.services.metrics_service import MetricsService
from towerplan.services.objective_service import ObjectiveService
from towerplan.services.optimizer_service import PlacementProblem
from towerplan.services.propagation_service import PropagationService
from towerplan.services.scene_service import CandidateSet, ReceiverGrid, SceneService

logger = logging.getLogger(__name__)


def options_parser() -> argparse.ArgumentParser:
    """Options shared by every subcommand."""
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--out", default="out", help="output directory (default: ./out)")
    parent.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="override a scenario entry, e.g. optimizer.budget=5 (repeatable)",
    )
    parent.add_argument("--workers", type=int, default=None, help="thread pool size")
    parent.add_argument("--cache-dir", default=None, help="field cache directory (env: TOWERPLAN_CACHE_DIR)")
    parent.add_argument("--no-cache", action="store_true", help="compute fields without the cache")
    parent.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    return parent


# ============================================================
# Scenario loading
# ============================================================

def apply_overrides(raw: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    """Set dotted keys in the raw scenario; values are parsed as JSON, else kept as text."""
    for item in overrides:
        key, sep, text = item.partition("=")
        if not sep or not key.strip():
            raise ScenarioParseError(f"override '{item}' must look like key=value")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        parts = key.strip().split(".")
        node = raw
        for part in parts[:-1]:
            child = node.get(part)
            if not isinstance(child, dict):
                child = {}
                node[part] = child
            node = child
        node[parts[-1]] = value
        logger.debug(f"Override {key} = {value!r}")
    return raw


def load_scenario(args: argparse.Namespace) -> Scenario:
    path = Path(args.scenario)
    raw = SceneService.read_document(path)
    if not isinstance(raw, dict):
        raise ScenarioParseError("scenario document must be a JSON object")
    return SceneService.scenario_from_dict(apply_overrides(raw, args.overrides), base_dir=path.parent)


def open_cache(args: argparse.Namespace) -> Optional[FieldCache]:
    if getattr(args, "no_cache", False):
        return None
    return FieldCache(args.cache_dir or settings.cache_dir)


def load_problem(args: argparse.Namespace, scenario: Optional[Scenario] = None) -> Tuple[Scenario, PlacementProblem]:
    scenario = scenario or load_scenario(args)
    problem = PlacementProblem.from_scenario(scenario, cache=open_cache(args), workers=args.workers)
    return scenario, problem


def output_dir(args: argparse.Namespace) -> Path:
    path = Path(args.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_raster(path: Path, grid: ReceiverGrid, values) -> Path:
    FieldIOService.write_text(path, grid, values)
    logger.info(f"Wrote {path}")
    return path


# ============================================================
# Transmitter lists
# ============================================================

def _site_from_entry(entry: Any, candidates: CandidateSet, mount_height: float) -> Site:
    if isinstance(entry, bool):
        raise ScenarioParseError(f"invalid transmitter entry {entry!r}")
    if isinstance(entry, int):
        if not 0 <= entry < len(candidates):
            raise ScenarioValidationError(f"candidate index {entry} out of range for {len(candidates)} candidates")
        return candidates.sites[entry]
    if isinstance(entry, (list, tuple)) and len(entry) in (2, 3):
        try:
            coords = [float(v) for v in entry]
        except (TypeError, ValueError) as e:
            raise ScenarioParseError(f"invalid transmitter position {entry!r}") from e
        z = coords[2] if len(coords) == 3 else mount_height
        return Site(x=coords[0], y=coords[1], z=z)
    raise ScenarioParseError(f"invalid transmitter entry {entry!r}")


def parse_transmitters(spec: str, candidates: CandidateSet, mount_height: float) -> List[Site]:
    """
    Transmitters from a placement result file, a JSON list of candidate
    indices / [x, y(, z)] positions, or an inline list like "0,5,7" or "25:75,125:75".
    """
    path = Path(spec)
    if path.is_file():
        doc = SceneService.read_document(path)
        if isinstance(doc, dict) and "selection" in doc:
            try:
                placement = PlacementResult.model_validate(doc)
            except ValidationError as e:
                raise ScenarioParseError(f"{path}: not a valid placement result ({e.error_count()} errors)") from e
            return list(placement.fixed_sites) + list(placement.selected_sites)
        if isinstance(doc, dict) and "sites" in doc:
            return [Site.model_validate(s) for s in doc["sites"]]
        if isinstance(doc, list):
            return [_site_from_entry(entry, candidates, mount_height) for entry in doc]
        raise ScenarioParseError(f"{path}: unrecognized transmitter document")

    entries: List[Any] = []
    for token in (t.strip() for t in spec.split(",")):
        if not token:
            continue
        try:
            entries.append([float(v) for v in token.split(":")] if ":" in token else int(token))
        except ValueError as e:
            raise ScenarioParseError(f"invalid transmitter token '{token}'") from e
    return [_site_from_entry(entry, candidates, mount_height) for entry in entries]


def resolve_sites(args: argparse.Namespace, scenario: Scenario, spec: str) -> List[Site]:
    """Parse and validate a transmitter list without computing any field."""
    candidates, _ = SceneService.candidates_for(scenario)
    sites = parse_transmitters(spec, candidates, scenario.candidates.mount_height)
    SceneService.validate_sites(scenario.scene, sites, scenario.exclusions)
    return sites


def evaluate_sites(
    args: argparse.Namespace,
    scenario: Scenario,
    problem: PlacementProblem,
    sites: Sequence[Site],
    heights: Optional[Sequence[float]] = None,
) -> EvaluationResult:
    """S and the metrics report of an explicit transmitter list (fields via the cache)."""
    cache = open_cache(args)
    fields = PropagationService.stack(
        PropagationService.field_matrix(
            sites, problem.scene, problem.grid, problem.radio, cache=cache, workers=args.workers
        )
    )
    members = list(range(len(sites)))
    s_value = ObjectiveService.S_eval(members, fields, problem.objective)
    mode = problem.objective.mode
    if heights:
        report = MetricsService.multi_height_report(
            heights, sites, problem.scene, problem.radio, mode, cache=cache, workers=args.workers
        )
    else:
        report = MetricsService.report(members, fields, problem.radio, mode, grid=problem.grid)
    return EvaluationResult(
        scenario=scenario.name,
        sites=list(sites),
        heights=list(heights) if heights else [problem.grid.height],
        s_value=s_value,
        report=report,
    )
