"""
TowerPlan - evaluate command
Metrics report and rate/interference rasters for a given transmitter list.
"""

import argparse
import logging

from towerplan.commands.common import (
    evaluate_sites,
    load_problem,
    load_scenario,
    output_dir,
    resolve_sites,
    write_raster,
)
from towerplan.errors import ScenarioParseError
from towerplan.services.report_service import ReportService

logger = logging.getLogger(__name__)


def parse_heights(text: str):
    try:
        heights = [float(h) for h in text.split(",") if h.strip()]
    except ValueError as e:
        raise ScenarioParseError(f"invalid receiver heights '{text}'") from e
    return heights


def register(subparsers, parent: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("evaluate", parents=[parent], help="report metrics for transmitters")
    parser.add_argument("scenario", help="scenario file")
    parser.add_argument("--tx", required=True, help="placement.json, JSON list, or inline list such as 0,5,7")
    parser.add_argument("--heights", default=None, help="average over receiver heights, e.g. 1.5,5,10,20")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    scenario = load_scenario(args)
    sites = resolve_sites(args, scenario, args.tx)
    heights = parse_heights(args.heights) if args.heights else None
    scenario, problem = load_problem(args, scenario)

    result = evaluate_sites(args, scenario, problem, sites, heights)
    out = output_dir(args)
    ReportService.write_json(result, out / "evaluation.json")
    write_raster(out / "rate.txt", problem.grid, result.report.rate_raster)
    if result.report.interference_raster is not None:
        write_raster(out / "interference.txt", problem.grid, result.report.interference_raster)

    report = result.report
    print(
        f"S = {result.s_value:.6f}, mean rate {report.mean_rate / 1e6:.3f} Mbit/s, "
        f"edge rate {report.edge_rate_p5 / 1e6:.3f} Mbit/s"
    )
    return 0
