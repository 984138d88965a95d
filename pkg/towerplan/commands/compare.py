"""
TowerPlan - compare command
Side-by-side reports of two transmitter lists with per-statistic change.
"""

import argparse
import logging

from towerplan.commands.common import evaluate_sites, load_problem, load_scenario, output_dir, resolve_sites
from towerplan.services.report_service import ReportService

logger = logging.getLogger(__name__)


def register(subparsers, parent: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("compare", parents=[parent], help="compare two transmitter lists")
    parser.add_argument("scenario", help="scenario file")
    parser.add_argument("--ref", required=True, help="reference transmitters (same forms as evaluate --tx)")
    parser.add_argument("--new", required=True, help="new transmitters")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    scenario = load_scenario(args)
    ref_sites = resolve_sites(args, scenario, args.ref)
    new_sites = resolve_sites(args, scenario, args.new)
    scenario, problem = load_problem(args, scenario)

    reference = evaluate_sites(args, scenario, problem, ref_sites)
    new = evaluate_sites(args, scenario, problem, new_sites)
    result = ReportService.compare(scenario.name, reference, new)

    out = output_dir(args)
    ReportService.write_json(result, out / "comparison.json")
    table = ReportService.comparison_table(result)
    ReportService.write_csv(table, out / "comparison.csv")
    print(table.to_string(index=False))
    return 0
