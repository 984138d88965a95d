"""
TowerPlan - baseline command
Random placements drawn from the candidate set, compared with the greedy run.
"""

import argparse
import logging

from towerplan.commands.common import load_problem, output_dir
from towerplan.services.optimizer_service import OptimizerService
from towerplan.services.oracle_service import OracleService
from towerplan.services.report_service import ReportService

logger = logging.getLogger(__name__)

DEFAULT_TOWERS = 9
DEFAULT_DRAWS = 10


def register(subparsers, parent: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("baseline", parents=[parent], help="random placement baseline")
    parser.add_argument("scenario", help="scenario file")
    parser.add_argument("--towers", type=int, default=None, help="towers per draw (default: budget, else 9)")
    parser.add_argument("--draws", type=int, default=DEFAULT_DRAWS, help="number of random draws")
    parser.add_argument("--seed", type=int, default=None, help="seed of the draws (default: optimizer.seed)")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    scenario, problem = load_problem(args)
    towers = args.towers or scenario.optimizer.budget or DEFAULT_TOWERS
    seed = scenario.optimizer.seed if args.seed is None else args.seed

    greedy_cfg = scenario.optimizer.model_copy(update={"budget": towers, "coverage_target": None})
    greedy = OptimizerService.ia_spa(problem, greedy_cfg, workers=args.workers)
    result = OracleService.random_baseline(problem, towers, args.draws, seed, greedy=greedy)

    path = ReportService.write_json(result, output_dir(args) / "baseline.json")
    change = result.change_pct.get("mean_rate")
    change_text = "n/a" if change is None else f"{change:+.1f}%"
    print(
        f"greedy mean rate {result.greedy.mean_rate / 1e6:.3f} Mbit/s vs random "
        f"{result.averaged.mean_rate / 1e6:.3f} Mbit/s ({change_text}); "
        f"greedy S beats {result.greedy_beats_draws}/{result.draws} draws -> {path}"
    )
    return 0
