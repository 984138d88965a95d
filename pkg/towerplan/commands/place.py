"""
TowerPlan - place command
Run the greedy placement and write the placement result.
"""

import argparse
import logging

from towerplan.commands.common import load_problem, output_dir, write_raster
from towerplan.models import IterationRecord
from towerplan.services.metrics_service import MetricsService
from towerplan.services.objective_service import AggregateState
from towerplan.services.optimizer_service import OptimizerService
from towerplan.services.report_service import ReportService

logger = logging.getLogger(__name__)


def register(subparsers, parent: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("place", parents=[parent], help="select transmitter sites")
    parser.add_argument("scenario", help="scenario file")
    parser.add_argument("--seed", type=int, default=None, help="override optimizer.seed")
    parser.add_argument(
        "--snapshots", type=int, default=0, metavar="N",
        help="write the rate raster after each of the first N iterations",
    )
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    if args.seed is not None:
        args.overrides = list(args.overrides) + [f"optimizer.seed={args.seed}"]
    scenario, problem = load_problem(args)
    out = output_dir(args)

    def snapshot(record: IterationRecord, state: AggregateState) -> None:
        if record.iteration >= args.snapshots:
            return
        rate = MetricsService.rate_raster(state.members, problem.fields, problem.radio, problem.objective.mode)
        write_raster(out / f"snapshot_{record.iteration + 1}.txt", problem.grid, rate.reshape(problem.grid.shape))

    result = OptimizerService.ia_spa(
        problem, scenario.optimizer, workers=args.workers, observer=snapshot if args.snapshots > 0 else None
    )
    for issue in OptimizerService.check_trajectory(result):
        logger.warning(f"⚠️ Trajectory check: {issue}")

    path = ReportService.write_json(result, out / "placement.json")
    print(
        f"{len(result.selection.selected)} sites selected {result.selection.selected}, "
        f"S = {result.s_final:.6f} ({result.terminated_by.value}) -> {path}"
    )
    return 0
