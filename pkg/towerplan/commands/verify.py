"""
TowerPlan - verify command
Property suite plus brute-force certification of the greedy bound.
"""

import argparse
import logging
from typing import List

from towerplan.commands.common import load_problem, output_dir
from towerplan.errors import ScenarioParseError
from towerplan.models import PropertyCheck
from towerplan.services.optimizer_service import OptimizerService
from towerplan.services.oracle_service import OracleService
from towerplan.services.report_service import ReportService

logger = logging.getLogger(__name__)

DEFAULT_TRIALS = 200
DEFAULT_K = 3
VERIFY_FAILED = 8


def parse_ks(text: str) -> List[int]:
    try:
        ks = [int(k) for k in text.split(",") if k.strip()]
    except ValueError as e:
        raise ScenarioParseError(f"invalid subset sizes '{text}'") from e
    if not ks or min(ks) < 1:
        raise ScenarioParseError("subset sizes must be positive integers")
    return ks


def register(subparsers, parent: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("verify", parents=[parent], help="property suite and bound certificates")
    parser.add_argument("scenario", help="scenario file")
    parser.add_argument("--trials", type=int, default=DEFAULT_TRIALS, help="random trials per property")
    parser.add_argument("--seed", type=int, default=None, help="suite seed (default: optimizer.seed)")
    parser.add_argument("--k", default=None, help="budgets to certify, e.g. 2,3 (default: optimizer.budget or 3)")
    parser.add_argument("--kappa-samples", type=int, default=None, help="quadrature samples for the integral form")
    parser.add_argument("--spacing", choices=["uniform", "geometric"], default="geometric", help="kappa grid")
    parser.add_argument("--cap", type=int, default=None, help="maximum subsets for brute force")
    parser.add_argument("--timing", action="store_true", help="report gain-evaluation timing")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    scenario, problem = load_problem(args)
    seed = scenario.optimizer.seed if args.seed is None else args.seed
    suite = OracleService.property_suite(problem, args.trials, seed, args.kappa_samples, args.spacing)

    ks = parse_ks(args.k) if args.k else [scenario.optimizer.budget or DEFAULT_K]
    trajectory_issues: List[str] = []
    for k in ks:
        if k > len(problem.free_indices):
            logger.warning(f"⚠️ Skipping k={k}: only {len(problem.free_indices)} free candidates")
            continue
        oracle = OracleService.brute_force_optimal(problem, k, cap=args.cap, workers=args.workers)
        cfg = scenario.optimizer.model_copy(update={"budget": k, "coverage_target": None})
        greedy = OptimizerService.ia_spa(problem, cfg, workers=args.workers)
        trajectory_issues += [f"k={k}: {issue}" for issue in OptimizerService.check_trajectory(greedy)]
        certificate = OracleService.certify_bound(greedy, oracle)
        suite.certificates.append(certificate)
        print(
            f"k={k}: greedy S {certificate.greedy_S:.6f}, optimum {certificate.optimal_S:.6f}, "
            f"ratio {certificate.ratio:.4f} >= bound {certificate.bound_constant:.4f}: "
            f"{'pass' if certificate.passed else 'FAIL'}"
        )

    suite.checks.append(PropertyCheck(
        name="trajectory",
        trials=len(suite.certificates),
        violations=len(trajectory_issues),
        passed=not trajectory_issues,
        counterexamples=[{"issue": issue} for issue in trajectory_issues],
    ))
    if args.timing:
        suite.timing = OracleService.gain_timing(problem)

    suite.passed = all(c.passed for c in suite.checks) and all(c.passed for c in suite.certificates)
    path = ReportService.write_json(suite, output_dir(args) / "suite.json")
    for check in suite.checks:
        print(f"{check.name}: {'pass' if check.passed else 'FAIL'} ({check.violations}/{check.trials} violations)")
    print(f"{'all checks passed' if suite.passed else 'verification FAILED'} -> {path}")
    return 0 if suite.passed else VERIFY_FAILED
