"""
TowerPlan - Oracle Service
Independent verification: exhaustive optimal k-subsets, approximation-bound
certificates, randomized property checks and the random-placement baseline.
"""

import itertools
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from towerplan.config import settings
from towerplan.errors import (
    CapExceededError,
    ProblemMismatchError,
    ScenarioValidationError,
    UnsupportedOperationError,
)
from towerplan.models import (
    BaselineResult,
    BoundCertificate,
    BruteForceResult,
    MetricsReport,
    PlacementResult,
    PropertyCheck,
    SuiteReport,
    WeightFamily,
)
from towerplan.services.metrics_service import MetricsService
from towerplan.services.objective_service import AggregateState, ObjectiveService
from towerplan.services.optimizer_service import OptimizerService, PlacementProblem

logger = logging.getLogger(__name__)

MONOTONICITY_SLACK = 1e-12
DIMINISHING_RETURNS_SLACK = 1e-9
INTEGRAL_TOLERANCE = 1e-3
MAX_INTEGRAL_TRIALS = 50
MAX_COUNTEREXAMPLES = 10
BRUTE_FORCE_CHUNK = 2048
STATISTICS = ["mean_rate", "std_rate", "max_rate", "edge_rate_p5", "mean_interf", "std_interf", "max_interf"]


def _chunked(iterable, size: int):
    iterator = iter(iterable)
    while chunk := list(itertools.islice(iterator, size)):
        yield chunk


def change_pct(reference: Optional[float], new: Optional[float]) -> Optional[float]:
    """100·(new − ref)/ref; 0 when both are 0, None when undefined."""
    if reference is None or new is None:
        return None
    if reference == 0:
        return 0.0 if new == 0 else None
    return 100.0 * (new - reference) / reference


class OracleService:
    """Brute force, certification, baselines and property checks."""

    # ============================================================
    # Exhaustive optimum
    # ============================================================

    @classmethod
    def brute_force_optimal(
        cls,
        problem: PlacementProblem,
        k: int,
        cap: Optional[int] = None,
        workers: Optional[int] = None,
    ) -> BruteForceResult:
        """
        Best S over every k-subset of the non-fixed candidates (fixed sites
        always included). Subsets are enumerated in lexicographic order and
        the first maximizer wins.
        """
        cap = cap or settings.brute_force_cap
        workers = workers or settings.workers
        pool = problem.free_indices
        if not 1 <= k <= len(pool):
            raise ScenarioValidationError(f"k = {k} must be between 1 and {len(pool)}")
        required = math.comb(len(pool), k)
        if required > cap:
            raise CapExceededError(
                f"{required} subsets of size {k} from {len(pool)} candidates exceed the cap of {cap}",
                required_cap=required,
            )

        base = AggregateState(problem.fields, problem.objective, problem.fixed)
        fields, cfg = problem.fields, problem.objective

        def _scan(chunk):
            best_s, best_subset, ties = -np.inf, None, 0
            for subset in chunk:
                agg = base.agg
                for index in subset:
                    agg = ObjectiveService.fold(agg, fields[index], cfg.mode)
                s = ObjectiveService.value_of(agg, cfg)
                if s > best_s:
                    best_s, best_subset, ties = s, subset, 1
                elif s == best_s:
                    ties += 1
            return best_s, best_subset, ties

        chunks = _chunked(itertools.combinations(pool, k), BRUTE_FORCE_CHUNK)
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as executor:
                partials = list(executor.map(_scan, chunks))
        else:
            partials = [_scan(chunk) for chunk in chunks]

        best_s, best_subset, ties = -np.inf, None, 0
        for s, subset, count in partials:
            if s > best_s:
                best_s, best_subset, ties = s, subset, count
            elif s == best_s:
                ties += count

        logger.info(f"Brute force k={k}: {required} subsets, best S = {best_s:.6g} at {list(best_subset)}")
        return BruteForceResult(
            problem_hash=problem.digest(),
            k=k,
            best_subset=list(best_subset),
            best_S=float(best_s),
            subsets_evaluated=required,
            ties_at_best=ties,
        )

    @staticmethod
    def certify_bound(greedy: PlacementResult, oracle: BruteForceResult) -> BoundCertificate:
        """Check S(T_n) ≥ (1 − e^{−n(1−ε)/k})·S(T_k*) for a budget-terminated run."""
        if greedy.problem_hash != oracle.problem_hash:
            raise ProblemMismatchError("placement and brute-force results were computed for different problems")
        if greedy.budget is None:
            raise UnsupportedOperationError("only budget-terminated placements can be certified")
        n = len(greedy.selection.selected)
        k = oracle.k
        constant = 1.0 - math.exp(-n * (1.0 - greedy.epsilon) / k)
        target = constant * oracle.best_S
        ratio = greedy.s_final / oracle.best_S if oracle.best_S > 0 else 1.0
        return BoundCertificate(
            passed=greedy.s_final >= target - MONOTONICITY_SLACK,
            n=n,
            k=k,
            epsilon=greedy.epsilon,
            bound_constant=constant,
            greedy_S=greedy.s_final,
            optimal_S=oracle.best_S,
            ratio=ratio,
            margin=greedy.s_final - target,
        )

    # ============================================================
    # Random placement baseline
    # ============================================================

    @staticmethod
    def average_reports(reports: Sequence[MetricsReport]) -> MetricsReport:
        """Arithmetic mean of each statistic across reports."""
        frame = pd.DataFrame([r.statistics() for r in reports], columns=STATISTICS, dtype=float)
        means = frame.mean(axis=0, skipna=False)
        values = {name: (None if pd.isna(means[name]) else float(means[name])) for name in STATISTICS}
        return MetricsReport(mode=reports[0].mode, **values)

    @classmethod
    def random_baseline(
        cls,
        problem: PlacementProblem,
        count_towers: int,
        draws: int,
        seed: int,
        greedy: Optional[PlacementResult] = None,
    ) -> BaselineResult:
        """
        `draws` uniform subsets of `count_towers` non-fixed candidates (without
        replacement), each evaluated together with the fixed set.
        """
        pool = problem.free_indices
        if count_towers < 1 or count_towers > len(pool):
            raise ScenarioValidationError(f"count_towers = {count_towers} must be between 1 and {len(pool)}")
        if draws < 1:
            raise ScenarioValidationError("draws must be at least 1")

        rng = np.random.Generator(np.random.PCG64(seed))
        mode = problem.objective.mode
        subsets, s_values, reports = [], [], []
        for _ in range(draws):
            subset = sorted(int(i) for i in rng.choice(pool, size=count_towers, replace=False))
            members = list(problem.fixed) + subset
            subsets.append(subset)
            s_values.append(ObjectiveService.S_eval(members, problem.fields, problem.objective))
            reports.append(MetricsService.report(members, problem.fields, problem.radio, mode))
        averaged = cls.average_reports(reports)

        result = BaselineResult(
            scenario=problem.scenario_name,
            seed=seed,
            count_towers=count_towers,
            draws=draws,
            subsets=subsets,
            s_values=s_values,
            per_draw=reports,
            averaged=averaged,
        )
        if greedy is not None:
            greedy_report = MetricsService.report(greedy.selection.members, problem.fields, problem.radio, mode)
            result.greedy = greedy_report
            result.greedy_S = greedy.s_final
            result.greedy_beats_draws = sum(1 for s in s_values if greedy.s_final > s)
            result.change_pct = {
                name: change_pct(getattr(averaged, name), getattr(greedy_report, name)) for name in STATISTICS
            }
            logger.info(
                f"Greedy vs random: mean rate {greedy_report.mean_rate / 1e6:.3f} vs "
                f"{averaged.mean_rate / 1e6:.3f} Mbit/s, greedy S beats {result.greedy_beats_draws}/{draws} draws"
            )
        return result

    # ============================================================
    # Property checks
    # ============================================================

    @staticmethod
    def _random_subset(rng: np.random.Generator, pool: Sequence[int], max_size: Optional[int] = None) -> List[int]:
        limit = len(pool) if max_size is None else max_size
        size = int(rng.integers(0, limit + 1))
        return sorted(int(i) for i in rng.choice(pool, size=size, replace=False)) if size else []

    @classmethod
    def check_monotonicity(cls, problem: PlacementProblem, trials: int, rng: np.random.Generator) -> PropertyCheck:
        pool = list(range(problem.n_candidates))
        fields, cfg = problem.fields, problem.objective
        violations, examples = 0, []
        for _ in range(trials):
            larger = cls._random_subset(rng, pool)
            smaller = cls._random_subset(rng, larger) if larger else []
            s_small = ObjectiveService.S_eval(smaller, fields, cfg)
            s_large = ObjectiveService.S_eval(larger, fields, cfg)
            if s_small > s_large + MONOTONICITY_SLACK:
                violations += 1
                if len(examples) < MAX_COUNTEREXAMPLES:
                    examples.append({"T1": smaller, "T2": larger, "S_T1": s_small, "S_T2": s_large})
        return PropertyCheck(
            name="monotonicity", trials=trials, violations=violations, passed=violations == 0, counterexamples=examples
        )

    @classmethod
    def check_diminishing_returns(
        cls, problem: PlacementProblem, trials: int, rng: np.random.Generator
    ) -> PropertyCheck:
        pool = list(range(problem.n_candidates))
        fields, cfg = problem.fields, problem.objective
        violations, examples = 0, []
        effective = trials if len(pool) >= 2 else 0
        for _ in range(effective):
            t = int(rng.choice(pool))
            others = [i for i in pool if i != t]
            B = cls._random_subset(rng, others)
            A = cls._random_subset(rng, B) if B else []
            gain_a = ObjectiveService.gain(t, A, fields, cfg)
            gain_b = ObjectiveService.gain(t, B, fields, cfg)
            if gain_a < gain_b - DIMINISHING_RETURNS_SLACK:
                violations += 1
                if len(examples) < MAX_COUNTEREXAMPLES:
                    examples.append({"A": A, "B": B, "t": t, "gain_A": gain_a, "gain_B": gain_b})
        note = None
        if not cfg.weight.is_concave():
            note = "utility is not concave; diminishing returns is not expected to hold"
        return PropertyCheck(
            name="diminishing_returns",
            trials=effective,
            violations=violations,
            passed=violations == 0,
            counterexamples=examples,
            note=note,
        )

    @classmethod
    def check_integral_form(
        cls,
        problem: PlacementProblem,
        trials: int,
        rng: np.random.Generator,
        kappa_samples: Optional[int] = None,
        spacing: str = "geometric",
    ) -> PropertyCheck:
        cfg = problem.objective
        if cfg.weight.family == WeightFamily.CUSTOM_TABLE:
            return PropertyCheck(
                name="integral_form", trials=0, violations=0, passed=True,
                note="skipped: custom_table utility has no closed-form marginal weight",
            )
        kappa_samples = kappa_samples or settings.kappa_samples
        pool = list(range(problem.n_candidates))
        count = min(trials, MAX_INTEGRAL_TRIALS)
        violations, examples, worst = 0, [], 0.0
        for _ in range(count):
            T = cls._random_subset(rng, pool)
            closed = ObjectiveService.S_eval(T, problem.fields, cfg)
            integral = ObjectiveService.S_integral_oracle(T, problem.fields, cfg, kappa_samples, spacing)
            rel = abs(integral - closed) / max(closed, 1e-12)
            worst = max(worst, rel)
            if rel >= INTEGRAL_TOLERANCE:
                violations += 1
                if len(examples) < MAX_COUNTEREXAMPLES:
                    examples.append({"T": T, "S_closed": closed, "S_integral": integral, "relative_error": rel})
        return PropertyCheck(
            name="integral_form",
            trials=count,
            violations=violations,
            passed=violations == 0,
            counterexamples=examples,
            note=f"worst relative error {worst:.3g} ({spacing} kappa grid, {kappa_samples} samples)",
        )

    @classmethod
    def property_suite(
        cls,
        problem: PlacementProblem,
        trials: int,
        seed: int,
        kappa_samples: Optional[int] = None,
        spacing: str = "geometric",
    ) -> SuiteReport:
        """Monotonicity, diminishing returns and integral-form equivalence on random sets."""
        if trials <= 0:
            logger.warning("⚠️ Property suite run with 0 trials: every check passes vacuously")
        trials = max(trials, 0)
        rng = np.random.Generator(np.random.PCG64(seed))
        checks = [
            cls.check_monotonicity(problem, trials, rng),
            cls.check_diminishing_returns(problem, trials, rng),
            cls.check_integral_form(problem, trials, rng, kappa_samples, spacing),
        ]
        for check in checks:
            status = "✅ pass" if check.passed else f"⚠️ {check.violations} counterexample(s)"
            logger.info(f"Property {check.name}: {status} over {check.trials} trials")
        return SuiteReport(
            scenario=problem.scenario_name,
            seed=seed,
            trials=trials,
            checks=checks,
            passed=all(c.passed for c in checks),
        )

    # ============================================================
    # Complexity timing
    # ============================================================

    @classmethod
    def gain_timing(cls, problem: PlacementProblem, iterations: int = 3) -> Dict[str, Any]:
        """Mean seconds per full gain sweep for |X| candidates and for a doubled set."""
        doubled = problem.with_fields(np.vstack([problem.fields, problem.fields * (1.0 + 1e-9)]))

        def _sweep_time(p: PlacementProblem) -> float:
            state = AggregateState(p.fields, p.objective, p.fixed)
            elapsed = []
            for _ in range(iterations):
                remaining = [i for i in range(p.n_candidates) if i not in state]
                if not remaining:
                    break
                start = time.perf_counter()
                gains = OptimizerService.evaluate_gains(state, remaining, workers=1)
                elapsed.append(time.perf_counter() - start)
                state.add(remaining[int(np.argmax(gains))])
            return float(np.mean(elapsed)) if elapsed else 0.0

        base = _sweep_time(problem)
        double = _sweep_time(doubled)
        timing = {
            "candidates": problem.n_candidates,
            "seconds_per_iteration": base,
            "doubled_candidates": doubled.n_candidates,
            "doubled_seconds_per_iteration": double,
            "ratio": double / base if base > 0 else None,
        }
        logger.info(f"Gain sweep: {base * 1e3:.2f} ms for |X|={problem.n_candidates}, {double * 1e3:.2f} ms doubled")
        return timing


# Convenience functions
def brute_force_optimal(problem: PlacementProblem, k: int) -> BruteForceResult:
    return OracleService.brute_force_optimal(problem, k)


def certify_bound(greedy: PlacementResult, oracle: BruteForceResult) -> BoundCertificate:
    return OracleService.certify_bound(greedy, oracle)


def random_baseline(problem: PlacementProblem, count_towers: int, draws: int, seed: int) -> BaselineResult:
    return OracleService.random_baseline(problem, count_towers, draws, seed)
