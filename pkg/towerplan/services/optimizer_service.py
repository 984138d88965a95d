"""
TowerPlan - Optimizer Service
Interference-aware submodular placement: ε-greedy selection over the
candidate set with uniform random choice inside the near-optimal set Ω_ε.

Random draws use numpy's PCG64 generator seeded with the run seed. Ω_ε is
listed in ascending candidate index and one entry is drawn with
rng.integers(len(Ω_ε)), so identical (problem, config, seed) give identical
selections for any worker count.
"""

import hashlib
import heapq
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from towerplan.config import settings
from towerplan.errors import InfeasibleTargetError, UnsupportedOperationError
from towerplan.models import (
    IterationRecord,
    OptimizerConfig,
    PlacementResult,
    RadioConfig,
    Scenario,
    Scene,
    TerminatedBy,
    TransmitterSet,
)
from towerplan.services.objective_service import AggregateState, ObjectiveConfig, ObjectiveService
from towerplan.services.propagation_service import PropagationService
from towerplan.services.scene_service import CandidateSet, ReceiverGrid, SceneService

logger = logging.getLogger(__name__)

LAZY_REFRESH_SLACK = 1e-12  # relative; stale bounds this close to the best are refreshed too


@dataclass
class PlacementProblem:
    """Precomputed fields plus everything S(T) and the selection loop need."""
    scenario_name: str
    scene: Scene
    grid: ReceiverGrid
    candidates: CandidateSet
    fields: np.ndarray  # |X| × cells, linear SNR
    fixed: Tuple[int, ...]
    objective: ObjectiveConfig
    radio: RadioConfig

    @property
    def n_candidates(self) -> int:
        return self.fields.shape[0]

    @property
    def free_indices(self) -> List[int]:
        """Candidates that are not part of the fixed set."""
        fixed = set(self.fixed)
        return [i for i in range(self.n_candidates) if i not in fixed]

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.scene.digest().encode("utf-8"))
        h.update(self.radio.digest().encode("utf-8"))
        h.update(self.grid.header().encode("utf-8"))
        h.update("|".join(site.key for site in self.candidates.sites).encode("utf-8"))
        h.update(repr(self.fixed).encode("utf-8"))
        h.update(self.objective.mode.value.encode("utf-8"))
        h.update(self.objective.weight.model_dump_json().encode("utf-8"))
        h.update(np.ascontiguousarray(self.objective.density.flat, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.fields, dtype="<f8").tobytes())
        return h.hexdigest()

    def with_fields(self, fields: np.ndarray) -> "PlacementProblem":
        """Same problem with another field matrix (M recomputed)."""
        objective = ObjectiveConfig(
            mode=self.objective.mode,
            weight=self.objective.weight,
            density=self.objective.density,
            M=ObjectiveService.compute_M(fields, self.objective.mode),
        )
        return PlacementProblem(
            scenario_name=self.scenario_name,
            scene=self.scene,
            grid=self.grid,
            candidates=self.candidates,
            fields=fields,
            fixed=self.fixed,
            objective=objective,
            radio=self.radio,
        )

    @classmethod
    def from_scenario(cls, scenario: Scenario, cache=None, workers: Optional[int] = None) -> "PlacementProblem":
        scene = scenario.scene
        grid = SceneService.make_grid(scene)
        candidates, fixed = SceneService.candidates_for(scenario)
        fields = PropagationService.stack(
            PropagationService.field_matrix(candidates, scene, grid, scenario.radio, cache=cache, workers=workers)
        )
        density = ObjectiveService.build_density(scene, grid, scenario.priority, scenario._base_dir)
        objective = ObjectiveService.make_config(scenario.objective, density, fields)
        logger.info(
            f"Problem '{scenario.name}': {len(candidates)} candidates, {len(fixed)} fixed, "
            f"{grid.rows}x{grid.cols} grid, M = {objective.M:.6g}"
        )
        return cls(
            scenario_name=scenario.name,
            scene=scene,
            grid=grid,
            candidates=candidates,
            fields=fields,
            fixed=fixed,
            objective=objective,
            radio=scenario.radio,
        )


class LazyGainQueue:
    """Max-heap of (possibly stale) gain upper bounds keyed by candidate index."""

    def __init__(self):
        self.heap: List[Tuple[float, int, int]] = []  # (-bound, index, iteration computed)
        self.started = False
        self.evaluations = 0

    def remove(self, index: int) -> None:
        self.heap = [entry for entry in self.heap if entry[1] != index]
        heapq.heapify(self.heap)


class OptimizerService:
    """Selection loop, feasibility bound and trajectory checks."""

    @classmethod
    def feasibility_precheck(cls, problem: PlacementProblem) -> float:
        """S of the fixed set plus every candidate: an upper bound on any achievable S."""
        members = list(problem.fixed) + problem.free_indices
        return ObjectiveService.S_eval(members, problem.fields, problem.objective)

    @classmethod
    def evaluate_gains(
        cls, state: AggregateState, indices: Sequence[int], workers: Optional[int] = None
    ) -> np.ndarray:
        """G(x|T) for each index against the frozen aggregate of T, in index order."""
        workers = workers or settings.workers
        if workers > 1 and len(indices) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                gains = list(pool.map(state.gain, indices))
        else:
            gains = [state.gain(i) for i in indices]
        return np.asarray(gains, dtype=float)

    @classmethod
    def lazy_gain_schedule(
        cls,
        state: AggregateState,
        queue: LazyGainQueue,
        iteration: int,
        remaining: Sequence[int],
        epsilon: float = 0.0,
        workers: Optional[int] = None,
    ) -> Tuple[float, List[int]]:
        """
        Exact best gain and every index attaining it, refreshing only the
        stale bounds that could still reach the best.

        Stale gains upper-bound fresh ones when W̄ is concave, so an entry
        whose stale bound is below the best fresh gain can be skipped.
        """
        if epsilon > 0:
            raise UnsupportedOperationError("lazy evaluation needs epsilon = 0; Ω_ε requires every gain")
        if not state.cfg.weight.is_concave():
            raise UnsupportedOperationError("lazy evaluation needs a concave utility")

        if not queue.started:
            gains = cls.evaluate_gains(state, remaining, workers)
            queue.heap = [(-float(g), int(i), iteration) for i, g in zip(remaining, gains)]
            heapq.heapify(queue.heap)
            queue.evaluations += len(remaining)
            queue.started = True

        best = -np.inf
        best_set: List[int] = []
        settled: List[Tuple[float, int]] = []
        while queue.heap:
            bound = -queue.heap[0][0]
            if best_set and bound < best - abs(best) * LAZY_REFRESH_SLACK:
                break
            _, index, stamp = heapq.heappop(queue.heap)
            if stamp == iteration:
                g = bound
            else:
                g = state.gain(index)
                queue.evaluations += 1
            if g > best:
                settled.extend((best, i) for i in best_set)
                best, best_set = g, [index]
            elif g == best:
                best_set.append(index)
            else:
                settled.append((g, index))

        for g, index in settled + [(best, i) for i in best_set]:
            heapq.heappush(queue.heap, (-g, index, iteration))
        return float(best), sorted(best_set)

    @classmethod
    def ia_spa(
        cls,
        problem: PlacementProblem,
        cfg: OptimizerConfig,
        workers: Optional[int] = None,
        observer: Optional[Callable[[IterationRecord, AggregateState], None]] = None,
    ) -> PlacementResult:
        """
        Greedy placement starting from the fixed set. Each iteration draws
        uniformly from Ω_ε = {x : G(x|T) ≥ (1−ε)·max G} until the budget is
        spent, the coverage target is reached or no useful candidate is left.
        """
        rng = np.random.Generator(np.random.PCG64(cfg.seed))
        state = AggregateState(problem.fields, problem.objective, problem.fixed)
        s_initial = state.value
        termination = cfg.termination

        if termination == TerminatedBy.COVERAGE:
            bound = cls.feasibility_precheck(problem)
            if cfg.coverage_target > bound:
                raise InfeasibleTargetError(
                    f"coverage target {cfg.coverage_target!r} exceeds S of all candidates ({bound!r})"
                )

        lazy = cfg.lazy
        if lazy and (cfg.epsilon > 0 or not problem.objective.weight.is_concave()):
            logger.warning("⚠️ Lazy gain evaluation disabled: it needs epsilon = 0 and a concave utility")
            lazy = False
        queue = LazyGainQueue() if lazy else None

        selected: List[int] = []
        trajectory: List[IterationRecord] = []
        terminated_by = TerminatedBy.EXHAUSTED
        while True:
            if termination == TerminatedBy.BUDGET and len(selected) >= cfg.budget:
                terminated_by = TerminatedBy.BUDGET
                break
            if termination == TerminatedBy.COVERAGE and state.value >= cfg.coverage_target:
                terminated_by = TerminatedBy.COVERAGE
                break
            remaining = [i for i in range(problem.n_candidates) if i not in state]
            if not remaining:
                break

            iteration = len(selected)
            if queue is not None:
                max_gain, omega = cls.lazy_gain_schedule(state, queue, iteration, remaining, workers=workers)
                gains_by_index = {i: max_gain for i in omega}
            else:
                gains = cls.evaluate_gains(state, remaining, workers)
                max_gain = float(gains.max())
                threshold = (1.0 - cfg.epsilon) * max_gain
                omega = [i for i, g in zip(remaining, gains) if g >= threshold]
                gains_by_index = dict(zip(remaining, gains.tolist()))

            if max_gain <= settings.gain_tolerance:
                logger.info(f"Iteration {iteration}: best gain {max_gain:.3g} is saturated, stopping")
                break

            choice = omega[int(rng.integers(len(omega)))]
            s_after = state.add(choice)
            if queue is not None:
                queue.remove(choice)
            selected.append(choice)
            record = IterationRecord(
                iteration=iteration,
                index=choice,
                site=problem.candidates.sites[choice],
                max_gain=max_gain,
                chosen_gain=float(gains_by_index[choice]),
                omega_size=len(omega),
                s_after=s_after,
            )
            trajectory.append(record)
            logger.debug(
                f"Iteration {iteration}: picked {choice} from |Ω_ε| = {len(omega)}, "
                f"gain {record.chosen_gain:.6g}, S = {s_after:.6g}"
            )
            if observer is not None:
                observer(record, state)

        if problem.objective.clamped:
            logger.warning(f"⚠️ {problem.objective.clamped} aggregate values exceeded M and were clamped")
        if queue is not None:
            logger.info(f"Lazy evaluation used {queue.evaluations} gain evaluations")
        logger.info(
            f"✅ Placement done: {len(selected)} selected, S {s_initial:.6g} -> {state.value:.6g} "
            f"({terminated_by.value})"
        )

        return PlacementResult(
            scenario=problem.scenario_name,
            problem_hash=problem.digest(),
            seed=cfg.seed,
            epsilon=cfg.epsilon,
            lazy=queue is not None,
            budget=cfg.budget,
            coverage_target=cfg.coverage_target,
            selection=TransmitterSet(selected=selected, fixed=list(problem.fixed)),
            selected_sites=[problem.candidates.sites[i] for i in selected],
            fixed_sites=[problem.candidates.sites[i] for i in problem.fixed],
            s_initial=s_initial,
            s_final=state.value,
            trajectory=trajectory,
            terminated_by=terminated_by,
        )

    @staticmethod
    def check_trajectory(result: PlacementResult, tol: float = 1e-12) -> List[str]:
        """Post-hoc check of S monotonicity and the per-step (1−ε) guarantee; returns violations."""
        problems = []
        previous = result.s_initial
        for record in result.trajectory:
            if record.s_after < previous - tol:
                problems.append(f"iteration {record.iteration}: S decreased {previous!r} -> {record.s_after!r}")
            if record.chosen_gain < (1.0 - result.epsilon) * record.max_gain - tol:
                problems.append(
                    f"iteration {record.iteration}: gain {record.chosen_gain!r} below "
                    f"(1 - {result.epsilon}) x {record.max_gain!r}"
                )
            previous = record.s_after
        fixed = set(result.selection.fixed)
        if fixed.intersection(result.selection.selected):
            problems.append("a fixed site was selected again")
        return problems


# Convenience functions
def ia_spa(problem: PlacementProblem, cfg: OptimizerConfig) -> PlacementResult:
    return OptimizerService.ia_spa(problem, cfg)


def feasibility_precheck(problem: PlacementProblem) -> float:
    return OptimizerService.feasibility_precheck(problem)
