"""
TowerPlan - Objective Tests
Utility families, priority density, S(T), its integral form and the marginal gain.
"""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from towerplan.errors import ScenarioValidationError, UnsupportedOperationError
from towerplan.models import (
    AggregationMode,
    DensityKind,
    HotSpot,
    PrioritySpec,
    WeightFamily,
    WeightSpec,
)
from towerplan.services.field_io_service import FieldIOService
from towerplan.services.objective_service import (
    AggregateState,
    ObjectiveConfig,
    ObjectiveService,
    PriorityDensity,
)
from towerplan.services.scene_service import SceneService

from tests.conftest import build_problem

LOG1P = WeightSpec()
SATURATING = WeightSpec(family=WeightFamily.SATURATING, c=2.0)
TABLE = WeightSpec(family=WeightFamily.CUSTOM_TABLE, table=[(0, 0), (1, 0.5), (3, 1.0)])


def random_subset(rng, pool):
    size = int(rng.integers(0, len(pool) + 1))
    return sorted(int(i) for i in rng.choice(pool, size=size, replace=False)) if size else []


class TestUtility:
    """W̄ and its derivative."""

    def test_log1p(self):
        """log(1 + x) with W(0) = 0."""
        assert ObjectiveService.wbar(LOG1P, 0.0) == 0.0
        assert ObjectiveService.wbar(LOG1P, math.e - 1.0) == pytest.approx(1.0)

    def test_saturating(self):
        """x / (x + c) is one half at x = c."""
        assert ObjectiveService.wbar(SATURATING, 2.0) == pytest.approx(0.5)
        assert ObjectiveService.wbar(SATURATING, 0.0) == 0.0

    def test_custom_table_interpolates_and_stays_flat(self):
        """Piecewise-linear between knots, constant after the last one."""
        assert ObjectiveService.wbar(TABLE, 2.0) == pytest.approx(0.75)
        assert ObjectiveService.wbar(TABLE, 0.5) == pytest.approx(0.25)
        assert ObjectiveService.wbar(TABLE, 10.0) == pytest.approx(1.0)

    def test_arrays_are_accepted(self):
        """The utility is applied element-wise."""
        values = ObjectiveService.wbar(LOG1P, np.array([0.0, 1.0, 3.0]))
        assert np.allclose(values, np.log1p([0.0, 1.0, 3.0]))

    def test_values_above_M_are_clamped_and_counted(self):
        """Aggregates beyond M are clamped and the clamp is counted."""
        cfg = ObjectiveConfig(
            mode=AggregationMode.MAX, weight=LOG1P, density=PriorityDensity.normalized(np.ones((1, 2))), M=1.0
        )
        value = ObjectiveService.wbar(LOG1P, np.array([5.0, 0.5]), M=1.0, cfg=cfg)
        assert np.allclose(value, [math.log1p(1.0), math.log1p(0.5)])
        assert cfg.clamped == 1

    def test_rounding_above_M_is_not_counted(self):
        """Excess within rounding of M is not reported as a clamp."""
        cfg = ObjectiveConfig(
            mode=AggregationMode.SUM, weight=LOG1P, density=PriorityDensity.normalized(np.ones((1, 1))), M=1.0
        )
        ObjectiveService.wbar(LOG1P, 1.0 + 1e-15, M=1.0, cfg=cfg)
        assert cfg.clamped == 0

    def test_marginal_weights(self):
        """Closed-form w for LOG1P and SATURATING; tables have none."""
        assert ObjectiveService.marginal_weight(LOG1P, 1.0) == pytest.approx(0.5)
        assert ObjectiveService.marginal_weight(SATURATING, 2.0) == pytest.approx(2.0 / 16.0)
        with pytest.raises(UnsupportedOperationError):
            ObjectiveService.marginal_weight(TABLE, 1.0)

    def test_table_must_start_at_origin(self):
        """A table must pass through (0, 0)."""
        with pytest.raises(ValidationError):
            WeightSpec(family=WeightFamily.CUSTOM_TABLE, table=[(0, 0.1), (1, 0.5)])

    def test_table_must_not_decrease(self):
        """Table values may not decrease."""
        with pytest.raises(ValidationError):
            WeightSpec(family=WeightFamily.CUSTOM_TABLE, table=[(0, 0), (1, 0.5), (2, 0.4)])

    def test_table_x_must_increase(self):
        """Table knots need strictly increasing x."""
        with pytest.raises(ValidationError):
            WeightSpec(family=WeightFamily.CUSTOM_TABLE, table=[(0, 0), (1, 0.5), (1, 0.7)])

    def test_concavity(self):
        """Built-in families are concave; the convex control table is not."""
        assert LOG1P.is_concave() and SATURATING.is_concave() and TABLE.is_concave()
        convex = WeightSpec(family=WeightFamily.CUSTOM_TABLE, table=[(0, 0), (1, 0.1), (4, 2), (30, 60)])
        assert not convex.is_concave()


class TestDensity:
    """Priority density construction."""

    def test_must_sum_to_one(self):
        """A density whose mass is not 1 is rejected."""
        with pytest.raises(ScenarioValidationError):
            PriorityDensity(weights=np.full((2, 2), 0.3))

    def test_negative_weight_is_rejected(self):
        """Negative priorities are rejected."""
        with pytest.raises(ScenarioValidationError):
            PriorityDensity.normalized(np.array([[1.0, -0.5]]))

    def test_zero_mass_is_rejected(self):
        """An all-zero raw density cannot be normalized."""
        with pytest.raises(ScenarioValidationError):
            PriorityDensity.normalized(np.zeros((3, 3)))

    def test_uniform_skips_building_interiors(self, toy_scenario):
        """Uniform priority is spread evenly over outdoor cells only."""
        scene = toy_scenario.scene
        grid = SceneService.make_grid(scene)
        density = ObjectiveService.build_density(scene, grid, PrioritySpec())
        indoor = SceneService.indoor_mask(scene, grid)
        assert density.weights.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(density.weights[indoor] == 0.0)
        outdoor = density.weights[~indoor]
        assert np.allclose(outdoor, 1.0 / outdoor.size)

    def test_hotspot_raises_nearby_priority(self, toy_scenario):
        """Cells near a hotspot outweigh distant ones."""
        scene = toy_scenario.scene
        grid = SceneService.make_grid(scene)
        spec = PrioritySpec(kind=DensityKind.HOTSPOTS, hotspots=[HotSpot(center=(185.0, 185.0), sigma=10.0, weight=5.0)])
        density = ObjectiveService.build_density(scene, grid, spec)
        assert density.weights[18, 18] > density.weights[1, 1]
        assert density.weights.sum() == pytest.approx(1.0, abs=1e-12)

    def test_raster_is_read_relative_to_scenario(self, toy_scenario, tmp_path):
        """Raster paths resolve against the scenario directory."""
        scene = toy_scenario.scene
        grid = SceneService.make_grid(scene)
        raw = np.zeros(grid.shape)
        raw[0, :] = 2.0
        raw[1, :] = 6.0
        FieldIOService.write_text(tmp_path / "demand.txt", grid, raw)
        spec = PrioritySpec(kind=DensityKind.RASTER, raster_path="demand.txt")
        density = ObjectiveService.build_density(scene, grid, spec, base_dir=str(tmp_path))
        assert density.weights[0].sum() == pytest.approx(0.25)
        assert density.weights[1].sum() == pytest.approx(0.75)


class TestS:
    """Closed-form S(T)."""

    def test_empty_set_is_zero(self):
        """S of the empty set is 0."""
        problem = build_problem(np.random.default_rng(1).uniform(0, 10, (3, 5)))
        assert ObjectiveService.S_eval([], problem.fields, problem.objective) == 0.0

    def test_point_mass_reads_one_cell(self):
        """All priority on one cell: S is the utility of that cell's aggregate."""
        fields = np.array([[1.0, 4.0, 2.0], [3.0, 0.5, 0.0]])
        cfg = ObjectiveConfig(
            mode=AggregationMode.MAX,
            weight=WeightSpec(),
            density=PriorityDensity.point_mass((1, 3), 0, 1),
            M=ObjectiveService.compute_M(fields, AggregationMode.MAX),
        )
        assert ObjectiveService.S_eval([0, 1], fields, cfg) == pytest.approx(math.log1p(4.0))
        assert ObjectiveService.S_eval([1], fields, cfg) == pytest.approx(math.log1p(0.5))

    def test_two_cell_uniform(self):
        """Uniform density averages the utility over cells."""
        fields = np.array([[1.0, 3.0]])
        problem = build_problem(fields)
        expected = 0.5 * (math.log(2.0) + math.log(4.0))
        assert ObjectiveService.S_eval([0], fields, problem.objective) == pytest.approx(expected)

    def test_sum_mode_adds_signals(self):
        """SUM aggregates signals before the utility."""
        fields = np.array([[1.0, 3.0], [2.0, 1.0]])
        problem = build_problem(fields, mode=AggregationMode.SUM)
        expected = 0.5 * (math.log1p(3.0) + math.log1p(4.0))
        assert ObjectiveService.S_eval([0, 1], fields, problem.objective) == pytest.approx(expected)

    def test_compute_M(self):
        """M is the largest max (MAX) or column sum (SUM)."""
        fields = np.array([[1.0, 5.0], [3.0, 2.0]])
        assert ObjectiveService.compute_M(fields, AggregationMode.MAX) == 5.0
        assert ObjectiveService.compute_M(fields, AggregationMode.SUM) == 7.0
        assert ObjectiveService.compute_M(np.zeros((0, 0)), AggregationMode.MAX) == 0.0


class TestIntegralForm:
    """S(T) as an integral of the marginal weight against the tail mass."""

    def test_empty_set_is_zero(self):
        """The integral form also gives 0 for the empty set."""
        problem = build_problem(np.array([[2.0, 1.0]]))
        assert ObjectiveService.S_integral_oracle([], problem.fields, problem.objective, 100) == 0.0

    def test_single_cell(self):
        """One cell at SNR 2 integrates to log 3."""
        problem = build_problem(np.array([[2.0]]))
        value = ObjectiveService.S_integral_oracle([0], problem.fields, problem.objective, 20000)
        assert value == pytest.approx(math.log(3.0), rel=1e-4)

    def test_error_shrinks_with_more_samples(self):
        """More κ samples give a smaller quadrature error."""
        problem = build_problem(np.array([[2.0]]))
        exact = math.log(3.0)
        errors = [
            abs(ObjectiveService.S_integral_oracle([0], problem.fields, problem.objective, n) - exact)
            for n in (500, 1000, 2000)
        ]
        assert errors[0] > errors[1] > errors[2]

    def test_custom_table_is_unsupported(self):
        """Tables have no marginal weight to integrate."""
        problem = build_problem(np.array([[2.0]]), weight=TABLE)
        with pytest.raises(UnsupportedOperationError):
            ObjectiveService.S_integral_oracle([0], problem.fields, problem.objective, 100)

    def test_sample_count_and_spacing_are_validated(self):
        """At least two samples and a known spacing are required."""
        problem = build_problem(np.array([[2.0]]))
        with pytest.raises(ScenarioValidationError):
            ObjectiveService.S_integral_oracle([0], problem.fields, problem.objective, 1)
        with pytest.raises(ScenarioValidationError):
            ObjectiveService.S_integral_oracle([0], problem.fields, problem.objective, 100, spacing="cubic")

    @pytest.mark.parametrize(
        "mode,weight",
        [(AggregationMode.MAX, LOG1P), (AggregationMode.SUM, WeightSpec(family=WeightFamily.SATURATING, c=1.0))],
    )
    def test_matches_closed_form_on_random_instances(self, mode, weight):
        """Integral and closed form agree to 1e-3 on 50 random instances."""
        rng = np.random.default_rng(31)
        for _ in range(50):
            fields = rng.uniform(0, 10, (5, 40))
            density = rng.uniform(0, 1, 40)
            problem = build_problem(fields, mode=mode, weight=weight, density=density)
            T = random_subset(rng, list(range(5))) or [0]
            closed = ObjectiveService.S_eval(T, fields, problem.objective)
            integral = ObjectiveService.S_integral_oracle(T, fields, problem.objective, 50000, "uniform")
            assert abs(integral - closed) / closed < 1e-3

    def test_geometric_grid_handles_many_decades(self, toy_problem):
        """The log-spaced κ grid copes with propagation fields."""
        T = [0, 5, 10]
        closed = ObjectiveService.S_eval(T, toy_problem.fields, toy_problem.objective)
        integral = ObjectiveService.S_integral_oracle(T, toy_problem.fields, toy_problem.objective, 100000, "geometric")
        assert abs(integral - closed) / closed < 1e-3


class TestGain:
    """Marginal gain and the incremental aggregate."""

    def test_gain_is_difference_of_S(self):
        """The gain of x is S(T ∪ {x}) minus S(T)."""
        fields = np.random.default_rng(2).uniform(0, 10, (4, 9))
        problem = build_problem(fields)
        cfg = problem.objective
        g = ObjectiveService.gain(2, [0, 3], fields, cfg)
        expected = ObjectiveService.S_eval([0, 3, 2], fields, cfg) - ObjectiveService.S_eval([0, 3], fields, cfg)
        assert g == pytest.approx(expected, abs=1e-12)

    def test_gain_from_empty_set(self):
        """The gain from nothing is S of the single site."""
        fields = np.array([[1.0, 3.0]])
        problem = build_problem(fields)
        assert ObjectiveService.gain(0, [], fields, problem.objective) == pytest.approx(
            0.5 * (math.log(2.0) + math.log(4.0))
        )

    def test_member_is_rejected(self):
        """A site already in T has no gain to report."""
        fields = np.ones((2, 3))
        problem = build_problem(fields)
        with pytest.raises(ScenarioValidationError):
            ObjectiveService.gain(1, [1], fields, problem.objective)
        state = AggregateState(fields, problem.objective, [0])
        with pytest.raises(ScenarioValidationError):
            state.add(0)

    def test_incremental_equals_from_scratch(self, toy_problem):
        """The running aggregate matches S_eval bit for bit."""
        order = [3, 12, 7, 0, 15]
        state = AggregateState(toy_problem.fields, toy_problem.objective)
        for i, index in enumerate(order):
            value = state.add(index)
            assert value == ObjectiveService.S_eval(order[: i + 1], toy_problem.fields, toy_problem.objective)
        assert 7 in state and 8 not in state

    def test_monotone_on_random_pairs(self, toy_problem):
        """S(A) ≤ S(B) for 200 random nested pairs."""
        rng = np.random.default_rng(41)
        pool = list(range(toy_problem.n_candidates))
        fields, cfg = toy_problem.fields, toy_problem.objective
        for _ in range(200):
            larger = random_subset(rng, pool)
            smaller = random_subset(rng, larger) if larger else []
            assert ObjectiveService.S_eval(smaller, fields, cfg) <= ObjectiveService.S_eval(larger, fields, cfg) + 1e-12

    @pytest.mark.parametrize("mode", [AggregationMode.MAX, AggregationMode.SUM])
    def test_diminishing_returns_on_random_triples(self, toy_problem, mode):
        """G(t given A) is at least G(t given B) for 1000 random A inside B."""
        problem = build_problem(toy_problem.fields, mode=mode)
        fields, cfg = problem.fields, problem.objective
        rng = np.random.default_rng(43)
        pool = list(range(problem.n_candidates))
        for _ in range(1000):
            t = int(rng.choice(pool))
            B = random_subset(rng, [i for i in pool if i != t])
            A = random_subset(rng, B) if B else []
            assert ObjectiveService.gain(t, A, fields, cfg) >= ObjectiveService.gain(t, B, fields, cfg) - 1e-9
