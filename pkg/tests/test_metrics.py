"""
TowerPlan - Metrics Tests
"""

import math

import numpy as np
import pytest

from towerplan.errors import ScenarioValidationError
from towerplan.models import AggregationMode, RadioConfig, Site, TransmitterSet
from towerplan.services.metrics_service import MetricsService
from towerplan.services.propagation_service import PropagationService
from towerplan.services.scene_service import SceneService

RADIO = RadioConfig()


def brute_percentile(values, q):
    ordered = sorted(values)
    position = q / 100.0 * (len(ordered) - 1)
    lower = int(math.floor(position))
    upper = min(lower + 1, len(ordered) - 1)
    return ordered[lower] + (position - lower) * (ordered[upper] - ordered[lower])


class TestPerCell:
    """Aggregation, SINR, interference and rate at one receiver."""

    def test_two_unequal_signals(self):
        """9 and 4: max 9, sum 13, SINR 9/5, interference 4."""
        powers = [9.0, 4.0]
        assert MetricsService.aggregate(powers, AggregationMode.MAX) == 9.0
        assert MetricsService.aggregate(powers, AggregationMode.SUM) == 13.0
        assert MetricsService.sinr(powers) == 1.8
        assert MetricsService.interference(powers) == 4.0

    def test_two_equal_signals(self):
        """Equal signals: SINR 5/6 and the weaker one counts as interference."""
        powers = [5.0, 5.0]
        assert MetricsService.sinr(powers) == pytest.approx(5.0 / 6.0)
        assert MetricsService.interference(powers) == 5.0

    def test_single_signal_has_no_interference(self):
        """One transmitter: SINR equals SNR."""
        assert MetricsService.interference([7.0]) == 0.0
        assert MetricsService.sinr([7.0]) == pytest.approx(7.0)

    def test_empty_set_is_rejected(self):
        """Aggregating no signals is an error."""
        with pytest.raises(ScenarioValidationError):
            MetricsService.aggregate([], AggregationMode.MAX)

    def test_shannon_rate_at_the_gap(self):
        """q = Γ gives exactly one bit per hertz."""
        assert MetricsService.shannon_rate(RADIO.gap, RADIO) == pytest.approx(RADIO.bandwidth)

    def test_shannon_rate_value(self):
        """B·log2(1 + q/Γ) at q = 1.8."""
        assert MetricsService.shannon_rate(1.8, RADIO) == pytest.approx(1e7 * math.log2(1.9))
        assert MetricsService.shannon_rate(1.8, RADIO) == pytest.approx(9.2599e6, rel=1e-4)

    def test_shannon_rate_accepts_arrays(self):
        """Rates are computed element-wise."""
        rates = MetricsService.shannon_rate(np.array([0.0, 2.0, 6.0]), RADIO)
        assert np.allclose(rates, [0.0, 1e7, 2e7])

    def test_percentile_matches_order_statistics(self):
        """Linear percentile agrees with a sorted-list interpolation."""
        rng = np.random.default_rng(21)
        for size in (1, 2, 7, 400):
            values = rng.uniform(0, 100, size)
            for q in (0, 5, 50, 95, 100):
                assert MetricsService.percentile(values, q) == pytest.approx(brute_percentile(values, q))


class TestRasters:
    """Whole-grid quantities."""

    def test_sinr_never_exceeds_strongest_snr(self):
        """Interference only lowers SINR below the best SNR."""
        fields = np.random.default_rng(5).uniform(0, 50, (4, 30))
        sinr = MetricsService.sinr_raster([0, 1, 2, 3], fields)
        assert np.all(sinr <= fields.max(axis=0))

    def test_interference_scales_linearly(self):
        """Scaling every field scales the interference raster."""
        fields = np.random.default_rng(6).uniform(0, 50, (3, 25))
        base = MetricsService.interference_raster([0, 1, 2], fields)
        scaled = MetricsService.interference_raster([0, 1, 2], 1.5 * fields)
        assert np.allclose(scaled, 1.5 * base, rtol=1e-12)

    def test_transmitter_set_members_include_fixed_sites(self):
        """Fixed sites take part in aggregation."""
        fields = np.array([[1.0, 2.0], [3.0, 0.5], [0.2, 0.1]])
        T = TransmitterSet(selected=[2], fixed=[0])
        assert np.array_equal(MetricsService.aggregate_raster(T, fields, AggregationMode.MAX), [1.0, 2.0])
        assert np.allclose(MetricsService.aggregate_raster(T, fields, AggregationMode.SUM), [1.2, 2.1])

    def test_rate_uses_sinr_under_max_and_total_under_sum(self):
        """MAX rates use SINR, SUM rates use the summed SNR."""
        fields = np.array([[9.0], [4.0]])
        rate_max = MetricsService.rate_raster([0, 1], fields, RADIO, AggregationMode.MAX)
        rate_sum = MetricsService.rate_raster([0, 1], fields, RADIO, AggregationMode.SUM)
        assert rate_max[0] == pytest.approx(MetricsService.shannon_rate(1.8, RADIO))
        assert rate_sum[0] == pytest.approx(MetricsService.shannon_rate(13.0, RADIO))


class TestReport:
    """Seven-statistic reports."""

    def test_uniform_rate(self):
        """A flat field has zero spread and equal mean, max and edge rate."""
        fields = np.full((1, 16), 2.0)
        report = MetricsService.report([0], fields, RADIO, AggregationMode.MAX)
        assert report.mean_rate == pytest.approx(MetricsService.shannon_rate(2.0, RADIO))
        assert report.std_rate == pytest.approx(0.0, abs=1e-6)
        assert report.max_rate == pytest.approx(report.mean_rate)
        assert report.edge_rate_p5 == pytest.approx(report.mean_rate)
        assert report.mean_interf == 0.0 and report.max_interf == 0.0

    def test_two_islands(self):
        """Half the cells at rate a, half at b > a."""
        a, b = 1e6, 5e6
        rate = np.array([a] * 10 + [b] * 10)
        report = MetricsService.report_from_rasters(AggregationMode.MAX, rate)
        assert report.mean_rate == pytest.approx((a + b) / 2)
        assert report.std_rate == pytest.approx((b - a) / 2)
        assert report.max_rate == b
        assert report.edge_rate_p5 == a
        assert report.mean_interf is None

    def test_interference_is_reported_in_nanowatts(self):
        """Normalized interference is converted back through the noise floor."""
        fields = np.array([[9.0], [4.0]])
        report = MetricsService.report([0, 1], fields, RADIO, AggregationMode.MAX)
        assert report.mean_interf == pytest.approx(4.0 * RADIO.noise_power_w * 1e9)
        assert RADIO.noise_floor_dbm == pytest.approx(-104.0)

    def test_sum_mode_has_no_interference_block(self):
        """SUM reports leave the interference statistics empty."""
        fields = np.random.default_rng(8).uniform(0, 10, (3, 12))
        report = MetricsService.report([0, 2], fields, RADIO, AggregationMode.SUM)
        assert report.mean_interf is None and report.std_interf is None and report.max_interf is None
        assert report.interference_raster is None

    def test_statistics_leave_out_rasters(self):
        """statistics() holds exactly the seven scalar entries."""
        fields = np.ones((1, 4))
        stats = MetricsService.report([0], fields, RADIO, AggregationMode.MAX).statistics()
        assert set(stats) == {
            "mean_rate", "std_rate", "max_rate", "edge_rate_p5", "mean_interf", "std_interf", "max_interf"
        }

    def test_empty_set_is_rejected(self):
        """A report needs at least one transmitter."""
        with pytest.raises(ScenarioValidationError):
            MetricsService.report([], np.ones((1, 4)), RADIO, AggregationMode.MAX)


class TestReceiverHeights:
    """Averaging over several receiver heights."""

    def test_combined_raster_is_the_cell_mean(self):
        """Height rasters are averaged cell by cell."""
        r1 = np.array([[1.0, 3.0]])
        r2 = np.array([[3.0, 7.0]])
        assert np.array_equal(MetricsService.combine_height_rasters([r1, r2]), [[2.0, 5.0]])

    def test_no_heights_is_rejected(self):
        """An empty height list is an error."""
        with pytest.raises(ScenarioValidationError):
            MetricsService.combine_height_rasters([])

    def test_single_height_matches_plain_report(self, toy_scenario):
        """One height at the grid height reproduces the plain report."""
        scene = toy_scenario.scene
        grid = SceneService.make_grid(scene)
        sites = [Site(x=25.0, y=25.0, z=20.0), Site(x=175.0, y=125.0, z=20.0)]
        fields = PropagationService.stack(PropagationService.field_matrix(sites, scene, grid, toy_scenario.radio))
        plain = MetricsService.report([0, 1], fields, toy_scenario.radio, AggregationMode.MAX, grid=grid)
        stacked = MetricsService.multi_height_report(
            [grid.height], sites, scene, toy_scenario.radio, AggregationMode.MAX
        )
        assert stacked.mean_rate == pytest.approx(plain.mean_rate, rel=1e-12)
        assert stacked.edge_rate_p5 == pytest.approx(plain.edge_rate_p5, rel=1e-12)
        assert stacked.max_interf == pytest.approx(plain.max_interf, rel=1e-12)

    def test_repeated_height_changes_nothing(self, toy_scenario):
        """Listing a height twice leaves the average unchanged."""
        scene = toy_scenario.scene
        sites = [Site(x=75.0, y=75.0, z=20.0)]
        once = MetricsService.multi_height_report([5.0], sites, scene, toy_scenario.radio, AggregationMode.MAX)
        twice = MetricsService.multi_height_report([5.0, 5.0], sites, scene, toy_scenario.radio, AggregationMode.MAX)
        assert twice.mean_rate == pytest.approx(once.mean_rate, rel=1e-12)
        assert twice.rate_raster.shape == (20, 20)
