"""
TowerPlan - Metrics Service
Network-level quantities over a transmitter set: aggregated signal
(strongest server or total power), SINR, interference, Shannon rate and the
statistical reports built from them.

Fields are passed as an |X| × cells matrix of linear SNR; a transmitter set
is a list of row indices into it.
"""

import logging
from typing import List, Optional, Sequence, Union

import numpy as np

from towerplan.errors import ScenarioValidationError
from towerplan.models import AggregationMode, MetricsReport, RadioConfig, Scene, Site, TransmitterSet
from towerplan.services.propagation_service import PropagationService
from towerplan.services.scene_service import ReceiverGrid, SceneService

logger = logging.getLogger(__name__)

EDGE_PERCENTILE = 5.0
NANOWATTS_PER_WATT = 1e9

Members = Union[TransmitterSet, Sequence[int]]


def _members(T: Members) -> List[int]:
    members = T.members if isinstance(T, TransmitterSet) else [int(i) for i in T]
    if not members:
        raise ScenarioValidationError("transmitter set is empty")
    return members


class MetricsService:
    """Aggregation, SINR and rate statistics."""

    # ============================================================
    # Per-cell operations
    # ============================================================

    @classmethod
    def aggregate(cls, powers: Sequence[float], mode: AggregationMode) -> float:
        """Aggregated SNR at one cell from the powers of every member of T."""
        values = np.asarray(powers, dtype=float)
        if values.size == 0:
            raise ScenarioValidationError("transmitter set is empty")
        return float(values.max() if mode == AggregationMode.MAX else values.sum())

    @classmethod
    def sinr(cls, powers: Sequence[float], noise_power: float = 1.0) -> float:
        """Serving power over interference plus noise."""
        strongest = cls.aggregate(powers, AggregationMode.MAX)
        total = cls.aggregate(powers, AggregationMode.SUM)
        return strongest / (total - strongest + noise_power)

    @classmethod
    def interference(cls, powers: Sequence[float]) -> float:
        strongest = cls.aggregate(powers, AggregationMode.MAX)
        total = cls.aggregate(powers, AggregationMode.SUM)
        return max(total - strongest, 0.0)

    @staticmethod
    def shannon_rate(q, radio: RadioConfig):
        """B · log2(1 + q/Γ) in bit/s; accepts scalars or arrays."""
        rate = radio.bandwidth * np.log2(1.0 + np.asarray(q, dtype=float) / radio.gap)
        return float(rate) if np.ndim(rate) == 0 else rate

    @staticmethod
    def percentile(values: np.ndarray, q: float) -> float:
        """Inclusive percentile, linear interpolation between order statistics."""
        return float(np.percentile(np.asarray(values, dtype=float).ravel(), q, method="linear"))

    # ============================================================
    # Raster operations
    # ============================================================

    @classmethod
    def aggregate_raster(cls, T: Members, fields: np.ndarray, mode: AggregationMode) -> np.ndarray:
        rows = fields[_members(T)]
        return rows.max(axis=0) if mode == AggregationMode.MAX else rows.sum(axis=0)

    @classmethod
    def sinr_raster(cls, T: Members, fields: np.ndarray, noise_power: float = 1.0) -> np.ndarray:
        rows = fields[_members(T)]
        strongest = rows.max(axis=0)
        interference = np.maximum(rows.sum(axis=0) - strongest, 0.0)
        return strongest / (interference + noise_power)

    @classmethod
    def interference_raster(cls, T: Members, fields: np.ndarray) -> np.ndarray:
        """sum − max per cell, in the normalized (SNR) domain."""
        rows = fields[_members(T)]
        return np.maximum(rows.sum(axis=0) - rows.max(axis=0), 0.0)

    @classmethod
    def rate_raster(cls, T: Members, fields: np.ndarray, radio: RadioConfig, mode: AggregationMode) -> np.ndarray:
        if mode == AggregationMode.MAX:
            q = cls.sinr_raster(T, fields, radio.noise_power)
        else:
            q = cls.aggregate_raster(T, fields, AggregationMode.SUM)
        return cls.shannon_rate(q, radio)

    # ============================================================
    # Reports
    # ============================================================

    @classmethod
    def report_from_rasters(
        cls,
        mode: AggregationMode,
        rate: np.ndarray,
        interference_nw: Optional[np.ndarray] = None,
    ) -> MetricsReport:
        """Statistics over all cells of a rate raster (and optional interference raster in nW)."""
        rate = np.asarray(rate, dtype=float)
        report = MetricsReport(
            mode=mode,
            mean_rate=float(rate.mean()),
            std_rate=float(rate.std()),
            max_rate=float(rate.max()),
            edge_rate_p5=cls.percentile(rate, EDGE_PERCENTILE),
            rate_raster=rate,
        )
        if interference_nw is not None:
            interference_nw = np.asarray(interference_nw, dtype=float)
            report.mean_interf = float(interference_nw.mean())
            report.std_interf = float(interference_nw.std())
            report.max_interf = float(interference_nw.max())
            report.interference_raster = interference_nw
        return report

    @classmethod
    def report(
        cls,
        T: Members,
        fields: np.ndarray,
        radio: RadioConfig,
        mode: AggregationMode,
        grid: Optional[ReceiverGrid] = None,
    ) -> MetricsReport:
        """
        Seven-statistic report for T. Under SUM aggregation every signal is
        treated as useful and no interference block is produced.
        """
        members = _members(T)
        rate = cls.rate_raster(members, fields, radio, mode)
        interference_nw = None
        if mode == AggregationMode.MAX:
            interference_nw = cls.interference_raster(members, fields) * radio.noise_power_w * NANOWATTS_PER_WATT
        if grid is not None:
            rate = rate.reshape(grid.shape)
            if interference_nw is not None:
                interference_nw = interference_nw.reshape(grid.shape)
        return cls.report_from_rasters(mode, rate, interference_nw)

    @staticmethod
    def combine_height_rasters(rasters: Sequence[np.ndarray]) -> np.ndarray:
        """Cell-wise mean of same-shaped rasters."""
        if not rasters:
            raise ScenarioValidationError("at least one receiver height is required")
        return np.mean(np.stack([np.asarray(r, dtype=float) for r in rasters]), axis=0)

    @classmethod
    def multi_height_report(
        cls,
        heights: Sequence[float],
        sites: Sequence[Site],
        scene: Scene,
        radio: RadioConfig,
        mode: AggregationMode,
        cache=None,
        workers: Optional[int] = None,
    ) -> MetricsReport:
        """Recompute fields per receiver height, average the rasters, then summarize."""
        if not heights:
            raise ScenarioValidationError("at least one receiver height is required")
        if not sites:
            raise ScenarioValidationError("transmitter set is empty")

        members = list(range(len(sites)))
        rates, interferences = [], []
        for height in heights:
            scene_h = scene.with_receiver_height(height)
            grid_h = SceneService.make_grid(scene_h)
            fields = PropagationService.stack(
                PropagationService.field_matrix(sites, scene_h, grid_h, radio, cache=cache, workers=workers)
            )
            report = cls.report(members, fields, radio, mode, grid=grid_h)
            rates.append(report.rate_raster)
            if report.interference_raster is not None:
                interferences.append(report.interference_raster)
            logger.debug(f"Receiver height {height} m: mean rate {report.mean_rate / 1e6:.3f} Mbit/s")

        return cls.report_from_rasters(
            mode,
            cls.combine_height_rasters(rates),
            cls.combine_height_rasters(interferences) if interferences else None,
        )


# Convenience functions
def sinr(powers: Sequence[float]) -> float:
    return MetricsService.sinr(powers)


def shannon_rate(q, radio: RadioConfig):
    return MetricsService.shannon_rate(q, radio)


def report(T: Members, fields: np.ndarray, radio: RadioConfig, mode: AggregationMode) -> MetricsReport:
    return MetricsService.report(T, fields, radio, mode)
