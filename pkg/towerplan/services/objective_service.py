"""
TowerPlan - Objective Service
Aggregated network quality S(T) = Σ_y f(y) · W̄(P(y, T)) and the marginal
gain G(x|T) = S(T ∪ {x}) − S(T).

The aggregate raster P(·, T) is always folded in member order (fixed sites
first, then the selection order) so incremental and from-scratch evaluation
produce the same floating-point values.
"""

import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from towerplan.errors import ScenarioValidationError, UnsupportedOperationError
from towerplan.models import (
    AggregationMode,
    DensityKind,
    ObjectiveSpec,
    PrioritySpec,
    Scene,
    WeightFamily,
    WeightSpec,
)
from towerplan.services.field_io_service import FieldIOService
from towerplan.services.scene_service import ReceiverGrid, SceneService

logger = logging.getLogger(__name__)

DENSITY_TOLERANCE = 1e-12
GEOMETRIC_KAPPA_FLOOR = 1e-15  # lowest geometric κ sample, relative to M


@dataclass(frozen=True)
class PriorityDensity:
    """Spatial priority weights over the receiver grid, summing to 1."""
    weights: np.ndarray  # rows × cols

    def __post_init__(self):
        w = self.weights
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ScenarioValidationError("priority density must be finite and non-negative")
        if abs(float(w.sum()) - 1.0) > DENSITY_TOLERANCE:
            raise ScenarioValidationError(f"priority density sums to {float(w.sum())!r}, expected 1")

    @property
    def flat(self) -> np.ndarray:
        return self.weights.ravel()

    @classmethod
    def normalized(cls, raw: np.ndarray) -> "PriorityDensity":
        raw = np.asarray(raw, dtype=float)
        total = float(raw.sum())
        if not total > 0:
            raise ScenarioValidationError("priority density has zero total mass")
        return cls(weights=raw / total)

    @classmethod
    def point_mass(cls, shape, row: int, col: int) -> "PriorityDensity":
        weights = np.zeros(shape)
        weights[row, col] = 1.0
        return cls(weights=weights)


@dataclass
class ObjectiveConfig:
    """Aggregation mode, utility and density for S(T); M bounds the aggregate SNR."""
    mode: AggregationMode
    weight: WeightSpec
    density: PriorityDensity
    M: float
    clamped: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def record_clamps(self, count: int) -> None:
        if count:
            with self._lock:
                self.clamped += count


class ObjectiveService:
    """Utility family, density construction and the S / G evaluators."""

    # ============================================================
    # Utility antiderivative W̄ and marginal weight w
    # ============================================================

    @classmethod
    def wbar(cls, spec: WeightSpec, x, M: Optional[float] = None, cfg: Optional[ObjectiveConfig] = None):
        """
        W̄(x) for scalar or array x ≥ 0. When M is known, values above M are
        clamped to M and counted on cfg.
        """
        values = np.asarray(x, dtype=float)
        if M is not None:
            over = values > M * (1.0 + 1e-12)
            if over.any():
                if cfg is not None:
                    cfg.record_clamps(int(over.sum()))
                values = np.minimum(values, M)

        if spec.family == WeightFamily.LOG1P:
            out = np.log1p(values)
        elif spec.family == WeightFamily.SATURATING:
            out = values / (values + spec.c)
        else:
            knots = np.asarray(spec.table, dtype=float)
            out = np.interp(values, knots[:, 0], knots[:, 1])
        return float(out) if np.ndim(out) == 0 else out

    @classmethod
    def marginal_weight(cls, spec: WeightSpec, kappa):
        """w = dW̄/dκ in closed form."""
        kappa = np.asarray(kappa, dtype=float)
        if spec.family == WeightFamily.LOG1P:
            return 1.0 / (1.0 + kappa)
        if spec.family == WeightFamily.SATURATING:
            return spec.c / (kappa + spec.c) ** 2
        raise UnsupportedOperationError("custom_table weight has no closed-form marginal weight")

    # ============================================================
    # Problem data
    # ============================================================

    @staticmethod
    def compute_M(fields: np.ndarray, mode: AggregationMode) -> float:
        """Upper bound of the aggregate SNR over every cell and every subset of candidates."""
        if fields.size == 0:
            return 0.0
        if mode == AggregationMode.SUM:
            return float(fields.sum(axis=0).max())
        return float(fields.max())

    @classmethod
    def build_density(
        cls,
        scene: Scene,
        grid: ReceiverGrid,
        spec: PrioritySpec,
        base_dir: Optional[str] = None,
    ) -> PriorityDensity:
        """Density from the priority section; building interiors get zero weight except for rasters."""
        if spec.kind == DensityKind.RASTER:
            path = Path(spec.raster_path)
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            return PriorityDensity.normalized(FieldIOService.read_for_grid(path, grid))

        indoor = SceneService.indoor_mask(scene, grid)
        if spec.kind == DensityKind.UNIFORM:
            raw = np.ones(grid.shape)
        else:
            xs, ys = grid.centers()
            raw = np.full(grid.shape, spec.floor)
            for spot in spec.hotspots:
                cx, cy = spot.center
                r2 = (xs - cx) ** 2 + (ys - cy) ** 2
                raw += spot.weight * np.exp(-r2 / (2.0 * spot.sigma ** 2))
        raw[indoor] = 0.0
        return PriorityDensity.normalized(raw)

    @classmethod
    def make_config(cls, spec: ObjectiveSpec, density: PriorityDensity, fields: np.ndarray) -> ObjectiveConfig:
        if fields.size and fields.shape[1] != density.flat.size:
            raise ScenarioValidationError("priority density grid does not match the field grid")
        return ObjectiveConfig(
            mode=spec.mode,
            weight=spec.weight,
            density=density,
            M=cls.compute_M(fields, spec.mode),
        )

    # ============================================================
    # S(T) and G(x|T)
    # ============================================================

    @staticmethod
    def fold(agg: np.ndarray, row: np.ndarray, mode: AggregationMode) -> np.ndarray:
        return np.maximum(agg, row) if mode == AggregationMode.MAX else agg + row

    @classmethod
    def aggregate(cls, T: Sequence[int], fields: np.ndarray, mode: AggregationMode) -> np.ndarray:
        """P(·, T) over all cells; zeros for the empty set."""
        agg = np.zeros(fields.shape[1])
        for index in T:
            agg = cls.fold(agg, fields[index], mode)
        return agg

    @classmethod
    def value_of(cls, agg: np.ndarray, cfg: ObjectiveConfig) -> float:
        return float(np.sum(cfg.density.flat * cls.wbar(cfg.weight, agg, cfg.M, cfg)))

    @classmethod
    def S_eval(cls, T: Sequence[int], fields: np.ndarray, cfg: ObjectiveConfig) -> float:
        """Closed-form expectation of W̄ under the priority density."""
        return cls.value_of(cls.aggregate(T, fields, cfg.mode), cfg)

    @classmethod
    def S_integral_oracle(
        cls,
        T: Sequence[int],
        fields: np.ndarray,
        cfg: ObjectiveConfig,
        kappa_samples: int,
        spacing: str = "uniform",
    ) -> float:
        """
        S(T) as ∫₀ᴹ w(κ) · mass{y : P(y, T) > κ} dκ, trapezoid rule.

        "uniform" samples κ evenly on [0, M]; "geometric" uses 0 followed by
        a log-spaced grid on [1e-15·M, M] for fields spanning many decades.
        """
        if cfg.weight.family == WeightFamily.CUSTOM_TABLE:
            raise UnsupportedOperationError("integral oracle needs a closed-form marginal weight")
        if kappa_samples < 2:
            raise ScenarioValidationError("kappa_samples must be at least 2")
        M = cfg.M
        if not M > 0 or not list(T):
            return 0.0

        if spacing == "uniform":
            kappas = np.linspace(0.0, M, kappa_samples)
        elif spacing == "geometric":
            kappas = np.concatenate([[0.0], np.geomspace(M * GEOMETRIC_KAPPA_FLOOR, M, kappa_samples - 1)])
        else:
            raise ScenarioValidationError(f"unknown kappa spacing '{spacing}'")

        agg = np.minimum(cls.aggregate(T, fields, cfg.mode), M)
        order = np.argsort(agg, kind="stable")
        sorted_agg = agg[order]
        tail_mass = np.concatenate([np.cumsum(cfg.density.flat[order][::-1])[::-1], [0.0]])
        mass = tail_mass[np.searchsorted(sorted_agg, kappas, side="right")]

        integrand = cls.marginal_weight(cfg.weight, kappas) * mass
        return float(np.sum(np.diff(kappas) * (integrand[1:] + integrand[:-1]) * 0.5))

    @classmethod
    def gain(cls, x: int, T: Sequence[int], fields: np.ndarray, cfg: ObjectiveConfig) -> float:
        """G(x|T) from the aggregate raster of T updated with the field of x."""
        members = list(T)
        if x in members:
            raise ScenarioValidationError(f"candidate {x} is already in the transmitter set")
        return AggregateState(fields, cfg, members).gain(x)


class AggregateState:
    """
    Aggregate raster of the current transmitter set with its S value.

    gain() only reads the frozen raster, so gains for distinct candidates
    may be evaluated concurrently; add() is the single-writer update.
    """

    def __init__(self, fields: np.ndarray, cfg: ObjectiveConfig, members: Sequence[int] = ()):
        self.fields = fields
        self.cfg = cfg
        self.members: List[int] = []
        self.agg = np.zeros(fields.shape[1])
        for index in members:
            self.add(index)
        self.value = ObjectiveService.value_of(self.agg, cfg)

    def __contains__(self, index: int) -> bool:
        return index in self.members

    def with_site(self, index: int) -> np.ndarray:
        return ObjectiveService.fold(self.agg, self.fields[index], self.cfg.mode)

    def gain(self, index: int) -> float:
        return ObjectiveService.value_of(self.with_site(index), self.cfg) - self.value

    def add(self, index: int) -> float:
        """Append a site and return the new S value."""
        if index in self.members:
            raise ScenarioValidationError(f"candidate {index} is already in the transmitter set")
        self.agg = self.with_site(index)
        self.members.append(index)
        self.value = ObjectiveService.value_of(self.agg, self.cfg)
        return self.value


# Convenience functions
def wbar(spec: WeightSpec, x):
    return ObjectiveService.wbar(spec, x)


def S_eval(T: Sequence[int], fields: np.ndarray, cfg: ObjectiveConfig) -> float:
    return ObjectiveService.S_eval(T, fields, cfg)


def gain(x: int, T: Sequence[int], fields: np.ndarray, cfg: ObjectiveConfig) -> float:
    return ObjectiveService.gain(x, T, fields, cfg)
