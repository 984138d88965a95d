"""
TowerPlan - Propagation Service
Free-space path gain with through-material absorption, evaluated by casting
straight segments from a transmitter against extruded building footprints.

Values are linear SNR: received power divided by the thermal noise floor,
so the noise power is 1 in these units.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import shapely

from towerplan.config import settings
from towerplan.errors import GridMismatchError
from towerplan.models import RadioConfig, Scene, Site
from towerplan.services.field_io_service import FieldIOService
from towerplan.services.scene_service import CandidateSet, ReceiverGrid

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0  # m/s
LINESTRING_TYPE_ID = 1


def db_to_linear(value_db):
    return np.power(10.0, np.asarray(value_db, dtype=float) / 10.0)


def linear_to_db(value):
    return 10.0 * np.log10(np.asarray(value, dtype=float))


@dataclass(frozen=True)
class PowerField:
    """SNR of one transmitter over the receiver grid."""
    site: Site
    grid: ReceiverGrid
    values: np.ndarray  # rows × cols, linear SNR

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()


class PropagationService:
    """
    Deterministic ray-cast propagation model.

    SNR = P_tx · (c / (4π f d))² · 10^(−A/10) / N, with d clamped below at
    min_distance and A the absorption (dB) accumulated along the segment.
    """

    @classmethod
    def absorption_db(cls, site: Site, xs: np.ndarray, ys: np.ndarray, z: float, scene: Scene) -> np.ndarray:
        """
        Total absorption along each segment site → (x, y, z).

        The 2D segment is intersected with every footprint; each piece counts
        only when the 3D segment's height at the piece midpoint is below the
        roof. A piece contributes attenuation × its 3D length.
        """
        xs = np.asarray(xs, dtype=float).ravel()
        ys = np.asarray(ys, dtype=float).ravel()
        total = np.zeros(xs.size)
        if not scene.buildings:
            return total

        dx = xs - site.x
        dy = ys - site.y
        horizontal = np.hypot(dx, dy)
        valid = np.flatnonzero(horizontal > 0)
        if valid.size == 0:
            return total

        starts = np.broadcast_to([site.x, site.y], (valid.size, 2))
        ends = np.column_stack([xs[valid], ys[valid]])
        lines = shapely.linestrings(np.stack([starts, ends], axis=1))
        rise = z - site.z
        stretch = np.sqrt(horizontal[valid] ** 2 + rise ** 2) / horizontal[valid]

        for building in scene.buildings:
            mu = scene.materials.attenuation(building.material)
            if mu == 0:
                continue
            pieces = shapely.intersection(lines, building.polygon)
            parts, owner = shapely.get_parts(pieces, return_index=True)
            if parts.size == 0:
                continue
            lengths = shapely.length(parts)
            chords = (shapely.get_type_id(parts) == LINESTRING_TYPE_ID) & (lengths > 0)
            parts, owner, lengths = parts[chords], owner[chords], lengths[chords]
            if parts.size == 0:
                continue
            mid = shapely.get_coordinates(shapely.centroid(parts))
            seg = valid[owner]
            t = ((mid[:, 0] - site.x) * dx[seg] + (mid[:, 1] - site.y) * dy[seg]) / horizontal[seg] ** 2
            blocked = site.z + t * rise < building.height
            np.add.at(total, seg[blocked], mu * lengths[blocked] * stretch[owner[blocked]])
        return total

    @classmethod
    def snr_to_points(
        cls, site: Site, xs: np.ndarray, ys: np.ndarray, z: float, scene: Scene, radio: RadioConfig
    ) -> np.ndarray:
        xs = np.asarray(xs, dtype=float).ravel()
        ys = np.asarray(ys, dtype=float).ravel()
        distance = np.sqrt((xs - site.x) ** 2 + (ys - site.y) ** 2 + (z - site.z) ** 2)
        distance = np.maximum(distance, radio.min_distance)
        wavelength = SPEED_OF_LIGHT / radio.carrier_frequency
        path_gain = (wavelength / (4.0 * math.pi * distance)) ** 2
        absorption = db_to_linear(-cls.absorption_db(site, xs, ys, z, scene))
        tx_watts = 10.0 ** ((radio.tx_power_dbm - 30.0) / 10.0)
        return tx_watts * path_gain * absorption / radio.noise_power_w

    @classmethod
    def path_snr(cls, site: Site, point: Tuple[float, float, float], scene: Scene, radio: RadioConfig) -> float:
        """Linear SNR at one 3D point."""
        x, y, z = point
        return float(cls.snr_to_points(site, [x], [y], z, scene, radio)[0])

    @classmethod
    def compute_field(cls, site: Site, scene: Scene, grid: ReceiverGrid, radio: RadioConfig) -> PowerField:
        xs, ys = grid.centers()
        values = cls.snr_to_points(site, xs, ys, grid.height, scene, radio).reshape(grid.shape)
        return PowerField(site=site, grid=grid, values=values)

    @classmethod
    def import_field(cls, path: Union[str, Path], grid: ReceiverGrid, site: Optional[Site] = None) -> PowerField:
        """Load an externally computed field (e.g. from a ray tracer)."""
        values = FieldIOService.read_for_grid(path, grid)
        placeholder = site or Site(x=float("nan"), y=float("nan"), z=float("nan"))
        return PowerField(site=placeholder, grid=grid, values=values)

    @classmethod
    def export_field(cls, field: PowerField, path: Union[str, Path]) -> None:
        FieldIOService.write_text(path, field.grid, field.values)

    @classmethod
    def field_matrix(
        cls,
        candidates: Union[CandidateSet, Sequence[Site]],
        scene: Scene,
        grid: ReceiverGrid,
        radio: RadioConfig,
        cache=None,
        workers: Optional[int] = None,
    ) -> List[PowerField]:
        """One field per candidate, in candidate order, through the cache when given."""
        sites = list(candidates.sites if isinstance(candidates, CandidateSet) else candidates)
        workers = workers or settings.workers

        def _one(site: Site) -> PowerField:
            if cache is not None:
                return cache.get_or_compute(site, scene, grid, radio)
            return cls.compute_field(site, scene, grid, radio)

        if workers > 1 and len(sites) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                fields = list(pool.map(_one, sites))
        else:
            fields = [_one(site) for site in sites]

        for field in fields:
            if not field.grid.matches(grid):
                raise GridMismatchError(f"field for site {field.site.key} was computed on another grid")
        logger.debug(f"Field matrix ready: {len(fields)} fields x {grid.n_cells} cells")
        return fields

    @staticmethod
    def stack(fields: Sequence[PowerField]) -> np.ndarray:
        """|X| × cells matrix of flattened fields."""
        if not fields:
            return np.zeros((0, 0))
        return np.vstack([field.flat for field in fields])


# Convenience functions
def path_snr(site: Site, point: Tuple[float, float, float], scene: Scene, radio: RadioConfig) -> float:
    return PropagationService.path_snr(site, point, scene, radio)


def compute_field(site: Site, scene: Scene, grid: ReceiverGrid, radio: RadioConfig) -> PowerField:
    return PropagationService.compute_field(site, scene, grid, radio)


def import_field(path: Union[str, Path], grid: ReceiverGrid) -> PowerField:
    return PropagationService.import_field(path, grid)


def field_matrix(candidates, scene: Scene, grid: ReceiverGrid, radio: RadioConfig, cache=None) -> List[PowerField]:
    return PropagationService.field_matrix(candidates, scene, grid, radio, cache)
