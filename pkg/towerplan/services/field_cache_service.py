"""
TowerPlan - Field Cache Service
Persistent on-disk cache of propagation fields, indexed in SQLite.

Each field is stored once per (scene hash, radio hash, site) in the binary
field exchange format; a cache hit returns the stored bytes unchanged.
"""

import hashlib
import logging
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from sqlalchemy.exc import IntegrityError, SQLAlchemyError

from towerplan.config import settings
from towerplan.database import FieldIndexDB, get_db, get_session_factory, init_db
from towerplan.errors import FieldIOError
from towerplan.models import RadioConfig, Scene, Site
from towerplan.services.field_io_service import FieldIOService
from towerplan.services.propagation_service import PowerField, PropagationService
from towerplan.services.scene_service import ReceiverGrid

logger = logging.getLogger(__name__)


@dataclass
class CacheStats:
    hits: int = 0
    misses: int = 0
    writes: int = 0


class FieldCache:
    """
    Cache-backed field provider.

    Index reads and writes go through a single lock; field computation for
    a miss happens outside it so workers can compute in parallel.
    """

    def __init__(self, directory: Union[str, Path, None] = None):
        self.directory = Path(directory or settings.cache_dir)
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
            init_db(str(self.directory))
        except (OSError, SQLAlchemyError) as e:
            raise FieldIOError(f"cannot open field cache: {e}", self.directory) from e
        self._session_factory = get_session_factory(str(self.directory))
        self._lock = threading.Lock()
        self.stats = CacheStats()

    @contextmanager
    def _session(self):
        gen = get_db(self._session_factory)
        db = next(gen)
        try:
            yield db
        finally:
            gen.close()

    @staticmethod
    def file_name(scene_hash: str, radio_hash: str, site: Site) -> str:
        digest = hashlib.sha256(f"{scene_hash}|{radio_hash}|{site.key}".encode("utf-8")).hexdigest()
        return f"{digest[:32]}.field"

    def lookup(self, scene_hash: str, radio_hash: str, site: Site, grid: ReceiverGrid) -> Optional[np.ndarray]:
        with self._lock:
            try:
                with self._session() as db:
                    row = (
                        db.query(FieldIndexDB)
                        .filter(
                            FieldIndexDB.scene_hash == scene_hash,
                            FieldIndexDB.radio_hash == radio_hash,
                            FieldIndexDB.site_key == site.key,
                        )
                        .first()
                    )
                    file_name = row.file_name if row else None
            except SQLAlchemyError as e:
                raise FieldIOError(f"field cache index lookup failed: {e}", self.directory) from e
        if file_name is None:
            return None
        path = self.directory / file_name
        if not path.exists():
            logger.warning(f"⚠️ Cache index points at missing file {path}; recomputing")
            return None
        file_grid, values = FieldIOService.read_binary(path)
        if not file_grid.matches(grid):
            logger.warning(f"⚠️ Cached field {path} was stored for another grid; recomputing")
            return None
        return values

    def store(self, scene_hash: str, radio_hash: str, site: Site, field: PowerField) -> None:
        name = self.file_name(scene_hash, radio_hash, site)
        FieldIOService.write_binary(self.directory / name, field.grid, field.values)
        with self._lock:
            try:
                with self._session() as db:
                    exists = (
                        db.query(FieldIndexDB)
                        .filter(
                            FieldIndexDB.scene_hash == scene_hash,
                            FieldIndexDB.radio_hash == radio_hash,
                            FieldIndexDB.site_key == site.key,
                        )
                        .first()
                    )
                    if exists is None:
                        db.add(FieldIndexDB(
                            scene_hash=scene_hash,
                            radio_hash=radio_hash,
                            site_key=site.key,
                            file_name=name,
                            rows=field.grid.rows,
                            cols=field.grid.cols,
                        ))
                        db.commit()
            except IntegrityError:
                pass  # stored concurrently under the same key
            except SQLAlchemyError as e:
                raise FieldIOError(f"field cache index update failed: {e}", self.directory) from e
            self.stats.writes += 1

    def get_or_compute(self, site: Site, scene: Scene, grid: ReceiverGrid, radio: RadioConfig) -> PowerField:
        scene_hash = scene.digest()
        radio_hash = radio.digest()
        values = self.lookup(scene_hash, radio_hash, site, grid)
        if values is not None:
            with self._lock:
                self.stats.hits += 1
            return PowerField(site=site, grid=grid, values=values)

        field = PropagationService.compute_field(site, scene, grid, radio)
        with self._lock:
            self.stats.misses += 1
        self.store(scene_hash, radio_hash, site, field)
        return field

    def entry_count(self) -> int:
        with self._lock, self._session() as db:
            return db.query(FieldIndexDB).count()
