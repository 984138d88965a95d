"""
TowerPlan - Field Cache Index
SQLAlchemy + SQLite table mapping (scene hash, radio hash, site) to field files
"""

from datetime import datetime
from functools import lru_cache
from pathlib import Path

from sqlalchemy import Column, DateTime, Integer, String, UniqueConstraint, create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import declarative_base, sessionmaker

INDEX_FILE_NAME = "index.sqlite"

# Base class for models
Base = declarative_base()


# ============================================================
# Database Models (SQLAlchemy ORM)
# ============================================================

class FieldIndexDB(Base):
    """One cached propagation field"""
    __tablename__ = "field_cache_index"
    __table_args__ = (UniqueConstraint("scene_hash", "radio_hash", "site_key", name="uq_field_key"),)

    id = Column(Integer, primary_key=True, index=True)
    scene_hash = Column(String(64), nullable=False, index=True)
    radio_hash = Column(String(64), nullable=False)
    site_key = Column(String(200), nullable=False)
    file_name = Column(String(255), nullable=False)
    rows = Column(Integer, nullable=False)
    cols = Column(Integer, nullable=False)
    created_at = Column(DateTime, default=datetime.utcnow)


# ============================================================
# Database Utilities
# ============================================================

@lru_cache(maxsize=None)
def get_engine(cache_dir: str) -> Engine:
    """Engine for the index of one cache directory (created on first use)."""
    path = Path(cache_dir) / INDEX_FILE_NAME
    return create_engine(f"sqlite:///{path}", connect_args={"check_same_thread": False})


def get_session_factory(cache_dir: str) -> sessionmaker:
    return sessionmaker(autocommit=False, autoflush=False, bind=get_engine(cache_dir))


def init_db(cache_dir: str) -> None:
    """Create the index table if it does not exist."""
    Base.metadata.create_all(bind=get_engine(cache_dir))


def get_db(session_factory: sessionmaker):
    """
    Yield a session and make sure it is closed after use.
    """
    db = session_factory()
    try:
        yield db
    finally:
        db.close()
