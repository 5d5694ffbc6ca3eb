# cavity/models.py
from datetime import datetime, timezone

from sqlalchemy import Column, DateTime, Integer, String, Text

from cavity.db import Base


def _now():
    return datetime.now(timezone.utc)


class Run(Base):
    __tablename__ = "runs"
    id = Column(Integer, primary_key=True, index=True)
    experiment = Column(String, index=True, nullable=False)
    manifest_hash = Column(String, index=True, nullable=False)
    # text: seeds are unsigned 64-bit and sqlite integers are signed
    seed = Column(String, nullable=False)
    config_json = Column(Text, nullable=False)
    status = Column(String, default="running")
    exit_code = Column(Integer, default=0)
    out_dir = Column(String, nullable=False)
    message = Column(Text, nullable=True)
    created_at = Column(DateTime(timezone=True), default=_now)

    @property
    def finished(self) -> bool:
        return self.status in ("ok", "failed")
