# cavity/db.py
from typing import Optional

from sqlalchemy import create_engine
from sqlalchemy.orm import declarative_base, sessionmaker

from cavity import config


def make_engine(url: Optional[str] = None):
    url = url or config.database_url()
    # sqlite connections are shared with the worker threads of the service
    connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
    return create_engine(url, connect_args=connect_args)


engine = make_engine()
SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)
Base = declarative_base()


def init_db(bind=None):
    Base.metadata.create_all(bind=bind or engine)
