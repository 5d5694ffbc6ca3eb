# cavity/config.py
import os
from contextlib import contextmanager
from typing import Dict, Iterator

from dotenv import load_dotenv

load_dotenv()

CAP_VARIABLES = {
    "enumeration": "CAVITY_ENUM_CAP",
    "kernel": "CAVITY_KERNEL_CAP",
    "quadruples": "CAVITY_QUAD_CAP",
    "bnb_nodes": "CAVITY_BNB_NODES",
}


def database_url() -> str:
    return os.environ.get("CAVITY_DATABASE_URL", "sqlite:///./cavity_runs.db")


def log_level() -> str:
    return os.environ.get("CAVITY_LOG_LEVEL", "INFO").upper()


def runs_dir() -> str:
    """Base directory for outputs of runs started over HTTP."""
    return os.environ.get("CAVITY_RUNS_DIR", "./runs")


def thread_count() -> int:
    raw = os.environ.get("CAVITY_THREADS", "")
    if raw.strip():
        return max(1, int(raw))
    return os.cpu_count() or 1


def _int_setting(name: str, default: int) -> int:
    raw = os.environ.get(name, "")
    return int(float(raw)) if raw.strip() else default


# budget caps; read at call time so a test or a .env can move them
def enumeration_cap() -> int:
    return _int_setting("CAVITY_ENUM_CAP", 200_000)


def kernel_cap() -> int:
    return _int_setting("CAVITY_KERNEL_CAP", 2_000)


def quadruple_cap() -> int:
    return _int_setting("CAVITY_QUAD_CAP", 4_000_000)


def bnb_node_cap() -> int:
    return _int_setting("CAVITY_BNB_NODES", 5_000_000)


@contextmanager
def budget_overrides(caps: Dict[str, int]) -> Iterator[None]:
    """Temporarily set the cap variables named by ``caps`` keys (enumeration, kernel, ...)."""
    saved = {}
    try:
        for key, value in caps.items():
            name = CAP_VARIABLES[key]
            saved[name] = os.environ.get(name)
            os.environ[name] = str(int(value))
        yield
    finally:
        for name, old in saved.items():
            if old is None:
                os.environ.pop(name, None)
            else:
                os.environ[name] = old
