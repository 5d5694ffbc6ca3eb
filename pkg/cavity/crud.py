# cavity/crud.py
from typing import List, Optional

from sqlalchemy.orm import Session

from cavity import models
from cavity.schemas import ExperimentConfig


# ---------- RUN REGISTRY ----------
def create_run(db: Session, cfg: ExperimentConfig, manifest_hash: str) -> models.Run:
    run = models.Run(
        experiment=cfg.experiment,
        manifest_hash=manifest_hash,
        seed=str(cfg.seed),
        config_json=cfg.model_dump_json(),
        status="running",
        out_dir=cfg.out_dir,
    )
    db.add(run)
    db.commit()
    db.refresh(run)
    return run


def finish_run(db: Session, run_id: int, exit_code: int, message: Optional[str] = None) -> Optional[models.Run]:
    run = get_run(db, run_id)
    if not run:
        return None
    run.status = "ok" if exit_code == 0 else "failed"
    run.exit_code = exit_code
    run.message = message
    db.commit()
    db.refresh(run)
    return run


def get_run(db: Session, run_id: int) -> Optional[models.Run]:
    return db.query(models.Run).filter(models.Run.id == run_id).first()


# list / query helpers
def list_runs(db: Session, skip: int = 0, limit: int = 100, experiment: Optional[str] = None) -> List[models.Run]:
    query = db.query(models.Run)
    if experiment:
        query = query.filter(models.Run.experiment == experiment)
    return query.order_by(models.Run.id).offset(skip).limit(limit).all()


def runs_by_hash(db: Session, manifest_hash: str) -> List[models.Run]:
    return db.query(models.Run).filter(models.Run.manifest_hash == manifest_hash).order_by(models.Run.id).all()
