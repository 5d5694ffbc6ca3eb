# cavity/main.py
import logging
from pathlib import Path

import numpy as np
from fastapi import Depends, FastAPI, HTTPException
from sqlalchemy.orm import Session

from cavity import config, crud, db, fermi_entropy, graph, harness, schemas, thermo
from cavity.errors import BudgetExceeded, CavityError

LOG = logging.getLogger(__name__)

app = FastAPI(title="Clique Model Dynamics API")


# dependency
def get_db():
    db_session = db.SessionLocal()
    try:
        yield db_session
    finally:
        db_session.close()


@app.on_event("startup")
def startup():
    db.init_db()


def _bad_request(exc: Exception) -> HTTPException:
    if isinstance(exc, BudgetExceeded):
        return HTTPException(status_code=413, detail=str(exc))
    return HTTPException(status_code=400, detail=str(exc))


# ---------- Graph endpoints ----------
@app.post("/graphs/", response_model=schemas.GraphOut)
def create_graph(req: schemas.GraphRequest):
    try:
        g = graph.generate_graph(req.n, req.p, req.seed)
        out = schemas.GraphOut(n=g.n, p=g.p, seed=g.seed, missing_fraction=g.missing_fraction())
        if req.with_clique:
            size, witness = graph.max_clique(g)
            out.clique_size = size
            out.witness = list(witness.vertices)
    except (ValueError, CavityError) as exc:
        raise _bad_request(exc)
    return out


@app.post("/cliques/statistics", response_model=schemas.CliqueStatsOut)
def clique_statistics(req: schemas.CliqueStatsRequest):
    try:
        log_count, window = graph.clique_statistics(req.n, req.p, req.r)
    except ValueError as exc:
        raise _bad_request(exc)
    return schemas.CliqueStatsOut(log_expected_count=log_count, window=window)


# ---------- Thermodynamics ----------
@app.post("/phase/", response_model=schemas.PhaseReport)
def phase(params: schemas.ModelParams):
    try:
        return thermo.phase_classify(params)
    except (ValueError, CavityError) as exc:
        raise _bad_request(exc)


@app.post("/annealed/", response_model=schemas.AnnealedOut)
def annealed(req: schemas.AnnealedRequest):
    try:
        log_z = thermo.annealed_log_z(req.params, req.mode)
        best = thermo.argmax_overlap(req.params) if req.mode == "exact-sum" and req.params.c > 1 else None
    except (ValueError, CavityError) as exc:
        raise _bad_request(exc)
    return schemas.AnnealedOut(mode=req.mode, log_z=log_z, argmax_overlap=best)


@app.post("/fermi/solve", response_model=schemas.OccupationSolution)
def fermi_solve(req: schemas.FermiRequest):
    try:
        spectrum = fermi_entropy.LevelSpectrum(np.asarray(req.degeneracies), req.offset)
        return fermi_entropy.occupation_solve(spectrum, req.particles, req.energy, req.tol)
    except (ValueError, CavityError) as exc:
        raise _bad_request(exc)


# ---------- Run registry ----------
def _confined_out_dir(requested: str) -> str:
    base = Path(config.runs_dir()).resolve()
    target = (base / requested).resolve()
    if not target.is_relative_to(base):
        raise HTTPException(status_code=400, detail=f"out_dir must stay inside {base}")
    return str(target)


@app.post("/runs/", response_model=schemas.RunOut)
def create_run(cfg: schemas.ExperimentConfig, database: Session = Depends(get_db)):
    cfg = cfg.model_copy(update={"out_dir": _confined_out_dir(cfg.out_dir)})
    result = harness.run_experiment(cfg, database)
    return crud.get_run(database, result.run_id)


@app.get("/runs/{run_id}", response_model=schemas.RunOut)
def read_run(run_id: int, database: Session = Depends(get_db)):
    run = crud.get_run(database, run_id)
    if not run:
        raise HTTPException(status_code=404, detail="Run not found")
    return run


@app.get("/runs/", response_model=list[schemas.RunOut])
def list_runs(skip: int = 0, limit: int = 100, experiment: str = None, database: Session = Depends(get_db)):
    return crud.list_runs(database, skip, limit, experiment)
