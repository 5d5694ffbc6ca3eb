# cavity/cli.py
import argparse
import logging
import sys
from typing import List, Optional

from cavity import config
from cavity.db import SessionLocal, init_db
from cavity.errors import CavityError
from cavity.harness import EXPERIMENTS, load_config, run_experiment

LOG = logging.getLogger(__name__)

# flag -> ExperimentConfig field
_OVERRIDES = {
    "seed": "seed",
    "out": "out_dir",
    "steps": "steps",
    "replicas": "replicas",
    "mode": "mode",
    "beta": "beta",
    "htilde": "htilde",
    "spectrum": "spectrum_path",
    "particles": "particles",
    "energy": "energy",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cavity", description="Clique-model dynamics experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", help="INI experiment file")
        cmd.add_argument("--seed", type=int)
        cmd.add_argument("--out")
        cmd.add_argument("--steps", type=int)
        cmd.add_argument("--replicas", type=int)
        cmd.add_argument("--mode")
        cmd.add_argument("--beta", type=float)
        cmd.add_argument("--htilde", type=float)
        cmd.add_argument("--spectrum")
        cmd.add_argument("--particles", type=float)
        cmd.add_argument("--energy", type=float)
        cmd.add_argument("--record", action="store_true", help="register the run in the database")
    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def _serve(args) -> int:
    import uvicorn

    uvicorn.run("cavity.main:app", host=args.host, port=args.port)
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=config.log_level(), format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    if args.command == "serve":
        return _serve(args)

    overrides = {field: getattr(args, flag) for flag, field in _OVERRIDES.items()}
    overrides["experiment"] = args.command
    try:
        cfg = load_config(args.config, overrides)
    except CavityError as exc:
        print(f"cavity: {exc}", file=sys.stderr)
        return exc.exit_code

    if args.record:
        init_db()
        with SessionLocal() as db:
            result = run_experiment(cfg, db)
    else:
        result = run_experiment(cfg)
    if result.exit_code:
        print(f"cavity: {result.message}", file=sys.stderr)
    else:
        print(f"{cfg.experiment}: {len(result.files)} files in {cfg.out_dir} (hash {result.manifest_hash[:12]})")
    return result.exit_code
