# cavity/harness.py
"""Experiment configuration, dispatch and artifacts (CSV files plus a manifest)."""
import configparser
import csv
import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError
from sqlalchemy.orm import Session

import cavity
from cavity import config, crud, fermi_entropy, graph as graphs, sampler, second_moment, thermo
from cavity.errors import CavityError, ConfigError
from cavity.plots import emit_plot_script
from cavity.schemas import ExperimentConfig, GridSpec, ModelParams
from cavity.seeding import derive_seed

LOG = logging.getLogger(__name__)

MANIFEST = "manifest.json"
GRAPH_STREAM = 0
CHAIN_STREAM = 1


# ---------- configuration ----------
def _split_list(raw: str, kind: Callable) -> List:
    return [kind(tok) for tok in raw.replace(",", " ").split()]


def _section(parser: configparser.ConfigParser, name: str) -> Dict[str, str]:
    return dict(parser[name]) if parser.has_section(name) else {}


def load_config(path=None, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Read an INI experiment file and apply CLI overrides on top of it."""
    parser = configparser.ConfigParser()
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    data: Dict[str, Any] = {}
    exp = _section(parser, "experiment")
    if "name" in exp:
        data["experiment"] = exp.pop("name")
    data.update(exp)

    model = _section(parser, "model")
    for key in ("p", "c_bar"):
        if key in model:
            data[key] = model[key]
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    model_over = {k: overrides.pop(k) for k in ("beta", "htilde") if k in overrides}
    model.update(model_over)

    grid = _section(parser, "grid")
    for key, kind in (("k_list", int), ("htilde_list", float)):
        if key in grid:
            grid[key] = _split_list(grid[key], kind)
    data["grid"] = grid
    data["budget"] = _section(parser, "budget")

    fermi = _section(parser, "fermi")
    if "spectrum" in fermi:
        data["spectrum_path"] = fermi.pop("spectrum")
    data.update(fermi)

    data.update(overrides)
    if "seed" not in data:
        raise ConfigError("a seed is required")
    if "k" not in model and {"p", "c_bar"} <= set(model):
        # a (p, c_bar) family without k is represented at the largest grid k
        model["k"] = max(grid.get("k_list") or GridSpec().k_list)
    try:
        if {"n", "k"} <= set(model):
            data["model"] = ModelParams(**model)
        elif {"k", "c_bar"} <= set(model) and "p" in model:
            data["model"] = ModelParams.from_c(
                int(model["k"]), float(model["p"]), float(model["c_bar"]),
                beta=float(model.get("beta", 1.0)), htilde=float(model.get("htilde", 0.0)),
            )
        return ExperimentConfig(**data)
    except (ValidationError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def _require(value, what: str):
    if value is None:
        raise ConfigError(f"this experiment needs {what}")
    return value


# ---------- artifacts ----------
def _format(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "" if value is None else str(value)


def write_csv(path: Path, fieldnames: Sequence[str], rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fieldnames)
        for row in rows:
            values = [row[name] for name in fieldnames] if isinstance(row, dict) else row
            writer.writerow([_format(v) for v in values])
    return path


def git_blob_hash(data: bytes) -> str:
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _config_payload(cfg: ExperimentConfig) -> bytes:
    return json.dumps(cfg.model_dump(mode="json", exclude={"out_dir"}), sort_keys=True).encode()


def manifest_hash(cfg: ExperimentConfig) -> str:
    """Content hash of the config (output directory excluded) and every input file."""
    payload = _config_payload(cfg)
    for path in (cfg.graph_path, cfg.spectrum_path):
        if path:
            try:
                payload += Path(path).read_bytes()
            except OSError as exc:
                raise ConfigError(f"cannot read input {path}: {exc}") from exc
    return git_blob_hash(payload)


def _write_manifest(cfg: ExperimentConfig, out: Path, digest: str, files: List[Path]) -> Path:
    manifest = {
        "tool": "cavity",
        "version": cavity.__version__,
        "input_hash": digest,
        "config": cfg.model_dump(mode="json"),
        "files": sorted(p.name for p in files),
    }
    path = out / MANIFEST
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# ---------- experiments ----------
def _instance(cfg: ExperimentConfig) -> graphs.Graph:
    if cfg.graph_path:
        return graphs.read_graph(cfg.graph_path)
    model = _require(cfg.model, "a [model] block")
    return graphs.generate_graph(model.n, model.p, derive_seed(cfg.seed, GRAPH_STREAM))


def _exp_gen(cfg: ExperimentConfig, out: Path) -> List[Path]:
    n = cfg.graph_n or _require(cfg.model, "graph_n or a [model] block").n
    p = cfg.graph_p or _require(cfg.model, "graph_p or a [model] block").p
    files, rows = [], []
    for r in range(cfg.replicas):
        seed = derive_seed(cfg.seed, GRAPH_STREAM, r)
        g = graphs.generate_graph(n, p, seed)
        files.append(graphs.write_graph(g, out / f"graph_{r}.txt"))
        rows.append({"replica": r, "seed": seed, "n": n, "p": p, "missing_fraction": g.missing_fraction()})
    files.append(write_csv(out / "graphs.csv", ["replica", "seed", "n", "p", "missing_fraction"], rows))
    return files


def _exp_run(cfg: ExperimentConfig, out: Path) -> List[Path]:
    params = _require(cfg.model, "a [model] block")
    instance = _instance(cfg)

    def chain(r: int):
        return sampler.run_chain(instance, params, cfg.steps, derive_seed(cfg.seed, CHAIN_STREAM, r))

    with ThreadPoolExecutor(max_workers=config.thread_count()) as pool:
        trajectories = list(pool.map(chain, range(cfg.replicas)))

    files, summary = [], []
    header = ["step", "energy", "overlap", "logZsigma", "state"]
    for r, traj in enumerate(trajectories):
        files.append(write_csv(out / f"trajectory_{r}.csv", header, traj.rows()))
        window = min(cfg.window, traj.steps)
        period2, fixed = sampler.detect_oscillation(traj, window)
        summary.append({
            "replica": r, "period2": period2, "fixed": fixed,
            "locking_step": sampler.locking_step(traj, window),
            "mean_energy": float(np.mean(traj.energies)), "mean_overlap": float(np.mean(traj.overlaps)),
        })
    files.append(write_csv(out / "chains.csv", list(summary[0]), summary))
    files.append(emit_plot_script(files[:1], "trajectory", out / "plot_trajectory.py"))
    return files


def _exp_exact(cfg: ExperimentConfig, out: Path) -> List[Path]:
    params = _require(cfg.model, "a [model] block")
    instance = _instance(cfg)
    rows = [
        ("log_z_fields", sampler.log_partition(instance, params, "fields")),
        ("entropy_direct", fermi_entropy.configurational_entropy(instance, params, "direct")),
        ("entropy_free_energy", fermi_entropy.configurational_entropy(instance, params, "free-energy")),
    ]
    if math.comb(params.n, params.k) <= config.kernel_cap():
        rows += [
            ("log_z_pairs", sampler.log_partition(instance, params, "pairs")),
            ("stationary_l1", sampler.stationary_check(instance, params)),
            ("detailed_balance", sampler.detailed_balance_residual(instance, params)),
        ]
    else:
        LOG.info("kernel checks skipped: C(%d, %d) exceeds the kernel cap", params.n, params.k)
    return [write_csv(out / "exact.csv", ["quantity", "value"], rows)]


def _exp_annealed(cfg: ExperimentConfig, out: Path) -> List[Path]:
    params = _require(cfg.model, "a [model] block")
    q, terms = thermo.annealed_terms(params)
    files = [write_csv(out / "annealed_terms.csv", ["q", "log_term"], zip(q, terms))]
    rows = [
        ("log_z_exact_sum", thermo.annealed_log_z(params, "exact-sum")),
        ("log_z_missing_links", thermo.annealed_log_z(params, "missing-links")),
    ]
    obs = thermo.annealed_observables(params)
    rows += [("mean_energy", obs.mean_energy), ("energy_variance", obs.energy_variance),
             ("mean_overlap", obs.mean_overlap)]
    if params.c > 1:
        branches = thermo.annealed_branches(params)
        rows += [
            ("branch_ordered", branches.ordered),
            ("branch_disordered", branches.disordered),
            ("finite_size_htilde_c", thermo.finite_size_htilde_c(params)),
            ("htilde_c", thermo.htilde_c(params.beta, params.p, params.c)),
        ]
    files.append(write_csv(out / "annealed.csv", ["quantity", "value"], rows))
    files.append(emit_plot_script(files[:1], "annealed", out / "plot_annealed.py"))
    return files


def _asymptotic_pair(cfg: ExperimentConfig):
    if cfg.model is not None:
        return cfg.p or cfg.model.p, cfg.c_bar or cfg.model.c
    return _require(cfg.p, "p"), _require(cfg.c_bar, "c_bar")


def _exp_phase_diagram(cfg: ExperimentConfig, out: Path) -> List[Path]:
    p, c = _asymptotic_pair(cfg)
    if c <= 1:
        raise ConfigError("the phase diagram needs c > 1")
    grid: GridSpec = cfg.grid
    critical = thermo.beta_c(p, c)
    rows = []
    for beta in np.linspace(grid.beta_min, grid.beta_max, grid.beta_points):
        rows.append({"beta": float(beta), "htilde_c": thermo.htilde_c(float(beta), p, c),
                     "beta_c_flag": critical is not None and beta > critical})
    files = [write_csv(out / "phase_diagram.csv", ["beta", "htilde_c", "beta_c_flag"], rows)]
    points = [("beta_c", critical), ("bar_beta_c", thermo.bar_beta_c(p, c)), ("hat_beta_c", thermo.hat_beta_c(p, c))]
    files.append(write_csv(out / "critical_points.csv", ["quantity", "value"], points))
    if grid.htilde_list:
        regions = []
        k = max(grid.k_list)
        for row in rows:
            for ht in grid.htilde_list:
                report = thermo.phase_classify(ModelParams.from_c(k, p, c, beta=row["beta"], htilde=ht))
                regions.append({"beta": row["beta"], "htilde": ht, "region": report.region,
                                "entropy_density": report.entropy_density})
        files.append(write_csv(out / "regions.csv", ["beta", "htilde", "region", "entropy_density"], regions))
    files.append(emit_plot_script(files[:1], "phase-diagram", out / "plot_phase_diagram.py"))
    return files


def _exp_second_moment(cfg: ExperimentConfig, out: Path) -> List[Path]:
    mode = cfg.mode or "brute"
    if mode == "selfavg":
        return _exp_selfavg(cfg, out)
    if mode in ("brute", "decomp"):
        params = _require(cfg.model, "a [model] block")
        log_ez2 = second_moment.second_moment(params, "brute" if mode == "brute" else "decomposition")
        log_ez = second_moment.first_moment_brute(params)
        rows = [{"mode": mode, "log_ez2": log_ez2, "log_ez": log_ez, "gap": log_ez2 - 2 * log_ez}]
        return [write_csv(out / "second_moment.csv", ["mode", "log_ez2", "log_ez", "gap"], rows)]
    if mode == "lemmas":
        p, c = _asymptotic_pair(cfg)
        beta = cfg.model.beta if cfg.model else 1.0
        htilde = cfg.model.htilde if cfg.model else 0.0
        rows = []
        for k in cfg.grid.k_list:
            params = ModelParams.from_c(k, p, c, beta=beta, htilde=htilde)
            region = thermo.phase_classify(params).region
            ordered, disordered = second_moment.lemma_g2_leading(params)
            for g_min in (0, 2):
                best = second_moment.lemma_max(params, g_min)
                leading = ordered if region == "A" else disordered
                rows.append({
                    "k": k, "n": params.n, "region": region, "g_min": g_min,
                    "q": best.q, "g": best.g, "g5": best.g5, "value": best.value,
                    "two_log_ez": 2 * thermo.annealed_log_z(params),
                    "leading": leading if g_min == 2 else None,
                    "normalized_residual": abs(best.value - leading) / k if g_min == 2 else None,
                })
        return [write_csv(out / "lemmas.csv", list(rows[0]), rows)]
    raise ConfigError(f"unknown second-moment mode {mode!r}")


def _exp_selfavg(cfg: ExperimentConfig, out: Path) -> List[Path]:
    p, c = _asymptotic_pair(cfg)
    beta = cfg.model.beta if cfg.model else 1.0
    htilde = cfg.model.htilde if cfg.model else 0.0
    rows = second_moment.self_averaging_experiment(p, c, cfg.grid.k_list, cfg.replicas, cfg.seed, beta, htilde)
    header = ["k", "n", "replicas", "mean_z", "var_z", "ratio", "reference"]
    files = [write_csv(out / "selfavg.csv", header, [r.model_dump() for r in rows])]
    files.append(emit_plot_script(files[:1], "selfavg", out / "plot_selfavg.py"))
    return files


def _exp_fermi(cfg: ExperimentConfig, out: Path) -> List[Path]:
    spectrum = fermi_entropy.read_spectrum(_require(cfg.spectrum_path, "a spectrum file"))
    particles = _require(cfg.particles, "particles")
    energy = _require(cfg.energy, "energy")
    sol = fermi_entropy.occupation_solve(spectrum, particles, energy)
    rows = [("lambda", sol.lam), ("mu", sol.mu), ("entropy", sol.entropy),
            ("residual_particles", sol.residual_particles), ("residual_energy", sol.residual_energy)]
    if spectrum.is_integral() and float(particles).is_integer() and spectrum.total <= config.enumeration_cap():
        rows.append(("exact_log_count", fermi_entropy.exact_log_count(spectrum, int(particles), energy)))
    files = [write_csv(out / "fermi.csv", ["quantity", "value"], rows)]
    occ = zip(spectrum.levels.astype(int), spectrum.degeneracies, sol.occupations)
    files.append(write_csv(out / "occupations.csv", ["j", "g", "x"], occ))
    return files


def _exp_cliquenum(cfg: ExperimentConfig, out: Path) -> List[Path]:
    n = _require(cfg.graph_n, "graph_n")
    p = _require(cfg.graph_p, "graph_p")
    window = graphs.clique_window(n, p)

    def omega(r: int):
        seed = derive_seed(cfg.seed, GRAPH_STREAM, r)
        size, _ = graphs.max_clique(graphs.generate_graph(n, p, seed))
        return seed, size

    with ThreadPoolExecutor(max_workers=config.thread_count()) as pool:
        results = list(pool.map(omega, range(cfg.replicas)))
    rows = [{"replica": r, "seed": seed, "omega": size, "center": window.center,
             "within": abs(size - window.center) <= 2.5} for r, (seed, size) in enumerate(results)]
    share = sum(row["within"] for row in rows) / len(rows)
    LOG.info("clique numbers: %.1f%% within the window around %.3f", 100 * share, window.center)
    files = [write_csv(out / "cliquenum.csv", ["replica", "seed", "omega", "center", "within"], rows)]
    files.append(emit_plot_script(files[:1], "cliquenum", out / "plot_cliquenum.py"))
    return files


EXPERIMENTS: Dict[str, Callable[[ExperimentConfig, Path], List[Path]]] = {
    "gen": _exp_gen,
    "run": _exp_run,
    "exact": _exp_exact,
    "annealed": _exp_annealed,
    "phase-diagram": _exp_phase_diagram,
    "second-moment": _exp_second_moment,
    "selfavg": _exp_selfavg,
    "fermi": _exp_fermi,
    "cliquenum": _exp_cliquenum,
}


@dataclass
class RunResult:
    exit_code: int
    manifest_hash: str
    files: List[Path] = field(default_factory=list)
    message: Optional[str] = None
    run_id: Optional[int] = None


def run_experiment(cfg: ExperimentConfig, db: Optional[Session] = None) -> RunResult:
    """Run one experiment into ``cfg.out_dir``; failures become exit codes, not exceptions."""
    try:
        digest, unreadable = manifest_hash(cfg), None
    except ConfigError as exc:
        # the run is still registered, keyed by the config alone
        digest, unreadable = git_blob_hash(_config_payload(cfg)), exc
    run = crud.create_run(db, cfg, digest) if db is not None else None
    out = Path(cfg.out_dir)
    LOG.info("experiment %s seed=%d hash=%s -> %s", cfg.experiment, cfg.seed, digest[:12], out)
    try:
        if unreadable is not None:
            raise unreadable
        out.mkdir(parents=True, exist_ok=True)
        with config.budget_overrides(cfg.budget.model_dump()):
            files = EXPERIMENTS[cfg.experiment](cfg, out)
        files.append(_write_manifest(cfg, out, digest, files))
        result = RunResult(exit_code=0, manifest_hash=digest, files=files)
    except CavityError as exc:
        LOG.error("experiment %s failed: %s", cfg.experiment, exc)
        result = RunResult(exit_code=exc.exit_code, manifest_hash=digest, message=str(exc))
    except (ValueError, OSError) as exc:
        LOG.error("experiment %s rejected: %s", cfg.experiment, exc)
        result = RunResult(exit_code=ConfigError.exit_code, manifest_hash=digest, message=str(exc))
    if run is not None:
        result.run_id = crud.finish_run(db, run.id, result.exit_code, result.message).id
    LOG.info("experiment %s finished with exit code %d", cfg.experiment, result.exit_code)
    return result
