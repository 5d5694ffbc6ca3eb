# cavity/plots.py
"""Standalone matplotlib scripts for experiment CSVs; nothing is drawn in-process."""
from pathlib import Path
from typing import Dict, Sequence

from cavity.errors import ConfigError

_HEADER = '''"""Generated by cavity; reads only the CSV files listed below."""
import csv
from pathlib import Path

import matplotlib.pyplot as plt

HERE = Path(__file__).resolve().parent
CSV_PATHS = {paths!r}


def read(path):
    with open(HERE / path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


'''

_BODIES: Dict[str, str] = {
    "phase-diagram": '''rows = read(CSV_PATHS[0])
beta = [float(r["beta"]) for r in rows]
htc = [float(r["htilde_c"]) for r in rows]
low = [b for b, r in zip(beta, rows) if r["beta_c_flag"] == "1"]
fig, ax = plt.subplots()
ax.plot(beta, htc, color="black", label="htilde_c(beta)")
if low:
    ax.axvline(min(low), linestyle="--", color="grey", label="beta_c")
top = max(h for h in htc if h < float("inf")) * 1.2
ax.set_ylim(0, top)
ax.text(beta[len(beta) // 2], top * 0.85, "A")
ax.text(beta[0], top * 0.05, "C")
if low:
    ax.text(low[len(low) // 2], top * 0.05, "B")
ax.set_xlabel("beta")
ax.set_ylabel("htilde")
ax.legend()
''',
    "trajectory": '''fig, (top, bottom) = plt.subplots(2, 1, sharex=True)
for path in CSV_PATHS:
    rows = read(path)
    steps = [int(r["step"]) for r in rows]
    top.plot(steps, [float(r["energy"]) for r in rows], label=path)
    bottom.plot(steps, [int(r["overlap"]) for r in rows])
top.set_ylabel("H(sigma_t, sigma_t+1)")
bottom.set_ylabel("overlap")
bottom.set_xlabel("step")
''',
    "selfavg": '''rows = read(CSV_PATHS[0])
k = [int(r["k"]) for r in rows]
fig, ax = plt.subplots()
ax.semilogy(k, [float(r["ratio"]) for r in rows], "o-", label="var Z / (mean Z)^2")
ax.semilogy(k, [float(r["reference"]) for r in rows], "--", label="n^-2")
ax.set_xlabel("k")
ax.legend()
''',
    "annealed": '''rows = read(CSV_PATHS[0])
fig, ax = plt.subplots()
ax.plot([int(r["q"]) for r in rows], [float(r["log_term"]) for r in rows], "o-")
ax.set_xlabel("overlap q")
ax.set_ylabel("Theta(q) + Phi(q)")
''',
    "cliquenum": '''rows = read(CSV_PATHS[0])
omega = [int(r["omega"]) for r in rows]
centre = float(rows[0]["center"])
fig, ax = plt.subplots()
ax.hist(omega, bins=range(min(omega), max(omega) + 2), align="left")
ax.axvline(centre, color="black")
ax.axvspan(centre - 2.5, centre + 2.5, alpha=0.15)
ax.set_xlabel("clique number")
''',
}

_FOOTER = '''
fig.tight_layout()
fig.savefig(HERE / {image!r})
'''

PLOT_KINDS = tuple(_BODIES)


def emit_plot_script(csv_paths: Sequence, kind: str, out_path) -> Path:
    if kind not in _BODIES:
        raise ConfigError(f"unknown plot kind {kind!r}; expected one of {', '.join(PLOT_KINDS)}")
    paths = [Path(p) for p in csv_paths]
    if not paths:
        raise ConfigError("no CSV files given")
    missing = [str(p) for p in paths if not p.is_file()]
    if missing:
        raise ConfigError(f"missing CSV: {', '.join(missing)}")
    out_path = Path(out_path)
    # sibling CSVs are named relative to the script's own directory, others absolutely
    names = [p.name if p.parent.resolve() == out_path.parent.resolve() else str(p.resolve()) for p in paths]
    script = (
        _HEADER.format(paths=names)
        + _BODIES[kind]
        + _FOOTER.format(image=out_path.with_suffix(".png").name)
    )
    out_path.write_text(script, encoding="utf-8")
    return out_path
