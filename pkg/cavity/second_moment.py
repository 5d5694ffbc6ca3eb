# cavity/second_moment.py
"""Second moment of Z over the graph disorder.

Four configurations (σ, τ, σ′, τ′) split the vertices into the cells
X ∩ Y′ with X ∈ {S, I, T, C} taken from (σ, τ) and Y′ from (σ′, τ′).
E(Z²) is computed by brute force over quadruples, or by summing exact
multinomials over the nine cell sizes g₁..g₉ of the non-C cells.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaln, logsumexp

from cavity import config, thermo
from cavity.errors import BudgetExceeded
from cavity.graph import generate_graph
from cavity.numerics import log_factorial_floor
from cavity.sampler import all_configurations, log_partition
from cavity.schemas import LemmaMax, ModelParams, SelfAveragingRow
from cavity.seeding import derive_seed, make_rng

LOG = logging.getLogger(__name__)

ENTROPIC_SLACK = 8.0

# membership (in σ, in τ) for each part of a pair of configurations
_PARTS = {"S": (1, 0), "I": (1, 1), "T": (0, 1), "C": (0, 0)}
SUBSETS = tuple(_PARTS)
CELLS = tuple(a + b + "'" for a in SUBSETS for b in SUBSETS)
# the nine cells of the overlap table, g_r indexed row-major from SS' = 1 to TT' = 9
TABLE_CELLS = tuple(a + b + "'" for a in "SIT" for b in "SIT")


# ---------- multiplicities ----------
def _pair_value(x: str, y: str) -> int:
    si, ti = _PARTS[x]
    sj, tj = _PARTS[y]
    return si * tj + sj * ti


def _split(label: str) -> Tuple[str, str]:
    if label in _PARTS:
        return label, ""
    if len(label) == 3 and label[2] == "'" and label[0] in _PARTS and label[1] in _PARTS:
        return label[0], label[1]
    raise ValueError(f"invalid region label {label!r}")


def multiplicity(region_i: str, region_j: str) -> int:
    """σ_iτ_j + σ_jτ_i for single parts, plus the primed pair for two-letter cells."""
    a_i, b_i = _split(region_i)
    a_j, b_j = _split(region_j)
    if bool(b_i) != bool(b_j):
        raise ValueError("cannot mix single parts with two-letter cells")
    value = _pair_value(a_i, a_j)
    if b_i:
        value += _pair_value(b_i, b_j)
    return value


def _pair_type_matrices() -> Tuple[np.ndarray, np.ndarray]:
    # (1,1) and (1,2)/(2,1) incidences between distinct table cells; (2,2) only inside II'
    ones = np.zeros((9, 9), dtype=np.int64)
    mixed = np.zeros((9, 9), dtype=np.int64)
    for r, s in product(range(9), repeat=2):
        if r == s:
            continue
        a = _pair_value(TABLE_CELLS[r][0], TABLE_CELLS[s][0])
        b = _pair_value(TABLE_CELLS[r][1], TABLE_CELLS[s][1])
        if a == 1 and b == 1:
            ones[r, s] = 1
        elif {a, b} == {1, 2}:
            mixed[r, s] = 1
    return ones, mixed


_ONES, _MIXED = _pair_type_matrices()


# ---------- overlap cells ----------
@dataclass(frozen=True)
class OverlapCell:
    q: int
    q_prime: int
    g: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "g", tuple(int(x) for x in self.g))
        if len(self.g) != 9:
            raise ValueError("an overlap cell has nine sizes g_1..g_9")

    @property
    def g_total(self) -> int:
        return sum(self.g)

    @property
    def g5(self) -> int:
        return self.g[4]

    def complements(self, k: int) -> Dict[str, int]:
        g = self.g
        q, qp = self.q, self.q_prime
        return {
            "S": k - q - (g[0] + g[1] + g[2]),
            "I": q - (g[3] + g[4] + g[5]),
            "T": k - q - (g[6] + g[7] + g[8]),
            "S'": k - qp - (g[0] + g[3] + g[6]),
            "I'": qp - (g[1] + g[4] + g[7]),
            "T'": k - qp - (g[2] + g[5] + g[8]),
        }

    def validate(self, k: int) -> None:
        if not (0 <= self.q <= k and 0 <= self.q_prime <= k):
            raise ValueError("overlaps must lie in [0, k]")
        if min(self.g) < 0:
            raise ValueError("cell sizes must be non-negative")
        short = {name: v for name, v in self.complements(k).items() if v < 0}
        if short:
            raise ValueError(f"cell violates its row/column constraints: {short}")


def _coefficients(beta, p):
    f1, f2, f3, f4 = (thermo.f_eval(m * np.asarray(beta, dtype=float), p) for m in (1, 2, 3, 4))
    ones = 2 * f1 - f2
    mixed = f1 + f2 - f3
    double = 2 * f2 - f4
    return ones, mixed, double


def _psi(g: np.ndarray, beta, p):
    g = np.asarray(g, dtype=float)
    ones, mixed, double = _coefficients(beta, p)
    count_ones = np.einsum("...r,rs,...s->...", g, _ONES, g) / 2
    count_mixed = np.einsum("...r,rs,...s->...", g, _MIXED, g) / 2
    g5 = g[..., 4]
    return double * g5 * (g5 - 1) / 2 + ones * count_ones + mixed * count_mixed


def _psi_bar(g_total, g5, k, beta, p):
    _, mixed, double = _coefficients(beta, p)
    g_total = np.asarray(g_total, dtype=float)
    g5 = np.asarray(g5, dtype=float)
    return double * g5 * (g5 - 1) / 2 + mixed * (np.minimum(k, g_total) + g5) * (g_total - g5) / 2


def psi_and_bound(cell: OverlapCell, k: int, beta: float, p: float) -> Tuple[float, float]:
    cell.validate(k)
    g = np.array(cell.g)
    return float(_psi(g, beta, p)), float(_psi_bar(cell.g_total, cell.g5, k, beta, p))


def theta2_bar(q, q_prime, g, n, k: int):
    """Entropic bound on the multinomial sum, with m! = 1 for every m <= 1."""
    q, q_prime, g = (np.asarray(x, dtype=float) for x in (q, q_prime, g))
    feasible = (
        (q >= 0) & (q <= k) & (q_prime >= 0) & (q_prime <= k)
        & (g >= 0) & (g <= np.minimum(2 * k - q, 2 * k - q_prime))
    )
    if not np.all(feasible):
        raise ValueError("(q, q', g) outside the feasible polyhedron")
    value = (
        (4 * k - q - q_prime - g) * math.log(n)
        - log_factorial_floor(q - g) - log_factorial_floor(q_prime - g)
        - 2 * (log_factorial_floor(k - q - g) + log_factorial_floor(k - q_prime - g))
        + ENTROPIC_SLACK
    )
    return float(value) if np.ndim(value) == 0 else value


# ---------- exact moments ----------
def _ordered_pairs(n: int, k: int):
    masks = all_configurations(n, k)
    count = len(masks)
    if count * count > config.enumeration_cap():
        raise BudgetExceeded("ordered configuration pairs", count * count, config.enumeration_cap())
    left, right = np.divmod(np.arange(count * count), count)
    s, t = masks[left], masks[right]
    iu, ju = np.triu_indices(n, 1)
    incidence = s[:, iu].astype(np.int8) * t[:, ju] + s[:, ju].astype(np.int8) * t[:, iu]
    overlap = (s & t).sum(axis=1)
    return incidence, overlap


def _pair_lut(beta: float, p: float, top: int) -> np.ndarray:
    return np.array([0.0] + [-thermo.f_eval(m * beta, p) for m in range(1, top + 1)])


def first_moment_brute(params: ModelParams) -> float:
    """ln E Z by per-pair factorisation over every ordered pair (σ, τ)."""
    incidence, overlap = _ordered_pairs(params.n, params.k)
    lut = _pair_lut(params.beta, params.p, 2)
    energy = thermo.energy_term(params.beta, params.h * (params.k - overlap))
    return float(logsumexp(lut[incidence].sum(axis=1) + energy))


def _second_moment_brute(params: ModelParams) -> float:
    incidence, overlap = _ordered_pairs(params.n, params.k)
    size = len(overlap) ** 2
    cap = config.quadruple_cap()
    if size > cap:
        raise BudgetExceeded("configuration quadruples", size, cap)
    lut = _pair_lut(params.beta, params.p, 4)
    onehot = [(incidence == u).astype(float) for u in range(3)]
    log_w = np.zeros((len(overlap), len(overlap)))
    for u, v in product(range(3), repeat=2):
        if u + v:
            log_w += lut[u + v] * (onehot[u] @ onehot[v].T)
    energy = thermo.energy_term(params.beta, params.h * (params.k - overlap))
    return float(logsumexp(log_w + energy[:, None] + energy[None, :]))


def _row_triples(limit: int, k: int) -> np.ndarray:
    grid = np.array(list(product(range(k + 1), repeat=3)), dtype=np.int64)
    return grid[grid.sum(axis=1) <= limit]


def _cells_for(q: int, k: int) -> np.ndarray:
    rows = [_row_triples(k - q, k), _row_triples(q, k), _row_triples(k - q, k)]
    size = len(rows[0]) * len(rows[1]) * len(rows[2])
    cap = config.quadruple_cap()
    if size > cap:
        raise BudgetExceeded("overlap cells", size, cap)
    i, j, l = np.meshgrid(*(np.arange(len(r)) for r in rows), indexing="ij")
    return np.concatenate([rows[0][i.ravel()], rows[1][j.ravel()], rows[2][l.ravel()]], axis=1)


def _second_moment_decomposition(params: ModelParams) -> float:
    n, k = params.n, params.k
    log_n_fact = float(gammaln(n + 1))
    terms: List[float] = []
    for q in range(k + 1):
        cells = _cells_for(q, k)
        for q_prime in range(k + 1):
            cols = np.stack([cells[:, 0::3].sum(1), cells[:, 1::3].sum(1), cells[:, 2::3].sum(1)], axis=1)
            ok = (cols[:, 0] <= k - q_prime) & (cols[:, 1] <= q_prime) & (cols[:, 2] <= k - q_prime)
            g = cells[ok]
            g_total = g.sum(axis=1)
            rest = n - (4 * k - q - q_prime - g_total)
            g = g[rest >= 0]
            if not len(g):
                continue
            rest = rest[rest >= 0]
            comp = np.stack([
                k - q - g[:, 0:3].sum(1), q - g[:, 3:6].sum(1), k - q - g[:, 6:9].sum(1),
                k - q_prime - g[:, 0::3].sum(1), q_prime - g[:, 1::3].sum(1), k - q_prime - g[:, 2::3].sum(1),
            ], axis=1)
            log_m = log_n_fact - gammaln(g + 1).sum(1) - gammaln(comp + 1).sum(1) - gammaln(rest + 1)
            phis = thermo.phi(q, params) + thermo.phi(q_prime, params)
            terms.append(float(logsumexp(log_m + phis + _psi(g, params.beta, params.p))))
    return float(logsumexp(terms))


def second_moment(params: ModelParams, mode: str = "brute") -> float:
    """ln E(Z²)."""
    if mode == "brute":
        return _second_moment_brute(params)
    if mode == "decomposition":
        return _second_moment_decomposition(params)
    raise ValueError(f"unknown mode {mode!r}")


# ---------- polyhedron maximisation ----------
def _polyhedron(k: int, g_min: int):
    q, g, g5 = np.meshgrid(np.arange(k + 1), np.arange(2 * k + 1), np.arange(k + 1), indexing="ij")
    inside = (g >= g_min) & (g <= 2 * k - q) & (g5 <= g) & (g5 <= q)
    return q[inside], g[inside], g5[inside]


def lemma_objective(params: ModelParams, q, g, g5):
    """Θ̄₂(q, q, g) + 2Φ(q) + Ψ̄(q, q, g, g₅)."""
    k = params.k
    return (
        theta2_bar(q, q, g, params.n, k)
        + 2 * thermo.phi(q, params)
        + _psi_bar(g, g5, k, params.beta, params.p)
    )


def lemma_max(params: ModelParams, g_min: int = 0) -> LemmaMax:
    if g_min not in (0, 2):
        raise ValueError("g_min must be 0 or 2")
    q, g, g5 = _polyhedron(params.k, g_min)
    values = lemma_objective(params, q, g, g5)
    i = int(np.argmax(values))
    return LemmaMax(q=int(q[i]), g=int(g[i]), g5=int(g5[i]), value=float(values[i]))


def lemma_g2_leading(params: ModelParams) -> Tuple[float, float]:
    """Leading terms of the g >= 2 maximum: (ordered phase, disordered phase)."""
    k, beta, p = params.k, params.beta, params.p
    log_n = params.log_n
    ordered = -thermo.f_eval(2 * beta, p) * k * (k - 1) + (2 * k - 2) * log_n - 2 * gammaln(k - 1)
    energy = float(thermo.energy_term(beta, 2 * params.h * k))
    disordered = energy - 2 * thermo.f_eval(beta, p) * k * k + (4 * k - 2) * log_n - 4 * gammaln(k - 1)
    return float(ordered), float(disordered)


def polytope_hessian(beta: float, p: float, g_above_k: bool) -> np.ndarray:
    """Hessian in (q, g, g₅) of the quadratic part of the objective."""
    f = {m: thermo.f_eval(m * beta, p) for m in (1, 2, 3, 4)}
    mixed = f[1] + f[2] - f[3]
    corner = 2 * f[2] - f[4] - mixed
    if g_above_k:
        block = [[0.0, mixed / 2], [mixed / 2, corner]]
    else:
        block = [[mixed, 0.0], [0.0, corner]]
    hessian = np.zeros((3, 3))
    hessian[0, 0] = 4 * f[1] - 2 * f[2]
    hessian[1:, 1:] = block
    return hessian


# ---------- random cells ----------
def _random_cells(k, rng: np.random.Generator, size: int):
    k = np.broadcast_to(np.asarray(k, dtype=np.int64), (size,))
    q = rng.integers(0, k + 1)
    q_prime = rng.integers(0, k + 1)
    rows = np.stack([k - q, q, k - q], axis=1)
    cols = np.stack([k - q_prime, q_prime, k - q_prime], axis=1)
    g = np.zeros((size, 9), dtype=np.int64)
    for r in range(9):
        i, j = divmod(r, 3)
        slack = np.minimum(rows[:, i], cols[:, j])
        g[:, r] = np.floor(rng.random(size) * (slack + 1)).astype(np.int64)
        rows[:, i] -= g[:, r]
        cols[:, j] -= g[:, r]
    return q, q_prime, g


def random_feasible_cell(k: int, rng: np.random.Generator) -> OverlapCell:
    q, q_prime, g = _random_cells(k, rng, 1)
    return OverlapCell(q=int(q[0]), q_prime=int(q_prime[0]), g=tuple(g[0]))


def audit_psi_bound(samples: int, k_max: int, betas: Sequence[float], ps: Sequence[float], seed) -> float:
    """Largest Ψ − Ψ̄ over random feasible cells; must not be positive."""
    rng = make_rng(seed)
    k = rng.integers(1, k_max + 1, size=samples)
    beta = rng.choice(np.asarray(betas, dtype=float), size=samples)
    p = rng.choice(np.asarray(ps, dtype=float), size=samples)
    _, _, g = _random_cells(k, rng, samples)
    excess = _psi(g, beta, p) - _psi_bar(g.sum(axis=1), g[:, 4], k, beta, p)
    worst = float(np.max(excess))
    LOG.info("psi bound audit: %d cells, worst excess %.3e", samples, worst)
    return worst


# ---------- self-averaging ----------
def _replica_log_z(params: ModelParams, master: int, replica: int) -> float:
    graph = generate_graph(params.n, params.p, derive_seed(master, params.k, replica))
    return log_partition(graph, params)


def self_averaging_experiment(p: float, c_bar: float, k_list: Sequence[int], replicas: int, seed: int,
                              beta: float = 1.0, htilde: float = 0.0,
                              threads: Optional[int] = None) -> List[SelfAveragingRow]:
    if replicas < 2:
        raise ValueError("need at least two replicas")
    rows = []
    workers = threads or config.thread_count()
    for k in k_list:
        params = ModelParams.from_c(k, p, c_bar, beta=beta, htilde=htilde)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            log_z = np.array(list(pool.map(lambda r: _replica_log_z(params, seed, r), range(replicas))))
        log_mean = float(logsumexp(log_z) - math.log(replicas))
        log_second = float(logsumexp(2 * log_z) - math.log(replicas))
        ratio = max(math.expm1(log_second - 2 * log_mean), 0.0)
        row = SelfAveragingRow(
            k=k, n=params.n, replicas=replicas,
            mean_z=math.exp(log_mean), var_z=ratio * math.exp(2 * log_mean),
            ratio=ratio, reference=params.n ** -2.0,
        )
        LOG.info("self-averaging k=%d n=%d ratio=%.4g reference=%.4g", k, params.n, ratio, row.reference)
        rows.append(row)
    return rows
