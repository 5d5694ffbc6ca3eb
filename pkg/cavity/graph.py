# cavity/graph.py
"""Erdős–Rényi instances, configurations, exact clique search and clique-count statistics."""
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from pathlib import Path
from typing import Iterable, List, Optional, Tuple

import numpy as np

from cavity import config
from cavity.errors import BudgetExceeded
from cavity.numerics import log_binom
from cavity.schemas import CliqueWindow
from cavity.seeding import make_rng

LOG = logging.getLogger(__name__)


# ---------- Configuration ----------
@dataclass(frozen=True, order=True)
class Configuration:
    """A k-subset of vertices in canonical (strictly increasing) order."""

    vertices: Tuple[int, ...]

    def __post_init__(self):
        vs = tuple(int(v) for v in self.vertices)
        if any(b <= a for a, b in zip(vs, vs[1:])):
            raise ValueError(f"vertices must be strictly increasing: {vs}")
        object.__setattr__(self, "vertices", vs)

    @classmethod
    def of(cls, vertices: Iterable[int]) -> "Configuration":
        vs = [int(v) for v in vertices]
        if len(set(vs)) != len(vs):
            raise ValueError(f"duplicate vertices in {vs}")
        return cls(tuple(sorted(vs)))

    @property
    def k(self) -> int:
        return len(self.vertices)

    def validate(self, n: int) -> None:
        if self.vertices and (self.vertices[0] < 0 or self.vertices[-1] >= n):
            raise ValueError(f"vertices out of range [0, {n})")

    def mask(self, n: int) -> np.ndarray:
        self.validate(n)
        m = np.zeros(n, dtype=bool)
        m[list(self.vertices)] = True
        return m

    def overlap(self, other: "Configuration") -> int:
        return len(set(self.vertices).intersection(other.vertices))

    def to_line(self) -> str:
        return " ".join(str(v + 1) for v in self.vertices)

    @classmethod
    def from_line(cls, line: str) -> "Configuration":
        return cls.of(int(tok) - 1 for tok in line.split())


# ---------- Graph ----------
@dataclass(frozen=True, eq=False)
class Graph:
    n: int
    p: float
    seed: int
    # missing[i, j] is J_ij: True when the edge {i, j} is absent; diagonal kept False
    missing: np.ndarray = field(repr=False)

    @classmethod
    def from_missing(cls, missing, p: float = 0.5, seed: int = 0) -> "Graph":
        m = np.array(missing, dtype=bool)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("missing-link matrix must be square")
        np.fill_diagonal(m, False)
        if not np.array_equal(m, m.T):
            raise ValueError("missing-link matrix must be symmetric")
        m.setflags(write=False)
        return cls(n=m.shape[0], p=p, seed=seed, missing=m)

    @cached_property
    def adjacency_bits(self) -> List[int]:
        """Row i as an int bitset of the neighbours of i."""
        adjacent = ~self.missing
        np.fill_diagonal(adjacent, False)
        weights = [1 << j for j in range(self.n)]
        return [sum(w for w, a in zip(weights, row) if a) for row in adjacent.tolist()]

    @property
    def pair_count(self) -> int:
        return self.n * (self.n - 1) // 2

    def missing_fraction(self) -> float:
        iu = np.triu_indices(self.n, 1)
        return float(self.missing[iu].mean())

    def is_clique(self, vertices: Iterable[int]) -> bool:
        vs = list(vertices)
        return not self.missing[np.ix_(vs, vs)].any()


def generate_graph(n: int, p: float, seed: int) -> Graph:
    """G(n, p): every unordered pair is a missing link with probability 1 - p."""
    if n < 2:
        raise ValueError("n must be at least 2")
    if not 0.0 < p <= 1.0:
        raise ValueError("p must lie in (0, 1]")
    rng = make_rng(seed)
    iu = np.triu_indices(n, 1)
    missing = np.zeros((n, n), dtype=bool)
    missing[iu] = rng.random(len(iu[0])) >= p
    missing |= missing.T
    missing.setflags(write=False)
    return Graph(n=n, p=float(p), seed=int(seed), missing=missing)


def complete_graph(n: int) -> Graph:
    return Graph.from_missing(np.zeros((n, n), dtype=bool), p=1.0)


def empty_graph(n: int) -> Graph:
    return Graph.from_missing(~np.eye(n, dtype=bool), p=0.0)


def planted_pair_graph(n: int, k: int) -> Graph:
    """Two disjoint k-sets {0..k-1}, {k..2k-1}: no edges inside either, all edges across.

    Vertices from 2k on are isolated. From either set the cheapest next
    configuration is the other one, so the low-temperature chain alternates.
    """
    if 2 * k > n:
        raise ValueError("need 2k <= n")
    adjacent = np.zeros((n, n), dtype=bool)
    adjacent[:k, k:2 * k] = True
    adjacent[k:2 * k, :k] = True
    return Graph.from_missing(~adjacent, p=0.5)


# ---------- Text format ----------
def write_graph(graph: Graph, path) -> Path:
    path = Path(path)
    lines = [f"{graph.n} {graph.p!r} {graph.seed}"]
    rows = graph.missing.astype(np.uint8).tolist()
    for i in range(graph.n - 1):
        lines.append("".join(str(b) for b in rows[i][i + 1:]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_graph(path) -> Graph:
    text = Path(path).read_text(encoding="utf-8").split()
    n, p, seed = int(text[0]), float(text[1]), int(text[2])
    rows = text[3:]
    if len(rows) != n - 1:
        raise ValueError(f"expected {n - 1} rows, found {len(rows)}")
    missing = np.zeros((n, n), dtype=bool)
    for i, row in enumerate(rows):
        if len(row) != n - 1 - i or set(row) - {"0", "1"}:
            raise ValueError(f"malformed row {i + 1}")
        missing[i, i + 1:] = [ch == "1" for ch in row]
    missing |= missing.T
    return Graph.from_missing(missing, p=p, seed=seed)


# ---------- Exact maximum clique ----------
def _color_sort(candidates: int, adjacency: List[int]) -> Tuple[List[int], List[int]]:
    # greedy colouring; bounds[i] is the colour class count up to order[i]
    order, bounds = [], []
    uncolored = candidates
    color = 0
    while uncolored:
        color += 1
        available = uncolored
        while available:
            low = available & -available
            v = low.bit_length() - 1
            available &= ~low
            available &= ~adjacency[v]
            uncolored &= ~low
            order.append(v)
            bounds.append(color)
    return order, bounds


def max_clique(graph: Graph, node_budget: Optional[int] = None) -> Tuple[int, Configuration]:
    """Exact branch and bound with a greedy colouring bound."""
    adjacency = graph.adjacency_bits
    budget = node_budget if node_budget is not None else config.bnb_node_cap()
    best: List[int] = []
    current: List[int] = []
    nodes = 0

    def expand(candidates: int) -> None:
        nonlocal best, nodes
        nodes += 1
        if nodes > budget:
            raise BudgetExceeded("branch-and-bound nodes", nodes, budget)
        order, bounds = _color_sort(candidates, adjacency)
        for idx in range(len(order) - 1, -1, -1):
            if len(current) + bounds[idx] <= len(best):
                return
            v = order[idx]
            current.append(v)
            narrowed = candidates & adjacency[v]
            if narrowed:
                expand(narrowed)
            elif len(current) > len(best):
                best = list(current)
            current.pop()
            candidates &= ~(1 << v)

    expand((1 << graph.n) - 1)
    LOG.debug("max_clique n=%d size=%d nodes=%d", graph.n, len(best), nodes)
    return len(best), Configuration.of(best)


def count_cliques(graph: Graph, r: int) -> int:
    """Exact number of r-cliques, by ordered bitset extension."""
    if r < 1:
        raise ValueError("r must be positive")
    adjacency = graph.adjacency_bits

    def extend(candidates: int, depth: int) -> int:
        if depth == r:
            return 1
        total = 0
        while candidates:
            low = candidates & -candidates
            v = low.bit_length() - 1
            candidates &= ~low
            # only higher-numbered neighbours, so each clique is counted once
            total += extend(candidates & adjacency[v], depth + 1)
        return total

    return extend((1 << graph.n) - 1, 0)


def exhaustive_max_clique(graph: Graph) -> int:
    """Largest clique by scanning all subsets from the top size down; small n only."""
    for size in range(graph.n, 0, -1):
        for vs in combinations(range(graph.n), size):
            if graph.is_clique(vs):
                return size
    return 1


# ---------- Clique-number statistics ----------
def log_expected_cliques(n, p: float, r: int) -> float:
    """ln E Y_r = ln C(n, r) + C(r, 2) ln p."""
    return log_binom(n, r) + r * (r - 1) / 2 * math.log(p)


def clique_window(n, p: float) -> CliqueWindow:
    if not 0.0 < p < 1.0:
        raise ValueError("window needs p in (0, 1)")
    b = 1.0 / p
    log_b = math.log(b)
    log_b_n = math.log(n) / log_b
    if log_b_n <= 0.0:
        raise ValueError("window needs n > 1")
    center = 2 * log_b_n - 2 * math.log(log_b_n) / log_b + 2 * math.log(math.e / 2) / log_b + 1
    return CliqueWindow(center=center, lower=center - 1.5, upper=center + 1.5, base=b)


def clique_statistics(n: int, p: float, r: int) -> Tuple[float, CliqueWindow]:
    if not 1 <= r <= n:
        raise ValueError(f"r must satisfy 1 <= r <= n, got r={r}, n={n}")
    return log_expected_cliques(n, p, r), clique_window(n, p)


def clique_number_thresholds(r: int, p: float, eps: float) -> Tuple[int, int]:
    """(n_r, n'_r): last n with E Y_r <= r^-(1+eps), first n with E Y_r >= r^(1+eps)."""
    if r < 2 or eps <= 0 or not 0.0 < p < 1.0:
        raise ValueError("need r >= 2, eps > 0 and p in (0, 1)")
    low = -(1 + eps) * math.log(r)
    high = (1 + eps) * math.log(r)

    # E Y_r is increasing in n >= r, so both thresholds are found by bisection
    def first_n(reached) -> int:
        lo, hi = r, r
        while not reached(log_expected_cliques(hi, p, r)):
            lo, hi = hi + 1, hi * 2
        while lo < hi:
            mid = (lo + hi) // 2
            if reached(log_expected_cliques(mid, p, r)):
                hi = mid
            else:
                lo = mid + 1
        return lo

    return first_n(lambda v: v > low) - 1, first_n(lambda v: v >= high)


def clique_count_variance_bound(n: int, p: float, r: int) -> float:
    """Upper bound b r^4 / n^2 + 2 / E Y_r on var Y_r / (E Y_r)^2."""
    if not 1 <= r <= n:
        raise ValueError(f"r must satisfy 1 <= r <= n, got r={r}, n={n}")
    return (1.0 / p) * r ** 4 / n ** 2 + 2.0 * math.exp(-log_expected_cliques(n, p, r))


def grand_hamiltonian(graph: Graph, subset: Iterable[int], h: float) -> float:
    """Σ_{i≠j} J_ij σ_i σ_j − h|subset|, each missing pair counted twice."""
    vs = sorted(set(int(v) for v in subset))
    if not vs:
        return 0.0
    pairs = int(graph.missing[np.ix_(vs, vs)].sum())
    return float(pairs) - h * len(vs)
