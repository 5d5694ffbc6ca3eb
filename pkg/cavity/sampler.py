# cavity/sampler.py
"""Exact sampling of one cavity step and exact small-instance enumeration.

A step from σ places k particles on the n sites with site weights
w_i = exp(−β h_i(σ)), so Z_σ is the k-th elementary symmetric sum of the
weights. Sampling walks the symmetric-sum table backwards.
"""
import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import gammaln, logsumexp

from cavity import config
from cavity.errors import BudgetExceeded
from cavity.graph import Configuration, Graph
from cavity.hamiltonian import FieldTable, cavity_fields
from cavity.numerics import log_binom, log_binom_array
from cavity.schemas import ModelParams
from cavity.seeding import make_rng

LOG = logging.getLogger(__name__)

ZERO_TOL = 1e-9


# ---------- symmetric sums ----------
@dataclass(frozen=True, eq=False)
class StepWeights:
    log_w: np.ndarray
    k: int
    # log_esp[m, j] = ln e_j(w_1..w_m)
    log_esp: np.ndarray = field(repr=False)

    @property
    def log_z(self) -> float:
        return float(self.log_esp[-1, self.k])


def _check_beta(beta: float) -> None:
    if math.isnan(beta) or beta < 0:
        raise ValueError("beta must be >= 0")


def _log_esp_step(prev: np.ndarray, lw) -> np.ndarray:
    nxt = prev.copy()
    nxt[..., 1:] = np.logaddexp(prev[..., 1:], lw[..., None] + prev[..., :-1])
    return nxt


def step_weights(table: FieldTable, beta: float) -> StepWeights:
    _check_beta(beta)
    log_w = -beta * table.fields
    n, k = table.n, table.k
    esp = np.full((n + 1, k + 1), -np.inf)
    esp[0, 0] = 0.0
    for m in range(1, n + 1):
        esp[m] = _log_esp_step(esp[m - 1], np.asarray(log_w[m - 1]))
    return StepWeights(log_w=log_w, k=k, log_esp=esp)


def _level_factors(table: FieldTable, beta: float):
    """Per occupied level: (l, r, log coefficients of (1 + w x)^g up to x^k)."""
    k = table.k
    out = []
    for l, r, energy, g in table.levels():
        t = np.arange(min(g, k) + 1)
        coeff = np.full(k + 1, -np.inf)
        coeff[: len(t)] = log_binom_array(g, t) - beta * energy * t
        out.append((l, r, coeff))
    return out


def _log_convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    k = len(a) - 1
    j = np.arange(k + 1)[:, None]
    t = np.arange(k + 1)[None, :]
    shifted = np.where(j >= t, a[np.clip(j - t, 0, k)], -np.inf)
    return logsumexp(shifted + b[None, :], axis=1)


def _level_prefix(table: FieldTable, beta: float):
    factors = _level_factors(table, beta)
    prefix = [np.concatenate([[0.0], np.full(table.k, -np.inf)])]
    for _, _, coeff in factors:
        prefix.append(_log_convolve(prefix[-1], coeff))
    return factors, prefix


def ground_state(table: FieldTable) -> Tuple[float, float]:
    """(minimal H(σ, ·), ln of the number of minimal-energy τ)."""
    ordered = np.sort(table.fields)
    k = table.k
    threshold = ordered[k - 1]
    below = int(np.count_nonzero(table.fields < threshold - ZERO_TOL))
    ties = int(np.count_nonzero(np.abs(table.fields - threshold) <= ZERO_TOL))
    return float(ordered[:k].sum()), log_binom(ties, k - below)


def log_z_sigma(table: FieldTable, beta: float, method: str = "levels") -> float:
    """ln Z_σ; at β = inf, ln of the number of minimal-energy τ."""
    _check_beta(beta)
    if math.isinf(beta):
        return ground_state(table)[1]
    if method == "sites":
        return step_weights(table, beta).log_z
    if method == "levels":
        return float(_level_prefix(table, beta)[1][-1][table.k])
    raise ValueError(f"unknown method {method!r}")


# ---------- one step ----------
def _sample_ground(table: FieldTable, rng: np.random.Generator) -> Configuration:
    k = table.k
    threshold = np.sort(table.fields)[k - 1]
    below = np.flatnonzero(table.fields < threshold - ZERO_TOL)
    ties = np.flatnonzero(np.abs(table.fields - threshold) <= ZERO_TOL)
    chosen = rng.choice(ties, size=k - len(below), replace=False)
    return Configuration.of(np.concatenate([below, chosen]))


def _sample_sites(table: FieldTable, beta: float, rng: np.random.Generator) -> Configuration:
    weights = step_weights(table, beta)
    esp, lw = weights.log_esp, weights.log_w
    j = table.k
    chosen = []
    for m in range(table.n, 0, -1):
        if j == 0:
            break
        include = math.exp(lw[m - 1] + esp[m - 1, j - 1] - esp[m, j])
        if rng.random() < include:
            chosen.append(m - 1)
            j -= 1
    return Configuration.of(chosen)


def _sample_levels(table: FieldTable, beta: float, rng: np.random.Generator) -> Configuration:
    factors, prefix = _level_prefix(table, beta)
    j = table.k
    chosen: List[int] = []
    for idx in range(len(factors) - 1, -1, -1):
        if j == 0:
            break
        l, r, coeff = factors[idx]
        t = np.arange(j + 1)
        logp = coeff[t] + prefix[idx][j - t] - prefix[idx + 1][j]
        probs = np.exp(logp - logsumexp(logp))
        take = int(rng.choice(len(t), p=probs))
        if take:
            chosen.extend(rng.choice(table.level_sites(l, r), size=take, replace=False).tolist())
        j -= take
    return Configuration.of(chosen)


def sample_step(table: FieldTable, beta: float, rng: np.random.Generator, method: str = "levels") -> Configuration:
    """Draw τ with probability exp(−βH(σ, τ))/Z_σ."""
    _check_beta(beta)
    if math.isinf(beta):
        return _sample_ground(table, rng)
    if method == "levels":
        return _sample_levels(table, beta, rng)
    if method == "sites":
        return _sample_sites(table, beta, rng)
    raise ValueError(f"unknown method {method!r}")


def sample_many(table: FieldTable, beta: float, rng: np.random.Generator, size: int) -> np.ndarray:
    """``size`` independent draws as a (size, n) boolean matrix, vectorised over draws."""
    _check_beta(beta)
    if math.isinf(beta):
        rows = [_sample_ground(table, rng).mask(table.n) for _ in range(size)]
        return np.array(rows, dtype=bool)
    weights = step_weights(table, beta)
    esp, lw = weights.log_esp, weights.log_w
    remaining = np.full(size, table.k)
    out = np.zeros((size, table.n), dtype=bool)
    for m in range(table.n, 0, -1):
        active = remaining > 0
        if not active.any():
            break
        j = np.where(active, remaining, 1)
        with np.errstate(invalid="ignore"):
            include = np.exp(lw[m - 1] + esp[m - 1, j - 1] - esp[m, j])
        take = active & (rng.random(size) < include)
        out[take, m - 1] = True
        remaining -= take
    return out


# ---------- chains ----------
@dataclass
class Trajectory:
    states: List[Configuration]
    energies: List[float] = field(default_factory=list)
    overlaps: List[int] = field(default_factory=list)
    log_z: List[float] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.states) - 1

    def rows(self):
        for t in range(self.steps):
            yield t, self.energies[t], self.overlaps[t], self.log_z[t], self.states[t + 1].to_line()


def random_configuration(n: int, k: int, rng: np.random.Generator) -> Configuration:
    return Configuration.of(rng.choice(n, size=k, replace=False))


def run_chain(graph: Graph, params: ModelParams, steps: int, seed,
              initial: Optional[Configuration] = None, method: str = "levels") -> Trajectory:
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if graph.n != params.n:
        raise ValueError(f"graph has n={graph.n}, params have n={params.n}")
    rng = make_rng(seed)
    sigma = initial if initial is not None else random_configuration(graph.n, params.k, rng)
    if sigma.k != params.k:
        raise ValueError("initial configuration has the wrong size")
    traj = Trajectory(states=[sigma])
    for _ in range(steps):
        table = cavity_fields(graph, sigma, params.h)
        traj.log_z.append(log_z_sigma(table, params.beta, method))
        tau = sample_step(table, params.beta, rng, method)
        traj.energies.append(float(table.fields[list(tau.vertices)].sum()))
        traj.overlaps.append(sigma.overlap(tau))
        traj.states.append(tau)
        sigma = tau
    LOG.debug("chain finished: %d steps, final energy %.6g", steps, traj.energies[-1])
    return traj


def detect_oscillation(traj: Trajectory, window: int) -> Tuple[bool, bool]:
    """(period2, fixed) over the trailing ``window`` transitions."""
    if window < 1 or window > traj.steps:
        raise ValueError("window must satisfy 1 <= window <= trajectory length")
    tail = traj.states[-(window + 1):]
    fixed = all(a == b for a, b in zip(tail, tail[1:]))
    period2 = (
        window >= 2
        and all(a != b for a, b in zip(tail, tail[1:]))
        and all(a == c for a, c in zip(tail, tail[2:]))
    )
    return period2, fixed


def locking_step(traj: Trajectory, window: int) -> Optional[int]:
    """First t at which transitions t-window+1..t form an unbroken σ↔σ′ alternation."""
    run = 0
    states = traj.states
    for t in range(1, len(states)):
        alternating = states[t] != states[t - 1] and (t < 2 or states[t] == states[t - 2])
        run = run + 1 if alternating else (1 if states[t] != states[t - 1] else 0)
        if run >= window:
            return t
    return None


# ---------- exact enumeration ----------
def all_configurations(n: int, k: int, cap: Optional[int] = None) -> np.ndarray:
    """Boolean (C(n,k), n) matrix of every configuration, lexicographic."""
    count = math.comb(n, k)
    cap = cap if cap is not None else config.enumeration_cap()
    if count > cap:
        raise BudgetExceeded("configurations", count, cap)
    masks = np.zeros((count, n), dtype=bool)
    for row, vs in enumerate(combinations(range(n), k)):
        masks[row, list(vs)] = True
    return masks


def _all_fields(graph: Graph, masks: np.ndarray, h: float) -> np.ndarray:
    counts = masks.astype(np.int64) @ graph.missing.astype(np.int64)
    return counts + h * (~masks)


def _batch_log_z(fields: np.ndarray, k: int, beta: float) -> np.ndarray:
    """ln Z_σ for every row of a (N, n) field matrix."""
    if math.isinf(beta):
        ordered = np.sort(fields, axis=1)
        threshold = ordered[:, k - 1:k]
        below = np.count_nonzero(fields < threshold - ZERO_TOL, axis=1)
        ties = np.count_nonzero(np.abs(fields - threshold) <= ZERO_TOL, axis=1)
        log_count = gammaln(ties + 1) - gammaln(k - below + 1) - gammaln(ties - (k - below) + 1)
        return np.where(ordered[:, :k].sum(axis=1) <= ZERO_TOL, log_count, -np.inf)
    lw = -beta * fields
    esp = np.full((fields.shape[0], k + 1), -np.inf)
    esp[:, 0] = 0.0
    for m in range(fields.shape[1]):
        esp = _log_esp_step(esp, lw[:, m])
    return esp[:, k]


def log_z_all(graph: Graph, params: ModelParams, cap: Optional[int] = None) -> np.ndarray:
    """ln Z_σ for every configuration; at β = inf only zero-energy τ count."""
    masks = all_configurations(graph.n, params.k, cap)
    return _batch_log_z(_all_fields(graph, masks, params.h), params.k, params.beta)


def log_partition(graph: Graph, params: ModelParams, method: str = "fields", cap: Optional[int] = None) -> float:
    """ln Z = ln Σ_{σ,τ} exp(−βH(σ, τ)); at β = inf, ln N₀."""
    _check_beta(params.beta)
    if method == "fields":
        return float(logsumexp(log_z_all(graph, params, cap)))
    if method == "pairs":
        return float(logsumexp(_log_kernel_weights(graph, params, cap)))
    raise ValueError(f"unknown method {method!r}")


def _log_kernel_weights(graph: Graph, params: ModelParams, cap: Optional[int] = None) -> np.ndarray:
    """−βH(σ, τ) for every ordered pair, by direct pair enumeration."""
    masks = all_configurations(graph.n, params.k, cap if cap is not None else config.kernel_cap())
    m = masks.astype(np.int64)
    h0 = m @ graph.missing.astype(np.int64) @ m.T
    q = m @ m.T
    energy = h0 + params.h * (params.k - q)
    if math.isinf(params.beta):
        return np.where(np.abs(energy) <= ZERO_TOL, 0.0, -np.inf)
    return -params.beta * energy


def transition_matrix(graph: Graph, params: ModelParams, cap: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """(P, μ) over all configurations, μ(σ) = Z_σ/Z."""
    logw = _log_kernel_weights(graph, params, cap)
    log_zs = logsumexp(logw, axis=1)
    kernel = np.exp(logw - log_zs[:, None])
    mu = np.exp(log_zs - logsumexp(log_zs))
    return kernel, mu


def invariant_measure(graph: Graph, params: ModelParams, cap: Optional[int] = None) -> np.ndarray:
    log_zs = log_z_all(graph, params, cap)
    return np.exp(log_zs - logsumexp(log_zs))


def stationary_check(graph: Graph, params: ModelParams, cap: Optional[int] = None) -> float:
    """‖μP − μ‖₁ over the full kernel."""
    kernel, mu = transition_matrix(graph, params, cap)
    return float(np.abs(mu @ kernel - mu).sum())


def detailed_balance_residual(graph: Graph, params: ModelParams, cap: Optional[int] = None) -> float:
    kernel, mu = transition_matrix(graph, params, cap)
    flow = mu[:, None] * kernel
    return float(np.abs(flow - flow.T).max())
