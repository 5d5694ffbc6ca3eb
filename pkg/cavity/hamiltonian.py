# cavity/hamiltonian.py
"""Cavity fields, the pair Hamiltonian and typical-pair diagnostics."""
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from cavity import thermo
from cavity.graph import Configuration, Graph
from cavity.schemas import ModelParams, PairDiagnostics

DEFAULT_DELTA = 0.05


@dataclass(frozen=True, eq=False)
class FieldTable:
    """Cavity fields h_i(σ) and the Fermi level table they induce.

    Site i sits on level (l, r): l missing links to σ (σ \\ {i} when i ∈ σ)
    and r = 1 when i ∉ σ. The level energy is e_{l,r} = l + r·h.
    """

    fields: np.ndarray
    counts: np.ndarray
    in_sigma: np.ndarray
    k: int
    h: float
    degeneracy: np.ndarray = field(repr=False)  # shape (k + 1, 2)

    @property
    def n(self) -> int:
        return len(self.fields)

    def level_energy(self, l: int, r: int) -> float:
        return l + r * self.h

    def level_sites(self, l: int, r: int) -> np.ndarray:
        outside = ~self.in_sigma if r else self.in_sigma
        return np.flatnonzero(outside & (self.counts == l))

    def levels(self) -> List[Tuple[int, int, float, int]]:
        """Occupied levels as (l, r, energy, degeneracy)."""
        return [
            (l, r, self.level_energy(l, r), int(self.degeneracy[l, r]))
            for r in (0, 1)
            for l in range(self.k + 1)
            if self.degeneracy[l, r] > 0
        ]

    def occupations(self, tau: Configuration) -> np.ndarray:
        """n_{l,r}: how many sites of τ sit on each level."""
        mask = tau.mask(self.n)
        occ = np.zeros_like(self.degeneracy)
        np.add.at(occ, (self.counts[mask], (~self.in_sigma[mask]).astype(int)), 1)
        return occ


def cavity_fields(graph: Graph, sigma: Configuration, h: float) -> FieldTable:
    mask = sigma.mask(graph.n)
    counts = graph.missing[:, mask].sum(axis=1).astype(np.int64)
    fields = counts + h * (~mask)
    k = sigma.k
    degeneracy = np.zeros((k + 1, 2), dtype=np.int64)
    degeneracy[:, 0] = np.bincount(counts[mask], minlength=k + 1)[: k + 1]
    degeneracy[:, 1] = np.bincount(counts[~mask], minlength=k + 1)[: k + 1]
    return FieldTable(fields=fields, counts=counts, in_sigma=mask, k=k, h=float(h), degeneracy=degeneracy)


def fermi_energy(table: FieldTable, tau: Configuration) -> float:
    """Σ_{l,r} e_{l,r} n_{l,r}; equals H(σ, τ)."""
    occ = table.occupations(tau)
    energies = np.arange(table.k + 1)[:, None] + table.h * np.array([0, 1])[None, :]
    return float((energies * occ).sum())


def pair_energy(graph: Graph, sigma: Configuration, tau: Configuration, h: float) -> PairDiagnostics:
    if sigma.k != tau.k:
        raise ValueError(f"configuration sizes differ: {sigma.k} != {tau.k}")
    s, t = list(sigma.vertices), list(tau.vertices)
    # ordered sum over i ∈ σ, j ∈ τ; the zero diagonal drops i = j
    h0 = int(graph.missing[np.ix_(s, t)].sum())
    q = sigma.overlap(tau)
    return PairDiagnostics(q=q, H0=h0, H=h0 + h * (sigma.k - q))


def _phase_intervals(params: ModelParams, region: str, delta: float):
    p, beta = params.p, params.beta
    if region == "A":
        q_int = (1.0 - delta, 1.0)
        centre = thermo.f_eval(2 * beta, p, 1)
    else:
        q_int = (0.0, delta)
        centre = thermo.f_eval(beta, p, 1)
    h_int = (centre - delta, centre + delta)
    qbar_int = (1.0 - 2 * delta, 1.0) if region == "B" else (0.0, 1.0)
    return q_int, h_int, qbar_int


def _inside(x: float, interval) -> bool:
    return interval[0] <= x <= interval[1]


def typicality(graph: Graph, sigma: Configuration, tau: Configuration, params: ModelParams,
               delta: float = DEFAULT_DELTA) -> PairDiagnostics:
    if not 0.0 < delta < 0.5:
        raise ValueError("delta must lie in (0, 1/2)")
    diag = pair_energy(graph, sigma, tau, params.h)
    k, q = sigma.k, diag.q
    xc_threshold = params.log_inv_p / params.c

    s_only = sorted(set(sigma.vertices) - set(tau.vertices))
    t_only = sorted(set(tau.vertices) - set(sigma.vertices))
    qbar = 0
    if q < k:
        # density of missing links from each site of one side to the other side
        to_s = graph.missing[np.ix_(t_only, s_only)].sum(axis=1) / len(s_only)
        to_t = graph.missing[np.ix_(s_only, t_only)].sum(axis=1) / len(t_only)
        densities = np.concatenate([to_s, to_t])
        # outside X_c: no positive entropy at that density
        qbar = int(np.count_nonzero(thermo.rate_function(densities, params.p, 0) >= xc_threshold))
    ratio = 0.0 if q == k else qbar / (2 * (k - q))

    region = thermo.phase_classify(params).region
    in_set = None
    if region != "boundary":
        q_int, h_int, qbar_int = _phase_intervals(params, region, delta)
        in_set = _inside(q / k, q_int) and _inside(diag.H0 / k ** 2, h_int) and _inside(ratio, qbar_int)
    return diag.model_copy(update={"qbar": int(qbar), "qbar_ratio": ratio, "region": region, "in_typical_set": in_set})
