# cavity/fermi_entropy.py
"""Level statistics and configurational entropy in the Fermi-gas picture.

Sites outside σ sit on levels j = number of missing links to σ. Choosing
τ \\ σ is placing particles on those levels, at most one per site, so
counting τ with a given energy is a constrained occupation problem.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy import optimize, stats
from scipy.special import expit, gammaln, logsumexp, xlogy

from cavity import thermo
from cavity.errors import InfeasibleConstraints, NumericalFailure
from cavity.graph import Configuration, Graph
from cavity.hamiltonian import cavity_fields
from cavity.sampler import invariant_measure, log_z_all
from cavity.schemas import LevelStat, ModelParams, OccupationSolution, XcInterval

LOG = logging.getLogger(__name__)

BAND_SIGMAS = 5.0
# slack constants of the regime (B) and (C) entropy bounds; fitted once and frozen
A2 = 3.0
A3 = 3.0
RHO_POINTS = 41


# ---------- X_c ----------
def xc_set(c: float, p: float) -> XcInterval:
    """{x : I_p(x) < ln(1/p)/c} as an interval around 1 − p."""
    return thermo.positive_entropy_interval(c, p)


def xc_levels(k: int, p: float, interval: XcInterval) -> np.ndarray:
    """J_c: the levels j with j/k in X_c."""
    j = np.arange(k + 1)
    return j[thermo.rate_function(j / k, p) < interval.threshold]


# ---------- spectra ----------
@dataclass(frozen=True, eq=False)
class LevelSpectrum:
    degeneracies: np.ndarray
    offset: float = 0.0
    levels: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        g = np.asarray(self.degeneracies, dtype=float)
        if g.ndim != 1 or not len(g):
            raise ValueError("degeneracies must be a non-empty vector")
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise ValueError("degeneracies must be finite and non-negative")
        object.__setattr__(self, "degeneracies", g)
        object.__setattr__(self, "levels", np.arange(len(g), dtype=float))

    @property
    def total(self) -> float:
        return float(self.degeneracies.sum())

    def is_integral(self) -> bool:
        return bool(np.all(self.degeneracies == np.round(self.degeneracies)))

    def energy_range(self, particles: float) -> Tuple[float, float]:
        """Least and largest energy reachable with ``particles`` (fractional filling)."""
        def fill(order) -> float:
            remaining, energy = particles, 0.0
            for j in order:
                take = min(remaining, self.degeneracies[j])
                energy += take * (j + self.offset)
                remaining -= take
            return energy

        idx = np.flatnonzero(self.degeneracies > 0)
        return fill(idx), fill(idx[::-1])


def read_spectrum(path, offset: float = 0.0) -> LevelSpectrum:
    """Lines ``j g_j``; blank lines and ``#`` comments are skipped, absent levels are empty."""
    entries = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected 'j g_j'")
        j, g = int(parts[0]), float(parts[1])
        if j < 0 or j in entries:
            raise ValueError(f"line {lineno}: bad or repeated level {j}")
        entries[j] = g
    if not entries:
        raise ValueError("spectrum file has no levels")
    g = np.zeros(max(entries) + 1)
    for j, value in entries.items():
        g[j] = value
    return LevelSpectrum(g, offset)


def expected_spectrum(params: ModelParams) -> LevelSpectrum:
    """Mean r = 1 degeneracies (n − k)·C(k, j)(1 − p)^j p^(k − j)."""
    j = np.arange(params.k + 1)
    return LevelSpectrum((params.n - params.k) * stats.binom.pmf(j, params.k, 1 - params.p))


def degeneracy_stats(graph: Graph, sigma: Configuration, params: ModelParams,
                     delta: float = 0.05) -> List[LevelStat]:
    k, p = sigma.k, params.p
    table = cavity_fields(graph, sigma, params.h)
    observed = table.degeneracy[:, 1]
    j = np.arange(k + 1)
    pmf = stats.binom.pmf(j, k, 1 - p)
    outside = graph.n - k
    expected = outside * pmf
    std = np.sqrt(outside * pmf * (1 - pmf))
    c = params.c
    interval = xc_set(c, p)
    jc = set(xc_levels(k, p, interval).tolist())
    rate = thermo.rate_function(j / k, p)
    report = []
    for level in j:
        obs = int(observed[level])
        band = BAND_SIGMAS * std[level]
        if level in jc:
            lower = math.exp(k * (-delta + interval.threshold - rate[level]))
            upper = math.exp(k * (delta + interval.threshold - rate[level]))
        else:
            lower, upper = 0.0, math.exp(k * delta)
        report.append(LevelStat(
            j=int(level), observed=obs, expected=float(expected[level]), std=float(std[level]),
            within_band=bool(abs(obs - expected[level]) <= band),
            in_jc=level in jc, lemma_lower=lower, lemma_upper=upper,
            lemma_ok=bool(lower <= obs <= upper),
        ))
    return report


# ---------- occupation solver ----------
def binary_entropy_term(x):
    """ℰ(x) = x ln x + (1 − x) ln(1 − x), zero at both ends."""
    x = np.asarray(x, dtype=float)
    return xlogy(x, x) + xlogy(1 - x, 1 - x)


def _brentq(func: Callable[[float], float], lo: float, hi: float) -> float:
    try:
        return float(optimize.brentq(func, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500))
    except (RuntimeError, ValueError) as exc:
        raise NumericalFailure(f"root finding failed on [{lo}, {hi}]: {exc}") from exc


def _bracket(func: Callable[[float], float], centre: float) -> Tuple[float, float]:
    """Bracket the root of a decreasing function by doubling away from ``centre``."""
    step = 1.0
    for _ in range(200):
        lo, hi = centre - step, centre + step
        if func(lo) > 0 > func(hi):
            return lo, hi
        if func(lo) == 0:
            return lo, lo
        if func(hi) == 0:
            return hi, hi
        step *= 2.0
    raise NumericalFailure("could not bracket a Lagrange multiplier")


def _solve_decreasing(func: Callable[[float], float], centre: float) -> float:
    lo, hi = _bracket(func, centre)
    return lo if lo == hi else _brentq(func, lo, hi)


def occupation_solve(spectrum: LevelSpectrum, particles: float, energy: float,
                     tol: float = 1e-10) -> OccupationSolution:
    """Fermi occupations x_j = 1/(1 + e^{λ + μ j}) meeting particle number and energy."""
    g = spectrum.degeneracies
    active = g > 0
    if not 0 < particles < spectrum.total:
        raise InfeasibleConstraints(
            f"particle number {particles} outside (0, {spectrum.total})", attainable=(0.0, spectrum.total)
        )
    e_min, e_max = spectrum.energy_range(particles)
    target = energy - particles * spectrum.offset
    j = spectrum.levels
    js = j[active]
    gs = g[active]

    if len(gs) == 1:
        if not math.isclose(energy, e_min, rel_tol=tol, abs_tol=tol):
            raise InfeasibleConstraints(
                f"energy {energy} not attainable with one level", attainable=(e_min, e_max)
            )
        mu = 0.0
        lam = math.log(gs[0] / particles - 1.0)
    else:
        if not e_min < energy < e_max:
            raise InfeasibleConstraints(
                f"energy {energy} outside the attainable range ({e_min}, {e_max})", attainable=(e_min, e_max)
            )

        def lam_for(mu_value: float) -> float:
            def excess(lam_value):
                return float(np.dot(gs, expit(-(lam_value + mu_value * js)))) - particles

            return _solve_decreasing(excess, -mu_value * float(np.median(js)))

        def energy_excess(mu_value: float) -> float:
            x = expit(-(lam_for(mu_value) + mu_value * js))
            return float(np.dot(gs * js, x)) - target

        mu = _solve_decreasing(energy_excess, 0.0)
        lam = lam_for(mu)

    x = np.zeros_like(g)
    x[active] = expit(-(lam + mu * js))
    n_found = float(np.dot(g, x))
    e_found = float(np.dot(g * j, x))
    entropy = float(-np.dot(g, binary_entropy_term(x)))
    solution = OccupationSolution(
        lam=lam, mu=mu, occupations=x.tolist(), entropy=entropy,
        residual_particles=abs(n_found - particles) / particles,
        residual_energy=abs(e_found - target) / max(abs(target), 1.0),
    )
    LOG.debug("occupation solve: lam=%.6g mu=%.6g entropy=%.6g", lam, mu, entropy)
    return solution


# ---------- exact counts ----------
def exact_log_count(spectrum: LevelSpectrum, particles: int, energy) -> float:
    """ln Σ Π_j C(g_j, n_j) over occupations with Σn_j = particles and Σ j n_j = energy − particles·offset."""
    if not spectrum.is_integral():
        raise ValueError("exact counting needs integer degeneracies")
    target = energy - particles * spectrum.offset
    if abs(target - round(target)) > 1e-9:
        return -math.inf
    target = int(round(target))
    if particles < 0 or target < 0:
        return -math.inf
    dp = np.full((particles + 1, target + 1), -np.inf)
    dp[0, 0] = 0.0
    for level, g in enumerate(spectrum.degeneracies.astype(int)):
        if g == 0:
            continue
        nxt = dp.copy()
        for t in range(1, min(g, particles) + 1):
            if t * level > target:
                break
            weight = float(gammaln(g + 1) - gammaln(t + 1) - gammaln(g - t + 1))
            shifted = np.full_like(dp, -np.inf)
            shifted[t:, t * level:] = dp[:particles + 1 - t, :target + 1 - t * level] + weight
            nxt = np.logaddexp(nxt, shifted)
        dp = nxt
    return float(dp[particles, target])


def log_count_bounds(spectrum: LevelSpectrum, particles: float, energy: float) -> Tuple[float, float]:
    """Stirling sandwich around the exact log count: (lower, upper = maximal entropy)."""
    upper = occupation_solve(spectrum, particles, energy).entropy
    g = spectrum.degeneracies
    top = float(spectrum.levels[g > 0].max())
    correction = (
        float(np.sum(np.log1p(g[g > 0])))
        + math.log1p(spectrum.total)
        + math.log1p(spectrum.total * top)
    )
    return upper - correction, upper


# ---------- configurational entropy ----------
def spectrum_entropy(spectrum: LevelSpectrum, k: int, alpha: float, rho: float, delta: float,
                     points: int = RHO_POINTS) -> float:
    """(1/k²)·(k ln 2 + max over ρ′ ∈ [ρ − δ, ρ + 2δ] of ln N₁), −inf if no ρ′ is feasible."""
    if not 0.0 <= alpha <= 1.0 or not 0.0 <= rho <= 1.0:
        raise ValueError("alpha and rho must lie in [0, 1]")
    subset_bound = k * math.log(2.0)
    particles = (1.0 - alpha) * k
    if particles == 0:
        return subset_bound / k ** 2
    best = -math.inf
    for rho_prime in np.linspace(max(rho - delta, 0.0), min(rho + 2 * delta, 1.0), points):
        try:
            s = occupation_solve(spectrum, particles, particles * k * rho_prime).entropy
        except InfeasibleConstraints:
            continue
        best = max(best, s)
    if math.isinf(best):
        return -math.inf
    return (subset_bound + best) / k ** 2


def entropy_estimate(graph: Graph, sigma: Configuration, params: ModelParams, alpha: float, rho: float,
                     delta: float = 0.05) -> float:
    """Upper estimate of (1/k²) ln N(σ, α, ρ) from the empirical r = 1 spectrum."""
    table = cavity_fields(graph, sigma, params.h)
    spectrum = LevelSpectrum(table.degeneracy[:, 1].astype(float))
    return spectrum_entropy(spectrum, sigma.k, alpha, rho, delta)


def entropy_bound(params: ModelParams, delta: float) -> Optional[float]:
    """The regime cap on the estimate: a₂δ in (B), ln(1/p)/c − I_p(f′(β)) + a₃δ in (C)."""
    region = thermo.phase_classify(params).region
    if region == "B":
        return A2 * delta
    if region == "C":
        x = thermo.f_eval(params.beta, params.p, 1)
        return params.log_inv_p / params.c - thermo.rate_function(x, params.p) + A3 * delta
    return None


def configurational_entropy(graph: Graph, params: ModelParams, method: str = "direct") -> float:
    """S = −Σ μ(σ) ln μ(σ) of the invariant measure."""
    if method == "direct":
        mu = invariant_measure(graph, params)
        return float(-np.sum(xlogy(mu, mu)))
    if method == "free-energy":
        log_zs = log_z_all(graph, params)
        log_z = float(logsumexp(log_zs))
        weights = np.exp(log_zs - log_z)
        return log_z - float(np.sum(np.where(weights > 0, weights * log_zs, 0.0)))
    raise ValueError(f"unknown method {method!r}")
