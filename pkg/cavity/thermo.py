# cavity/thermo.py
"""Closed-form thermodynamics of the pair measure.

f(β) = −ln[p + (1−p)e^{−β}] is the annealed weight exponent of one pair,
I_p its Legendre dual. Everything here is a pure function of the model
parameters; the random graph never enters.
"""
import logging
import math
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from scipy import optimize
from scipy.special import logsumexp, xlogy

from cavity.errors import NumericalFailure, PhaseBoundary
from cavity.numerics import log_binom
from cavity.schemas import (
    AnnealedBranches,
    AnnealedObservables,
    ModelParams,
    PhaseReport,
    XcInterval,
)

LOG = logging.getLogger(__name__)

ROOT_XTOL = 1e-13
ROOT_MAXITER = 200
BOUNDARY_RTOL = 1e-12


def _scalar_or_array(value):
    value = np.asarray(value, dtype=float)
    return float(value) if value.ndim == 0 else value


# ---------- f and I_p ----------
def f_eval(beta, p: float, order: int = 0):
    """f, f′ or f″ at β (β = inf allowed)."""
    if order not in (0, 1, 2):
        raise ValueError(f"order must be 0, 1 or 2, got {order}")
    b = np.asarray(beta, dtype=float)
    if np.any(np.isnan(b)) or np.any(b < 0):
        raise ValueError("beta must be >= 0")
    if order == 0:
        return _scalar_or_array(-np.log1p((1 - p) * np.expm1(-b)))
    tail = (1 - p) * np.exp(-b)
    x = tail / (p + tail)
    return _scalar_or_array(x if order == 1 else -x * (1 - x))


def beta_fprime(beta: float, p: float, scale: float = 1.0) -> float:
    """β·f′(scale·β), with the β = inf limit 0."""
    if math.isinf(beta):
        return 0.0
    return beta * f_eval(scale * beta, p, 1)


def rate_function(x, p: float, order: int = 0):
    """I_p(x) = x ln(x/(1−p)) + (1−x) ln((1−x)/p) and its first two derivatives."""
    if order not in (0, 1, 2):
        raise ValueError(f"order must be 0, 1 or 2, got {order}")
    x = np.asarray(x, dtype=float)
    if np.any(np.isnan(x)) or np.any(x < 0) or np.any(x > 1):
        raise ValueError("x must lie in [0, 1]")
    with np.errstate(divide="ignore"):
        if order == 0:
            value = xlogy(x, x) + xlogy(1 - x, 1 - x) - x * math.log(1 - p) - (1 - x) * math.log(p)
        elif order == 1:
            value = np.log(x) - np.log1p(-x) + math.log(p / (1 - p))
        else:
            value = 1.0 / (x * (1 - x))
    return _scalar_or_array(value)


def legendre_minimizer(beta: float, p: float) -> Tuple[float, float]:
    """argmin and min of I_p(x) + βx; the minimum is f(β) at x = f′(β)."""
    x_star = f_eval(beta, p, 1)
    if math.isinf(beta):
        return x_star, f_eval(beta, p)
    return x_star, rate_function(x_star, p) + beta * x_star


def legendre_numeric(beta: float, p: float, points: int = 10_000) -> Tuple[float, float]:
    """Grid scan of I_p(x) + βx refined by bounded Brent minimisation."""
    grid = np.linspace(0.0, 1.0, points)
    values = rate_function(grid, p) + beta * grid
    i = int(np.argmin(values))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, points - 1)]
    res = optimize.minimize_scalar(
        lambda x: rate_function(x, p) + beta * x,
        bounds=(lo, hi), method="bounded", options={"xatol": 1e-12},
    )
    return float(res.x), float(res.fun)


def concavity_margins(betas, p: float) -> Dict[str, float]:
    """Smallest margin of each f inequality over a β grid; all must be positive."""
    b = np.asarray(betas, dtype=float)

    def f(m):
        return f_eval(m * b, p)

    margins = {f"f(b)-f({l}b)/{l}": f(1) - f(l) / l for l in (2, 3, 4)}
    margins["f(b)+f(2b)-f(3b)"] = f(1) + f(2) - f(3)
    margins["f(2b)+f(3b)-f(b)-f(4b)"] = f(2) + f(3) - f(1) - f(4)
    margins["f(b)+f(3b)-f(2b)-f(4b)/2"] = f(1) + f(3) - f(2) - f(4) / 2
    return {name: float(np.min(v)) for name, v in margins.items()}


def positive_entropy_interval(c: float, p: float) -> XcInterval:
    """Endpoints of {x : I_p(x) < ln(1/p)/c} on either side of 1 − p."""
    if c <= 0:
        raise ValueError("c must be positive")
    threshold = -math.log(p) / c

    def gap(x):
        return rate_function(x, p) - threshold

    lower = 0.0 if gap(0.0) <= 0 else _bisect(gap, 0.0, 1 - p)
    upper = 1.0 if gap(1.0) <= 0 else _bisect(gap, 1 - p, 1.0)
    return XcInterval(lower=lower, upper=upper, threshold=threshold)


# ---------- root finding ----------
def _bisect(func: Callable[[float], float], lo: float, hi: float) -> float:
    try:
        root, info = optimize.bisect(func, lo, hi, xtol=ROOT_XTOL, maxiter=ROOT_MAXITER, full_output=True, disp=False)
    except (RuntimeError, ValueError) as exc:
        raise NumericalFailure(f"bisection failed on [{lo}, {hi}]: {exc}") from exc
    if not info.converged:
        raise NumericalFailure(f"bisection did not converge on [{lo}, {hi}]")
    return float(root)


def _decreasing_root(func: Callable[[float], float]) -> float:
    """Root of a function positive at 0 and eventually negative."""
    hi = 1.0
    for _ in range(ROOT_MAXITER):
        if func(hi) < 0:
            return _bisect(func, 0.0, hi)
        hi *= 2.0
    raise NumericalFailure("no sign change found while bracketing")


# ---------- critical lines ----------
def htilde_c(beta: float, p: float, c: float) -> float:
    if beta == 0:
        # limit β → 0: the bracket tends to ln(1/p)/c > 0
        return math.inf
    return (f_eval(2 * beta, p) / 2 - f_eval(beta, p) - math.log(p) / c) / beta


def entropy_balance(beta: float, p: float, c: float) -> float:
    """C(β) = ln(1/p)/c − f(β) + βf′(β); strictly decreasing, zero at β_c."""
    return -math.log(p) / c - f_eval(beta, p) + beta_fprime(beta, p)


def beta_c(p: float, c: float) -> Optional[float]:
    if c <= 1:
        return None
    return _decreasing_root(lambda b: entropy_balance(b, p, c))


def bar_beta_c(p: float, c: float) -> Optional[float]:
    if c <= 2:
        return None
    level = -math.log(p) / c
    return _decreasing_root(lambda b: level - (f_eval(2 * b, p) - f_eval(4 * b, p) / 2))


def hat_beta_c(p: float, c: float) -> Optional[float]:
    if c <= 2:
        return None
    level = -math.log(p) / c
    return _decreasing_root(lambda b: level - (f_eval(2 * b, p) - 2 * beta_fprime(b, p, 4)))


def critical_lines(params: ModelParams) -> PhaseReport:
    params.require_c_above_one()
    p, c = params.p, params.c
    return PhaseReport(
        htilde_c=htilde_c(params.beta, p, c),
        beta_c=beta_c(p, c),
        bar_beta_c=bar_beta_c(p, c),
        hat_beta_c=hat_beta_c(p, c),
    )


def _on_boundary(a: float, b: Optional[float]) -> bool:
    return b is not None and math.isclose(a, b, rel_tol=BOUNDARY_RTOL, abs_tol=1e-15)


def phase_classify(params: ModelParams) -> PhaseReport:
    report = critical_lines(params)
    p, beta, ht = params.p, params.beta, params.htilde
    lc = params.log_inv_p / params.c
    if _on_boundary(ht, report.htilde_c):
        return report.model_copy(update={"region": "boundary", "notes": ["htilde equals htilde_c: first-order line"]})
    if ht > report.htilde_c:
        return report.model_copy(update={
            "region": "A",
            "energy_density": f_eval(2 * beta, p, 1),
            "energy_variance_density": -f_eval(2 * beta, p, 2),
            "overlap_density": 1.0,
            "entropy_density": lc - f_eval(2 * beta, p) / 2 + beta_fprime(beta, p, 2),
            "log_z_density": lc - f_eval(2 * beta, p) / 2,
        })
    if _on_boundary(beta, report.beta_c):
        return report.model_copy(update={"region": "boundary", "notes": ["beta equals beta_c"]})
    region = "B" if beta > report.beta_c else "C"
    entropy = 2 * lc - f_eval(beta, p) + beta_fprime(beta, p) if region == "B" else lc
    return report.model_copy(update={
        "region": region,
        "energy_density": f_eval(beta, p, 1) + ht,
        "energy_variance_density": -f_eval(beta, p, 2),
        "overlap_density": 0.0,
        "entropy_density": entropy,
        "log_z_density": 2 * lc - f_eval(beta, p) - beta * ht,
    })


# ---------- annealed partition function ----------
def energy_term(beta: float, energy):
    """−β·energy with the β = inf convention that zero energy costs nothing."""
    energy = np.asarray(energy, dtype=float)
    with np.errstate(invalid="ignore"):
        return np.where(energy == 0, 0.0, -beta * energy)


def theta(q: int, n, k: int) -> float:
    """ln of the number of ordered pairs (σ, τ) with overlap q."""
    return log_binom(n, 2 * k - q) + log_binom(2 * k - q, q) + log_binom(2 * (k - q), k - q)


def phi(q, params: ModelParams):
    """ln E e^{−βH} for one pair of overlap q."""
    q = np.asarray(q, dtype=float)
    k, beta, p = params.k, params.beta, params.p
    value = (
        energy_term(beta, params.h * (k - q))
        - f_eval(beta, p) * (k * k - q * q)
        - f_eval(2 * beta, p) * q * (q - 1) / 2
    )
    return _scalar_or_array(value)


def annealed_terms(params: ModelParams) -> Tuple[np.ndarray, np.ndarray]:
    """(q, Θ(q) + Φ(q)) for q = 0..k."""
    if 2 * params.k > params.n:
        raise ValueError("exact annealed sum needs 2k <= n")
    q = np.arange(params.k + 1)
    entropic = np.array([theta(int(x), params.n, params.k) for x in q])
    return q, entropic + phi(q, params)


def _log_z_missing_links(params: ModelParams) -> float:
    # count pairs by missing links l1 inside the overlap and l2 across the rest
    k, beta, p = params.k, params.beta, params.p
    logs = []
    for q in range(k + 1):
        inner, cross = q * (q - 1) // 2, k * k - q * q
        l1 = np.arange(inner + 1)
        l2 = np.arange(cross + 1)
        log_n1 = np.array([log_binom(inner, x) for x in l1]) + l1 * math.log1p(-p) + (inner - l1) * math.log(p)
        log_n2 = np.array([log_binom(cross, x) for x in l2]) + l2 * math.log1p(-p) + (cross - l2) * math.log(p)
        w1 = logsumexp(log_n1 + energy_term(beta, 2 * l1))
        w2 = logsumexp(log_n2 + energy_term(beta, l2))
        logs.append(theta(q, params.n, k) + w1 + w2 + float(energy_term(beta, params.h * (k - q))))
    return float(logsumexp(logs))


def annealed_branches(params: ModelParams) -> AnnealedBranches:
    """Both asymptotic expressions for ln E Z, through the k ln k terms."""
    params.require_c_above_one()
    k, p, beta = params.k, params.p, params.beta
    lc = params.log_inv_p / params.c
    ordered = k * k * lc + k - f_eval(2 * beta, p) * k * (k - 1) / 2 - k * math.log(k)
    disordered = (
        2 * k * k * lc + 2 * k + float(energy_term(beta, params.htilde * k * k))
        - f_eval(beta, p) * k * k - 2 * k * math.log(k)
    )
    region = phase_classify(params).region
    return AnnealedBranches(region=region, ordered=ordered, disordered=disordered)


def annealed_log_z(params: ModelParams, mode: str = "exact-sum") -> float:
    if mode == "exact-sum":
        return float(logsumexp(annealed_terms(params)[1]))
    if mode == "missing-links":
        if 2 * params.k > params.n:
            raise ValueError("exact annealed sum needs 2k <= n")
        return _log_z_missing_links(params)
    if mode == "asymptotic":
        branches = annealed_branches(params)
        critical = htilde_c(params.beta, params.p, params.c)
        if _on_boundary(params.htilde, critical):
            raise PhaseBoundary("htilde equals htilde_c; both branches are in annealed_branches")
        return branches.ordered if params.htilde > critical else branches.disordered
    raise ValueError(f"unknown mode {mode!r}")


def argmax_overlap(params: ModelParams) -> int:
    params.require_c_above_one()
    q, terms = annealed_terms(params)
    order = np.argsort(terms)[::-1]
    best, runner = terms[order[0]], terms[order[1]] if len(order) > 1 else -math.inf
    if math.isclose(best, runner, rel_tol=1e-12, abs_tol=1e-12):
        raise NumericalFailure(f"argmax tie between q={int(q[order[0]])} and q={int(q[order[1]])}")
    return int(q[order[0]])


def finite_size_htilde_c(params: ModelParams) -> float:
    """The h̃ at which the q = k and q = 0 exact-sum terms are equal."""
    n, k, p, beta = params.n, params.k, params.p, params.beta
    if beta == 0:
        return math.inf
    gap = (
        theta(0, n, k) - theta(k, n, k)
        - f_eval(beta, p) * k * k
        + f_eval(2 * beta, p) * k * (k - 1) / 2
    )
    return gap / (beta * k * k)


def annealed_observables(params: ModelParams) -> AnnealedObservables:
    """Mean energy, energy variance and mean overlap of the annealed pair measure."""
    q, terms = annealed_terms(params)
    w = np.exp(terms - logsumexp(terms))
    k, p, beta = params.k, params.p, params.beta
    qf = q.astype(float)
    d_phi = -params.h * (k - qf) - f_eval(beta, p, 1) * (k * k - qf * qf) - f_eval(2 * beta, p, 1) * qf * (qf - 1)
    d2_phi = -f_eval(beta, p, 2) * (k * k - qf * qf) - 2 * f_eval(2 * beta, p, 2) * qf * (qf - 1)
    mean = float(np.dot(w, -d_phi))
    variance = float(np.dot(w, d_phi ** 2) - np.dot(w, d_phi) ** 2 + np.dot(w, d2_phi))
    return AnnealedObservables(mean_energy=mean, energy_variance=variance, mean_overlap=float(np.dot(w, qf)))


def annealed_entropy_density(params: ModelParams) -> float:
    """(ln E Z + β·mean energy)/k² from the exact sum."""
    obs = annealed_observables(params)
    heat = 0.0 if obs.mean_energy == 0 else params.beta * obs.mean_energy
    return (annealed_log_z(params) + heat) / params.k ** 2
