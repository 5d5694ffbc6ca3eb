import math

import numpy as np
import pytest

from cavity import graph, sampler, thermo
from cavity.errors import PhaseBoundary
from cavity.schemas import ModelParams

LN2 = math.log(2)


# ---------- f and I_p ----------
def test_f_limits_and_closed_form():
    assert thermo.f_eval(0.0, 0.3) == 0.0
    assert thermo.f_eval(math.inf, 0.5) == pytest.approx(LN2)
    assert thermo.f_eval(math.log(3), 0.5, 1) == pytest.approx(0.25)
    assert thermo.f_eval(0.0, 0.3, 1) == pytest.approx(0.7)
    with pytest.raises(ValueError):
        thermo.f_eval(-1.0, 0.5)
    with pytest.raises(ValueError):
        thermo.f_eval(1.0, 0.5, order=3)


def test_rate_function_values():
    p = 0.3
    assert thermo.rate_function(1 - p, p) == pytest.approx(0.0, abs=1e-15)
    assert thermo.rate_function(0.0, p) == pytest.approx(-math.log(p))
    assert thermo.rate_function(1.0, p) == pytest.approx(-math.log(1 - p))
    assert thermo.rate_function(0.25, 0.5) == pytest.approx(0.130812, abs=1e-6)
    with pytest.raises(ValueError):
        thermo.rate_function(1.2, p)


def test_legendre_pair():
    assert thermo.legendre_minimizer(0.0, 0.4) == pytest.approx((0.6, 0.0))
    x_star, value = thermo.legendre_minimizer(math.log(3), 0.5)
    assert x_star == pytest.approx(0.25)
    assert value == pytest.approx(thermo.f_eval(math.log(3), 0.5))


@pytest.mark.parametrize("beta, p", [(0.3, 0.5), (1.0, 0.2), (2.5, 0.8)])
def test_legendre_gap_is_non_negative_and_vanishes_at_the_minimiser(beta, p):
    grid = np.linspace(0.0, 1.0, 10_000)
    gap = thermo.rate_function(grid, p) + beta * grid - thermo.f_eval(beta, p)
    assert gap.min() >= -1e-12
    x_num, v_num = thermo.legendre_numeric(beta, p)
    x_star, v_star = thermo.legendre_minimizer(beta, p)
    assert x_num == pytest.approx(x_star, abs=1e-6)
    assert v_num == pytest.approx(v_star, abs=1e-10)


@pytest.mark.parametrize("p", [0.2, 0.5, 0.8])
def test_rate_function_curvature(p):
    x = np.linspace(0.001, 0.999, 999)
    curvature = thermo.rate_function(x, p, order=2)
    assert curvature.min() >= 2
    assert curvature.min() == pytest.approx(4.0)


@pytest.mark.parametrize("p", [0.2, 0.5, 0.8])
def test_concavity_margins_are_positive(p):
    margins = thermo.concavity_margins(np.linspace(0.01, 20.0, 400), p)
    assert len(margins) == 6
    assert min(margins.values()) > 0


def test_positive_entropy_interval():
    xc = thermo.positive_entropy_interval(2.0, 0.5)
    assert xc.lower == pytest.approx(0.1100, abs=1e-4)
    assert xc.upper == pytest.approx(1 - xc.lower, abs=1e-10)
    assert thermo.positive_entropy_interval(1.0, 0.5).lower == 0.0


# ---------- critical lines ----------
def test_htilde_c_value():
    assert thermo.htilde_c(1.0, 0.5, 2.0) == pytest.approx(0.24979, abs=1e-5)
    assert thermo.htilde_c(0.0, 0.5, 2.0) == math.inf


def test_beta_c_is_the_entropy_balance_root():
    p, c = 0.5, 1.5
    assert thermo.entropy_balance(0.0, p, c) == pytest.approx(LN2 / c)
    assert thermo.entropy_balance(200.0, p, c) < 0
    root = thermo.beta_c(p, c)
    assert abs(thermo.entropy_balance(root, p, c)) < 1e-12
    assert thermo.beta_c(p, 0.9) is None


def test_critical_lines_report():
    report = thermo.critical_lines(ModelParams.from_c(40, 0.5, 2.0, beta=1.0))
    assert report.region is None
    assert report.htilde_c == pytest.approx(0.24979, abs=1e-5)
    assert report.beta_c == pytest.approx(thermo.beta_c(0.5, 2.0))
    assert report.bar_beta_c is None and report.hat_beta_c is None
    with pytest.raises(ValueError):
        thermo.critical_lines(ModelParams(n=1000, k=3, p=0.5))


def test_low_temperature_lines_need_c_above_two():
    assert thermo.bar_beta_c(0.5, 1.5) is None
    assert thermo.hat_beta_c(0.5, 2.0) is None
    assert thermo.bar_beta_c(0.5, 3.0) > 0
    assert thermo.hat_beta_c(0.5, 3.0) > 0


# ---------- phases ----------
def _params(htilde, beta=1.0, k=40, p=0.5, c=1.5):
    return ModelParams.from_c(k, p, c, beta=beta, htilde=htilde)


def test_regions_and_entropy_densities():
    p, c, beta = 0.5, 1.5, 1.0
    lc = LN2 / c
    hc = thermo.htilde_c(beta, p, c)
    ordered = thermo.phase_classify(_params(hc + 0.2))
    assert ordered.region == "A"
    expected = lc - thermo.f_eval(2 * beta, p) / 2 + beta * thermo.f_eval(2 * beta, p, 1)
    assert ordered.entropy_density == pytest.approx(expected)
    assert ordered.overlap_density == 1.0
    hot = thermo.phase_classify(_params(0.0, beta=0.2))
    assert hot.region == "C"
    assert hot.entropy_density == pytest.approx(lc)
    cold = thermo.phase_classify(_params(0.0, beta=30.0))
    assert cold.region == "B"
    assert cold.overlap_density == 0.0


def test_b_and_c_entropies_meet_at_beta_c():
    p, c = 0.5, 1.5
    root = thermo.beta_c(p, c)
    lc = LN2 / c
    b_line = 2 * lc - thermo.f_eval(root, p) + root * thermo.f_eval(root, p, 1)
    assert b_line == pytest.approx(lc, abs=1e-10)


def test_first_order_line_is_reported_as_boundary():
    report = thermo.phase_classify(_params(thermo.htilde_c(1.0, 0.5, 1.5)))
    assert report.region == "boundary"
    assert report.notes


def test_phase_needs_c_above_one():
    with pytest.raises(ValueError):
        thermo.phase_classify(ModelParams(n=1000, k=3, p=0.5))


# ---------- annealed partition function ----------
def test_infinite_temperature_annealed_sum_is_a_double_count():
    params = ModelParams(n=4, k=1, p=0.5, beta=0.0, htilde=0.7)
    assert thermo.annealed_log_z(params) == pytest.approx(math.log(16))
    params = ModelParams(n=30, k=4, p=0.3, beta=0.0)
    assert thermo.annealed_log_z(params) == pytest.approx(2 * math.log(math.comb(30, 4)))


@pytest.mark.parametrize("beta, htilde", [(0.8, 0.3), (2.0, 0.0), (0.1, 1.0)])
def test_missing_link_decomposition_agrees(beta, htilde):
    params = ModelParams(n=12, k=3, p=0.5, beta=beta, htilde=htilde)
    exact = thermo.annealed_log_z(params)
    assert thermo.annealed_log_z(params, "missing-links") == pytest.approx(exact, rel=1e-10)


def test_annealed_sum_matches_monte_carlo_over_graphs():
    params = ModelParams(n=8, k=2, p=0.5, beta=1.0, htilde=0.3)
    samples = np.array([
        math.exp(sampler.log_partition(graph.generate_graph(8, 0.5, seed=s), params))
        for s in range(10_000)
    ])
    stderr = samples.std(ddof=1) / math.sqrt(len(samples))
    assert abs(samples.mean() - math.exp(thermo.annealed_log_z(params))) < 3 * stderr


def test_annealed_sum_decreases_with_beta():
    params = ModelParams(n=12, k=3, p=0.5, htilde=0.3)
    values = [thermo.annealed_log_z(params.with_changes(beta=b)) for b in np.linspace(0.0, 5.0, 26)]
    assert np.all(np.diff(values) < 0)


@pytest.mark.parametrize("ordered", [True, False])
def test_beta_derivative_matches_the_energy_density(ordered):
    k, beta, p = 200, 1.0, 0.5
    params = _params(thermo.htilde_c(beta, p, 1.5) + (0.3 if ordered else -0.3), k=k)
    if ordered:
        density = thermo.f_eval(2 * beta, p, 1)
    else:
        density = thermo.f_eval(beta, p, 1) + params.htilde
    eps = 1e-3
    slope = (
        thermo.annealed_log_z(params.with_changes(beta=beta + eps))
        - thermo.annealed_log_z(params.with_changes(beta=beta - eps))
    ) / (2 * eps)
    assert slope == pytest.approx(-k * k * density, rel=0.05)


def test_annealed_sum_needs_room_for_two_disjoint_sets():
    with pytest.raises(ValueError):
        thermo.annealed_log_z(ModelParams(n=5, k=3, p=0.5))
    with pytest.raises(ValueError):
        thermo.annealed_log_z(ModelParams(n=10, k=3, p=0.5), "bogus")


def test_argmax_overlap_on_either_side_of_the_line():
    hc = thermo.htilde_c(1.0, 0.5, 1.5)
    assert thermo.argmax_overlap(_params(hc + 0.5, k=200)) == 200
    assert thermo.argmax_overlap(_params(0.0, k=200)) == 0


def test_entropy_only_argmax():
    params = _params(0.0, beta=0.0, k=30)
    q, terms = thermo.annealed_terms(params)
    entropic = [thermo.theta(int(x), params.n, params.k) for x in q]
    assert thermo.argmax_overlap(params) == int(np.argmax(entropic))


@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
def test_argmax_jumps_at_the_finite_size_line(beta):
    k = 200
    line = thermo.finite_size_htilde_c(_params(0.0, beta=beta, k=k))
    assert thermo.argmax_overlap(_params(line - 1e-3, beta=beta, k=k)) == 0
    assert thermo.argmax_overlap(_params(line + 1e-3, beta=beta, k=k)) == k
    # the finite-size line approaches the asymptotic one
    assert line == pytest.approx(thermo.htilde_c(beta, 0.5, 1.5), abs=0.1)


def test_finite_size_line_balances_the_end_terms():
    base = _params(0.0, k=20)
    line = thermo.finite_size_htilde_c(base)
    _, terms = thermo.annealed_terms(base.with_changes(htilde=line))
    assert terms[0] == pytest.approx(terms[-1], rel=1e-10)


def test_asymptotic_branches_track_the_exact_sum():
    hc = thermo.htilde_c(1.0, 0.5, 1.5)
    for htilde in (hc + 0.3, 0.0):
        params = _params(htilde, k=200)
        diff = thermo.annealed_log_z(params) - thermo.annealed_log_z(params, "asymptotic")
        assert abs(diff) / params.k < 0.1
    branches = thermo.annealed_branches(_params(hc + 0.3, k=200))
    assert branches.region == "A"
    assert branches.ordered > branches.disordered


def test_asymptotic_log_z_refuses_the_line():
    with pytest.raises(PhaseBoundary):
        thermo.annealed_log_z(_params(thermo.htilde_c(1.0, 0.5, 1.5)), "asymptotic")


def test_observables_are_derivatives_of_the_exact_sum():
    params = ModelParams(n=12, k=3, p=0.5, beta=1.0, htilde=0.3)
    obs = thermo.annealed_observables(params)

    def log_z(beta):
        return thermo.annealed_log_z(params.with_changes(beta=beta))

    eps = 1e-4
    mean = -(log_z(1 + eps) - log_z(1 - eps)) / (2 * eps)
    assert obs.mean_energy == pytest.approx(mean, rel=1e-6)
    eps = 1e-3
    variance = (log_z(1 + eps) - 2 * log_z(1) + log_z(1 - eps)) / eps ** 2
    assert obs.energy_variance == pytest.approx(variance, rel=1e-4)
    assert 0 < obs.mean_overlap < 3


def test_annealed_entropy_density_at_infinite_temperature():
    params = ModelParams(n=30, k=4, p=0.5, beta=0.0)
    expected = 2 * math.log(math.comb(30, 4)) / 16
    assert thermo.annealed_entropy_density(params) == pytest.approx(expected)
