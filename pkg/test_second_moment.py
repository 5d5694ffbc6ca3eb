import math
from itertools import combinations

import numpy as np
import pytest

from cavity import second_moment as sm
from cavity import thermo
from cavity.errors import BudgetExceeded
from cavity.graph import Configuration, generate_graph
from cavity.hamiltonian import pair_energy
from cavity.sampler import log_partition
from cavity.schemas import ModelParams
from cavity.seeding import make_rng

# upper triangle of σ_iτ_j + σ_jτ_i + σ′_iτ′_j + σ′_jτ′_i, rows and columns in CELLS order
PAIR_TABLE = """
0 1 1 0 1 2 2 1 1 2 2 1 0 1 1 0
2 1 0 2 3 2 1 2 3 2 1 1 2 1 0
0 0 2 2 1 1 2 2 1 1 1 1 0 0
0 1 1 1 1 1 1 1 1 0 0 0 0
2 3 3 2 1 2 2 1 0 1 1 0
4 3 2 2 3 2 1 1 2 1 0
2 2 2 2 1 1 1 1 0 0
2 1 1 1 1 0 0 0 0
0 1 1 0 0 1 1 0
2 1 0 1 2 1 0
0 0 1 1 0 0
0 0 0 0 0
0 1 1 0
2 1 0
0 0
0
"""


def _params(htilde_shift, k, beta=1.0, c=1.5, p=0.5):
    htilde = thermo.htilde_c(beta, p, c) + htilde_shift
    return ModelParams.from_c(k, p, c, beta=beta, htilde=htilde)


# ---------- multiplicities ----------
def test_cells_are_the_sixteen_region_pairs():
    assert len(sm.CELLS) == 16
    assert sm.CELLS[0] == "SS'" and sm.CELLS[-1] == "CC'"
    assert sm.TABLE_CELLS == ("SS'", "SI'", "ST'", "IS'", "II'", "IT'", "TS'", "TI'", "TT'")


def test_multiplicity_reproduces_the_pair_table():
    rows = [list(map(int, line.split())) for line in PAIR_TABLE.strip().splitlines()]
    for i, row in enumerate(rows):
        for offset, expected in enumerate(row):
            a, b = sm.CELLS[i], sm.CELLS[i + offset]
            assert sm.multiplicity(a, b) == expected
            assert sm.multiplicity(b, a) == expected


def test_multiplicity_of_single_parts():
    assert sm.multiplicity("I", "I") == 2
    assert sm.multiplicity("S", "T") == 1
    assert sm.multiplicity("C", "I") == 0


@pytest.mark.parametrize("a, b", [("SX'", "II'"), ("S", "II'"), ("SI", "II'")])
def test_multiplicity_rejects_bad_labels(a, b):
    with pytest.raises(ValueError):
        sm.multiplicity(a, b)


# ---------- Ψ and its bound ----------
def test_empty_intersection_has_no_interaction():
    cell = sm.OverlapCell(q=2, q_prime=1, g=(0,) * 9)
    assert sm.psi_and_bound(cell, 4, 1.0, 0.5) == (0.0, 0.0)


def test_bound_is_tight_when_only_the_centre_is_occupied():
    beta, p, g5 = 0.7, 0.5, 3
    cell = sm.OverlapCell(q=3, q_prime=3, g=(0, 0, 0, 0, g5, 0, 0, 0, 0))
    psi, bound = sm.psi_and_bound(cell, 5, beta, p)
    expected = g5 * (g5 - 1) * (thermo.f_eval(2 * beta, p) - thermo.f_eval(4 * beta, p) / 2)
    assert psi == pytest.approx(expected)
    assert bound == pytest.approx(expected)


def test_overlap_cell_validation():
    with pytest.raises(ValueError):
        sm.OverlapCell(q=1, q_prime=1, g=(0,) * 8)
    with pytest.raises(ValueError):
        sm.OverlapCell(q=1, q_prime=1, g=(0, 0, 0, 2, 0, 0, 0, 0, 0)).validate(3)
    cell = sm.OverlapCell(q=1, q_prime=2, g=(1, 0, 0, 0, 1, 0, 0, 0, 1))
    cell.validate(3)
    assert cell.complements(3)["I'"] == 1


def test_random_cells_are_feasible():
    rng = make_rng(5)
    for _ in range(200):
        sm.random_feasible_cell(7, rng).validate(7)


def test_psi_never_exceeds_its_bound():
    worst = sm.audit_psi_bound(100_000, 50, [0.1, 0.5, 1.0, 2.0, 5.0], [0.2, 0.5, 0.8], seed=6)
    assert worst <= 1e-9


# ---------- entropic bound ----------
def test_entropic_bound_at_saturated_overlap():
    n, k = 1000, 6
    expected = 2 * k * math.log(n) - 2 * math.lgamma(k + 1) + sm.ENTROPIC_SLACK
    assert sm.theta2_bar(k, k, 0, n, k) == pytest.approx(expected)


def test_entropic_bound_spot_value():
    n, k, q, qp, g = 1000, 6, 4, 3, 2
    expected = (
        (4 * k - q - qp - g) * math.log(n)
        - math.lgamma(q - g + 1) - math.lgamma(qp - g + 1)
        - 2 * (math.lgamma(k - q - g + 1) + math.lgamma(k - qp - g + 1))
        + 8
    )
    assert sm.theta2_bar(q, qp, g, n, k) == pytest.approx(expected)


@pytest.mark.parametrize("q", [0, 2, 5])
def test_entropic_bound_doubles_the_first_moment_entropy(q):
    n, k = 10 ** 6, 6
    assert sm.theta2_bar(q, q, 0, n, k) - 2 * thermo.theta(q, n, k) == pytest.approx(8.0, abs=1e-3)


def test_entropic_bound_rejects_points_outside_the_polyhedron():
    with pytest.raises(ValueError):
        sm.theta2_bar(4, 4, 5, 100, 4)
    with pytest.raises(ValueError):
        sm.theta2_bar(5, 1, 0, 100, 4)


# ---------- exact moments ----------
def test_first_moment_brute_matches_the_annealed_sum():
    params = ModelParams(n=8, k=2, p=0.5, beta=1.0, htilde=0.3)
    assert sm.first_moment_brute(params) == pytest.approx(thermo.annealed_log_z(params), rel=1e-12)


@pytest.mark.parametrize("mode", ["brute", "decomposition"])
def test_infinite_temperature_second_moment(mode):
    params = ModelParams(n=6, k=2, p=0.5, beta=0.0, htilde=0.4)
    assert sm.second_moment(params, mode) == pytest.approx(4 * math.log(15))


@pytest.mark.parametrize("beta, htilde, p", [
    (1.0, 0.3, 0.5), (0.5, 0.0, 0.5), (2.0, 0.7, 0.3), (0.2, 1.5, 0.8), (3.0, 0.1, 0.6),
])
def test_brute_force_and_decomposition_agree(beta, htilde, p):
    params = ModelParams(n=6, k=2, p=p, beta=beta, htilde=htilde)
    brute = sm.second_moment(params, "brute")
    decomposition = sm.second_moment(params, "decomposition")
    assert decomposition == pytest.approx(brute, rel=1e-8)
    assert brute >= 2 * sm.first_moment_brute(params) - 1e-12


def test_second_moment_budget(monkeypatch):
    monkeypatch.setenv("CAVITY_QUAD_CAP", "100")
    with pytest.raises(BudgetExceeded):
        sm.second_moment(ModelParams(n=6, k=2, p=0.5), "brute")
    with pytest.raises(ValueError):
        sm.second_moment(ModelParams(n=6, k=2, p=0.5), "bogus")


# ---------- polyhedron maximum ----------
@pytest.mark.parametrize("k, beta, c", [(40, 1.0, 1.5), (80, 0.5, 2.0)])
def test_polyhedron_maximum_in_the_ordered_phase(k, beta, c):
    best = sm.lemma_max(_params(0.3, k=k, beta=beta, c=c))
    assert (best.q, best.g, best.g5) == (k, 0, 0)


@pytest.mark.parametrize("k, beta, c", [(40, 1.0, 1.5), (80, 0.5, 2.0)])
def test_polyhedron_maximum_in_the_disordered_phase(k, beta, c):
    best = sm.lemma_max(_params(-0.3, k=k, beta=beta, c=c))
    assert (best.q, best.g, best.g5) == (0, 0, 0)


def test_small_graphs_at_c_two_open_an_overlap_cell():
    # n ≈ 2^20 < k^4 here, so one more shared vertex costs ln n but gains 4 ln k
    params = _params(-0.3, k=40, beta=0.5, c=2.0)
    assert params.n < 40 ** 4
    closed, opened = sm.lemma_objective(params, np.array([0, 0]), np.array([0, 1]), np.array([0, 0]))
    assert opened > closed
    assert sm.lemma_max(params).g > 0


def test_second_moment_exponent_tracks_twice_the_first():
    ratios = []
    for k in (10, 20, 40):
        params = _params(0.3, k=k)
        diff = sm.lemma_max(params).value - 2 * thermo.annealed_log_z(params)
        assert diff >= 0
        ratios.append(diff / k)
    assert ratios[0] > ratios[1] > ratios[2]


def test_restricted_maximum_follows_its_leading_term():
    residuals = []
    for k in (20, 40, 80):
        params = _params(0.3, k=k)
        best = sm.lemma_max(params, g_min=2)
        assert best.g >= 2
        ordered, _ = sm.lemma_g2_leading(params)
        # the entropic bound carries the additive constant ENTROPIC_SLACK, absent from the leading term
        residuals.append(abs(best.value - sm.ENTROPIC_SLACK - ordered) / k)
    assert residuals[0] > residuals[1] > residuals[2]
    assert residuals[2] < 0.1


def test_lemma_max_rejects_other_floors():
    with pytest.raises(ValueError):
        sm.lemma_max(_params(0.3, k=10), g_min=1)


def test_hessian_entries():
    beta, p = 0.8, 0.5
    f = {m: thermo.f_eval(m * beta, p) for m in (1, 2, 3, 4)}
    mixed = f[1] + f[2] - f[3]
    corner = 2 * f[2] - f[4] - mixed
    low = sm.polytope_hessian(beta, p, g_above_k=False)
    high = sm.polytope_hessian(beta, p, g_above_k=True)
    assert low[0, 0] == pytest.approx(4 * f[1] - 2 * f[2])
    assert np.allclose(low[1:, 1:], [[mixed, 0.0], [0.0, corner]])
    assert np.allclose(high[1:, 1:], [[0.0, mixed / 2], [mixed / 2, corner]])
    assert np.allclose(low, low.T) and np.allclose(high, high.T)


# ---------- self-averaging ----------
def test_self_averaging_ratio_shrinks_with_k():
    rows = sm.self_averaging_experiment(0.2, 1.9, [2, 3, 4], replicas=200, seed=7)
    assert [r.n for r in rows] == [5, 13, 30]
    ratios = [r.ratio for r in rows]
    assert ratios[0] > ratios[1] > ratios[2] > 0
    assert rows[2].reference == pytest.approx(30 ** -2.0)


def test_zero_temperature_partition_counts_zero_energy_pairs():
    g = generate_graph(7, 0.6, seed=15)
    params = ModelParams(n=7, k=2, p=0.6, beta=math.inf)
    configs = [Configuration.of(vs) for vs in combinations(range(7), 2)]
    zero = sum(1 for s in configs for t in configs if pair_energy(g, s, t, params.h).H == 0)
    assert zero > 0
    assert log_partition(g, params) == pytest.approx(math.log(zero))


def test_zero_temperature_clique_count_self_averages():
    # htilde > 0 leaves only σ = τ cliques at zero energy; n = 16 and 64
    rows = sm.self_averaging_experiment(0.5, 0.5, [2, 3], replicas=200, seed=10, beta=math.inf, htilde=0.5)
    assert [r.n for r in rows] == [16, 64]
    ratios = [r.ratio for r in rows]
    assert all(math.isfinite(r) and r > 0 for r in ratios)
    assert ratios[0] > ratios[1]
    assert rows[0].mean_z == pytest.approx(60, rel=0.05)


def test_self_averaging_is_exact_without_disorder():
    rows = sm.self_averaging_experiment(0.2, 1.9, [3], replicas=5, seed=8, beta=0.0)
    assert rows[0].ratio == pytest.approx(0.0, abs=1e-9)
    assert rows[0].mean_z == pytest.approx(math.comb(13, 3) ** 2)


def test_self_averaging_does_not_depend_on_thread_count():
    one = sm.self_averaging_experiment(0.5, 1.5, [3], replicas=6, seed=9, threads=1)
    many = sm.self_averaging_experiment(0.5, 1.5, [3], replicas=6, seed=9, threads=4)
    assert one == many
    with pytest.raises(ValueError):
        sm.self_averaging_experiment(0.5, 1.5, [3], replicas=1, seed=9)
