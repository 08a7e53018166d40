import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize_scalar

from etmetric.entropy import CostFunction, EntropyFunction
from etmetric.et_solver import (EtOptions, EtProblem, bl_cost, bl_dual, brute_force_et,
                                et_distance, et_distance_masses, et_objective,
                                polish_on_support, pure_entropy_cost, sinkhorn_kl, solve_et,
                                solve_generic)
from etmetric.fixtures import random_measure_pair, random_space
from etmetric.mmspace import MetricMeasureSpace

KL = EntropyFunction("kl")
seeds = st.integers(0, 2**31 - 1)


def dirac_problem(a, b, d, F=KL, cost=CostFunction("hk")):
    return EtProblem([[float(cost(d))]], [a], [b], F)


def dirac_oracle(a, b, c, F=KL):
    """Scalar minimization over the mass theta sent from one atom to the other."""
    res = minimize_scalar(lambda th: a * float(F(th / a)) + b * float(F(th / b)) + th * c,
                          bounds=(0, 4 * max(a, b)), method="bounded",
                          options={"xatol": 1e-12})
    return min(res.fun, float(F.at_zero) * (a + b))


def random_problem(rng, n1, n2, F=KL, sparse=False):
    cost = rng.uniform(0, 2, size=(n1, n2))
    mu1, mu2 = rng.uniform(0.2, 2, n1), rng.uniform(0.2, 2, n2)
    if sparse:
        mu1[rng.random(n1) < 0.3] = 0.0
    return EtProblem(cost, mu1, mu2, F)


@pytest.mark.parametrize("a, b, d", [(1, 1, 0.3), (0.25, 4, 1.0), (2, 0.5, 1.4), (1, 3, 0.0)])
def test_dirac_hk_matches_closed_form_and_scalar_oracle(a, b, d):
    sol = solve_et(dirac_problem(a, b, d))
    closed = a + b - 2 * math.sqrt(a * b) * math.cos(d)
    assert sol.value == pytest.approx(closed, abs=1e-9)
    assert sol.value == pytest.approx(dirac_oracle(a, b, -math.log(math.cos(d) ** 2)), abs=1e-8)
    assert sol.gamma.gamma[0, 0] == pytest.approx(math.sqrt(a * b) * math.cos(d), rel=1e-6)


def test_dirac_hk_beyond_quarter_circle_pays_both_masses():
    sol = solve_et(dirac_problem(1.0, 2.0, 2.0))
    assert sol.value == pytest.approx(3.0, abs=1e-12)
    assert sol.gamma.gamma[0, 0] == 0.0


@pytest.mark.parametrize("F", [KL, EntropyFunction("power", 2), EntropyFunction("tv")],
                         ids=lambda F: F.name)
def test_empty_second_measure_costs_entropy_at_zero(F):
    sol = solve_et(EtProblem(np.ones((2, 2)), [1.0, 2.0], [0.0, 0.0], F))
    assert sol.value == pytest.approx(float(F.at_zero) * 3.0)
    assert np.all(sol.gamma.gamma == 0)


@pytest.mark.parametrize("preset", ["hk", "ghk", "qpl:2", "lpl:2", "bl", "wp:2", "pl:1"])
def test_equal_measures_are_at_distance_zero(preset, rng):
    space = random_space(rng, 5)
    assert et_distance(space, space, preset) <= 1e-6


def test_sinkhorn_recovers_dirac_closed_form():
    sol = sinkhorn_kl(dirac_problem(1.0, 2.0, 0.7), epsilon=1e-6)
    assert sol.value == pytest.approx(3 - 2 * math.sqrt(2) * math.cos(0.7), abs=1e-4)


def test_sinkhorn_schedule_converges_to_generic(rng):
    problem = random_problem(rng, 5, 5)
    values = [sinkhorn_kl(problem, schedule=(1e-1, 1e-2, 1e-3)[: k + 1]).value for k in range(3)]
    assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))
    assert values[-1] == pytest.approx(solve_generic(problem).value, abs=1e-4)


def test_sinkhorn_dual_trace_is_nondecreasing(rng):
    sol = sinkhorn_kl(random_problem(rng, 6, 4), schedule=(1e-1, 1e-2))
    for trace in sol.diagnostics["dual_trace"]:
        assert all(b >= a - 1e-12 * max(1, abs(a)) for a, b in zip(trace, trace[1:]))


def test_generic_power_entropy_on_singletons():
    # (theta - 1)^2 + theta is minimized at theta = 1/2 with value 3/4
    sol = solve_generic(EtProblem([[1.0]], [1.0], [1.0], EntropyFunction("power", 2)))
    assert sol.value == pytest.approx(0.75, abs=1e-10)
    assert sol.gamma.gamma[0, 0] == pytest.approx(0.5, abs=1e-6)


@settings(max_examples=20)
@given(seeds, st.integers(1, 5), st.integers(1, 5))
def test_generic_and_sinkhorn_agree_on_kl(seed, n1, n2):
    problem = random_problem(np.random.default_rng(seed), n1, n2)
    generic = solve_generic(problem).value
    sink = sinkhorn_kl(problem, schedule=EtOptions().epsilon_schedule).value
    assert sink == pytest.approx(generic, rel=1e-5)


@settings(max_examples=20)
@given(seeds, st.integers(1, 5), st.integers(1, 5),
       st.sampled_from([KL, EntropyFunction("power", 1.5), EntropyFunction("power", 3),
                        EntropyFunction("tv"), EntropyFunction("scaled-kl", 4)]))
def test_value_is_bounded_by_the_empty_plan(seed, n1, n2, F):
    problem = random_problem(np.random.default_rng(seed), n1, n2, F, sparse=True)
    sol = solve_et(problem)
    assert sol.value <= float(F.at_zero) * (problem.mu1.sum() + problem.mu2.sum()) + 1e-12
    total, d1, d2, tr = et_objective(problem, sol.gamma)
    assert total == pytest.approx(sol.value, rel=1e-10, abs=1e-14)
    assert d1 + d2 + tr == pytest.approx(sol.value, rel=1e-9, abs=1e-14)
    assert sol.value >= 0


def test_brute_force_reproduces_dirac_closed_form():
    value = brute_force_et(dirac_problem(1.0, 2.0, 0.7), grid_step=1e-3)
    assert value == pytest.approx(3 - 2 * math.sqrt(2) * math.cos(0.7), abs=1e-3)


def test_brute_force_vanishes_on_identical_measures():
    problem = EtProblem([[0.0, 1.0], [1.0, 0.0]], [1.0, 0.5], [1.0, 0.5], KL)
    assert brute_force_et(problem, grid_step=1e-2) <= 1e-9


def test_brute_force_dominates_the_solver(rng):
    for _ in range(50):
        n1, n2 = rng.integers(1, 3, size=2)
        F = [KL, EntropyFunction("power", 2), EntropyFunction("tv")][rng.integers(3)]
        problem = random_problem(rng, n1, n2, F)
        assert brute_force_et(problem, grid_step=2e-2) >= solve_et(problem).value - 1e-9


def test_pure_entropy_cost_examples():
    assert pure_entropy_cost([4.0], [1.0], KL) == pytest.approx(1.0)
    assert pure_entropy_cost([1.0, 2.0], [1.0, 2.0], EntropyFunction("power", 3)) == \
        pytest.approx(0.0, abs=1e-14)
    assert pure_entropy_cost([1.0, 0.0], [3.0, 2.0], EntropyFunction("power", 2)) == \
        pytest.approx(1.5, rel=1e-12)


@pytest.mark.parametrize("d, expect", [(3.0, 2.0), (1.0, 1.0)])
def test_bounded_lipschitz_dirac_pair(d, expect):
    dist = [[0.0, d], [d, 0.0]]
    assert et_distance_masses([1.0, 0.0], [0.0, 1.0], dist, "bl") == pytest.approx(expect)
    assert bl_dual([1.0, 0.0], [0.0, 1.0], dist) == pytest.approx(expect)


@settings(max_examples=20)
@given(seeds, st.integers(1, 6))
def test_bounded_lipschitz_primal_equals_dual(seed, n):
    rng = np.random.default_rng(seed)
    mm1, mm2 = random_measure_pair(rng, n, sparsity=0.2)
    primal = bl_cost(EtProblem(mm1.dist, mm1.mass, mm2.mass, EntropyFunction("tv"))).value
    assert primal == pytest.approx(bl_dual(mm1.mass, mm2.mass, mm1.dist), abs=1e-7)


def test_named_distances_on_diracs():
    dist = [[0.0, math.pi / 2], [math.pi / 2, 0.0]]
    assert et_distance_masses([1, 0], [0, 1], dist, "hk") == pytest.approx(math.sqrt(2))
    for d in (0.3, 1.0, 2.5):
        dd = [[0.0, d], [d, 0.0]]
        assert et_distance_masses([1, 0], [0, 1], dd, "ghk") ** 2 == pytest.approx(
            2 - 2 * math.exp(-d * d / 2), abs=1e-8)
        assert et_distance_masses([1, 0], [0, 1], dd, "wp:2") == pytest.approx(d, rel=1e-9)


@settings(max_examples=15)
@given(seeds, st.sampled_from(["hk", "ghk", "qpl:2", "bl", "lpl:1.5"]),
       st.sampled_from([0.25, 3.0]))
def test_cost_is_one_homogeneous_in_mass(seed, preset, M):
    rng = np.random.default_rng(seed)
    mm1, mm2 = random_measure_pair(rng, int(rng.integers(1, 6)), sparsity=0.2)
    _, base = et_distance(mm1, mm2, preset, return_solution=True)
    _, scaled = et_distance(mm1.scaled(M), mm2.scaled(M), preset, return_solution=True)
    assert scaled.value == pytest.approx(M * base.value, rel=1e-7, abs=1e-12)


@settings(max_examples=15)
@given(seeds, st.sampled_from(["hk", "ghk", "qpl:2", "bl", "wp:1"]))
def test_swapping_measures_transposes_the_problem(seed, preset):
    rng = np.random.default_rng(seed)
    mm1, mm2 = random_measure_pair(rng, int(rng.integers(1, 6)))
    if preset.startswith("wp"):
        mm2 = mm2.scaled(mm1.total_mass / mm2.total_mass)
    assert et_distance(mm1, mm2, preset) == pytest.approx(et_distance(mm2, mm1, preset),
                                                         rel=1e-9, abs=1e-9)


@settings(max_examples=15)
@given(seeds, st.sampled_from([KL, EntropyFunction("power", 2), EntropyFunction("tv")]))
def test_raising_a_cost_never_lowers_the_value(seed, F):
    rng = np.random.default_rng(seed)
    problem = random_problem(rng, 3, 4, F)
    bumped = problem.cost.copy()
    bumped[rng.integers(3), rng.integers(4)] += rng.uniform(0.1, 2)
    higher = EtProblem(bumped, problem.mu1, problem.mu2, F)
    assert solve_et(higher).value >= solve_et(problem).value - 1e-9


@settings(max_examples=12)
@given(seeds, st.sampled_from(["hk", "ghk", "qpl:2", "bl", "lpl:2"]))
def test_measure_distances_satisfy_the_triangle_inequality(seed, preset):
    rng = np.random.default_rng(seed)
    space = random_space(rng, int(rng.integers(2, 5)))
    a, b, c = (space.with_mass(rng.uniform(0, 2, space.n)) for _ in range(3))
    ab, bc, ac = (et_distance(x, y, preset) for x, y in ((a, b), (b, c), (a, c)))
    assert ac <= ab + bc + 1e-5
    assert min(ab, bc, ac) >= 0


@settings(max_examples=12)
@given(seeds)
def test_measure_level_bounds_chain(seed):
    rng = np.random.default_rng(seed)
    mm1, mm2 = random_measure_pair(rng, int(rng.integers(2, 6)))
    hk, ghk = et_distance(mm1, mm2, "hk"), et_distance(mm1, mm2, "ghk")
    assert ghk <= hk + 1e-5
    for p in (1.5, 2.0, 3.0):
        q = et_distance(mm1, mm2, f"qpl:{p:g}")
        assert q <= ghk + 1e-5
        assert ghk <= math.sqrt(p) * q + 1e-5
    mm2 = mm2.scaled(mm1.total_mass / mm2.total_mass)
    for p in (1.0, 2.0):
        wass = et_distance(mm1, mm2, f"wp:{p:g}")
        preset = f"custom/{1 / p}/{'kl' if p == 1 else f'power:{p:g}'}/pow:{p:g}"
        assert et_distance(mm1, mm2, preset) <= wass + 1e-5


@settings(max_examples=8)
@given(seeds, st.sampled_from([1, 2]))
def test_scaled_costs_increase_towards_pure_entropy(seed, p):
    rng = np.random.default_rng(seed)
    mm1, mm2 = random_measure_pair(rng, int(rng.integers(2, 5)))
    values = [et_distance(mm1, mm2, f"lim-pe:{p}:{n}") for n in (1, 10, 100, 1000)]
    limit = et_distance(mm1, mm2, f"pl:{p}")
    assert all(b >= a - 1e-9 * a for a, b in zip(values, values[1:]))
    gaps = [limit - v for v in values]
    assert all(g >= -1e-6 for g in gaps)
    assert gaps[-1] <= gaps[0] + 1e-12


def test_infinite_costs_pin_plan_entries():
    problem = EtProblem([[np.inf, 0.2], [0.1, np.inf]], [1.0, 1.0], [1.0, 1.0], KL)
    sol = solve_et(problem)
    assert sol.gamma.gamma[0, 0] == 0 and sol.gamma.gamma[1, 1] == 0
    assert np.isfinite(sol.value)


def test_support_polish_never_worsens_a_plan(rng):
    problem = random_problem(rng, 4, 4)
    rough = sinkhorn_kl(problem, schedule=(1e-1,))
    plan = polish_on_support(problem, rough.gamma.gamma)
    assert et_objective(problem, plan)[0] <= rough.value


def test_options_round_trip_through_json():
    opts = EtOptions(method="sinkhorn", tol=1e-7, epsilon_schedule=(0.5, 0.05), seed=3)
    assert EtOptions.from_json(opts.to_json()) == opts


def test_measure_distances_need_a_common_space():
    a = MetricMeasureSpace([[0, 1], [1, 0]], [1, 1])
    b = MetricMeasureSpace([[0, 2], [2, 0]], [1, 1])
    with pytest.raises(ValueError):
        et_distance(a, b, "hk")
