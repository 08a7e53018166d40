import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize_scalar

from etmetric.entropy import (INF, CostFunction, DomainError, EntropyFunction, divergence,
                              f_eval, marginal_perspective, marginal_perspective_numeric,
                              perspective, power_h0, reverse_entropy, xmul)

CATALOG = [EntropyFunction("kl"), EntropyFunction("power", 1.5), EntropyFunction("power", 2),
           EntropyFunction("power", 3), EntropyFunction("tv"), EntropyFunction("indicator"),
           EntropyFunction("scaled-kl", 5), EntropyFunction("pr-reg", 3)]
FINITE = [F for F in CATALOG if F.kind != "indicator"]
COSTS = [CostFunction("hk"), CostFunction("pow", 1), CostFunction("pow", 2),
         CostFunction("pow", 3.5), CostFunction("lin"), CostFunction("scaled", 4)]

nonneg = st.floats(0, 10, allow_nan=False)
positive = st.floats(0.01, 10, allow_nan=False)


def theta_oracle(F, c, r, t):
    """Bounded scalar minimization of the marginal perspective, with the theta = 0 endpoint."""
    def h(u):
        th = math.exp(u)
        return r * float(F(th / r)) + t * float(F(th / t)) + th * c
    res = minimize_scalar(h, bounds=(-30, math.log(1e4 * max(r, t, 1))), method="bounded",
                          options={"xatol": 1e-12})
    return min(res.fun, float(F.at_zero) * (r + t))


@pytest.mark.parametrize("F", CATALOG, ids=lambda F: F.name)
def test_every_entropy_vanishes_at_one(F):
    assert f_eval(F, 1.0) == 0.0


@pytest.mark.parametrize("F", FINITE, ids=lambda F: F.name)
def test_entropies_are_midpoint_convex(F):
    s = np.linspace(0, 8, 161)
    t = s[::-1]
    assert np.all(F((s + t) / 2) <= (F(s) + F(t)) / 2 + 1e-12)


@pytest.mark.parametrize("F", FINITE, ids=lambda F: F.name)
def test_recession_slope_matches_growth(F):
    ratio = float(F(1e6)) / 1e6
    if F.superlinear:
        assert ratio > 5
    else:
        assert ratio == pytest.approx(F.recession, rel=1e-2)


def test_catalog_values():
    assert f_eval(EntropyFunction("power", 2), 0.0) == pytest.approx(0.5)
    assert f_eval(EntropyFunction("tv"), 3.0) == 2.0
    assert f_eval(EntropyFunction("indicator"), 2.0) == INF


def test_parse_round_trips_catalog_names():
    for F in CATALOG:
        assert EntropyFunction.parse(F.name) == F
    assert EntropyFunction.parse("power:1") == EntropyFunction("kl")
    with pytest.raises(DomainError):
        EntropyFunction.parse("power:0.5")


def test_extended_product_treats_zero_times_infinity_as_zero():
    assert xmul(0.0, INF) == 0.0
    assert xmul(2.0, INF) == INF


def test_perspective_examples():
    for F in CATALOG:
        assert perspective(F, 2.0, 2.0) == 0.0
    assert perspective(EntropyFunction("tv"), 3.0, 0.0) == 3.0
    kl_value = 2 * (0.5 * math.log(0.5) - 0.5 + 1)
    assert perspective(EntropyFunction("kl"), 1.0, 2.0) == pytest.approx(kl_value, rel=1e-14)
    assert kl_value == pytest.approx(0.30685, abs=1e-5)


def test_reverse_entropy_examples():
    kl = EntropyFunction("kl")
    assert reverse_entropy(kl, 1.0) == pytest.approx(0.0, abs=1e-15)
    assert reverse_entropy(kl, math.e) == pytest.approx(math.e - 2, rel=1e-14)
    assert reverse_entropy(EntropyFunction("tv"), 0.0) == 1.0


@given(positive)
def test_kl_reverse_entropy_formula(t):
    assert reverse_entropy(EntropyFunction("kl"), t) == pytest.approx(t - math.log(t) - 1,
                                                                      abs=1e-12)


def test_divergence_examples():
    mu = np.array([0.3, 1.2, 0.0])
    for F in CATALOG:
        assert divergence(F, mu, mu) == 0.0
    assert divergence(EntropyFunction("tv"), [1, 0], [0, 1]) == 2.0
    assert divergence(EntropyFunction("kl"), [1, 1], [1, 0]) == INF


@given(st.lists(st.tuples(nonneg, nonneg), min_size=1, max_size=6))
def test_divergence_of_superlinear_entropy_is_nonnegative_and_vanishes_only_on_equality(pairs):
    g = np.array([p[0] for p in pairs])
    mu = np.array([p[1] for p in pairs])
    for F in (EntropyFunction("kl"), EntropyFunction("power", 2)):
        value = divergence(F, g, mu)
        assert value >= 0
        if value == 0:
            np.testing.assert_allclose(g, mu, atol=1e-6)


def test_marginal_perspective_examples():
    assert marginal_perspective(EntropyFunction("kl"), 0.0, 4.0, 1.0).value == pytest.approx(1.0)
    assert marginal_perspective(EntropyFunction("power", 2), 0.0, 1.0, 3.0).value == \
        pytest.approx(0.5, rel=1e-12)
    for c in (0.0, 0.3, 1.0, 4.0):
        assert marginal_perspective(EntropyFunction("kl"), c, 1.0, 1.0).value == \
            pytest.approx(2 - 2 * math.exp(-c / 2), rel=1e-12)


def test_power_h0_agrees_with_frozen_theta_oracle():
    # 1-D bounded minimization of U_2 pair at (r, t) = (1, 3), computed once and frozen
    assert power_h0(2, 1.0, 3.0) == pytest.approx(theta_oracle(EntropyFunction("power", 2),
                                                               0.0, 1.0, 3.0), abs=1e-9)
    assert power_h0(2, 0.0, 2.0) == pytest.approx(1.0)


@pytest.mark.parametrize("F", FINITE, ids=lambda F: F.name)
@given(c=nonneg, r=nonneg, t=nonneg)
def test_marginal_perspective_matches_scalar_minimizer(F, c, r, t):
    value = marginal_perspective(F, c, r, t).value
    if r == 0 and t == 0:
        assert value == 0
        return
    rr, tt = max(r, 1e-300), max(t, 1e-300)
    expect = theta_oracle(F, c, rr, tt) if r > 0 and t > 0 else float(F.at_zero) * (r + t)
    assert value <= expect + 1e-7 * max(1, expect)
    assert value >= expect - 1e-6 * max(1, expect)


@pytest.mark.parametrize("F", CATALOG, ids=lambda F: F.name)
@given(c=nonneg, r=nonneg, t=nonneg)
def test_marginal_perspective_is_symmetric(F, c, r, t):
    assert marginal_perspective(F, c, r, t).value == pytest.approx(
        marginal_perspective(F, c, t, r).value, rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("F", FINITE, ids=lambda F: F.name)
@given(r=nonneg, t=nonneg)
def test_marginal_perspective_is_nondecreasing_in_cost(F, r, t):
    values = [marginal_perspective(F, c, r, t).value for c in np.linspace(0, 6, 13)]
    assert all(b >= a - 1e-10 * max(1, a) for a, b in zip(values, values[1:]))


@pytest.mark.parametrize("F", FINITE, ids=lambda F: F.name)
@given(r=nonneg)
def test_marginal_perspective_vanishes_on_the_diagonal(F, r):
    assert marginal_perspective(F, 0.0, r, r).value == pytest.approx(0.0, abs=1e-10 * max(1, r))


@given(p=st.sampled_from([1.0, 1.5, 2.0, 3.0]), r=nonneg, t=nonneg)
def test_closed_form_h0_agrees_with_numeric_minimization(p, r, t):
    F = EntropyFunction("kl") if p == 1 else EntropyFunction("power", p)
    numeric = marginal_perspective_numeric(F, 0.0, r, t).value
    assert power_h0(p, r, t) == pytest.approx(numeric, rel=1e-8, abs=1e-12)


@given(st.floats(0, 20), st.floats(1, 100))
def test_scaled_kl_grows_with_scale(s, n):
    assert f_eval(EntropyFunction("scaled-kl", n + 1), s) >= f_eval(EntropyFunction("scaled-kl", n), s)


@given(st.floats(2, 50), st.data())
def test_regularized_tv_agrees_with_tv_up_to_its_scale(n, data):
    s = data.draw(st.floats(0, n))
    assert f_eval(EntropyFunction("pr-reg", n), s) == pytest.approx(abs(s - 1), abs=1e-12)


@pytest.mark.parametrize("F", FINITE, ids=lambda F: F.name)
@pytest.mark.parametrize("N", [1.5, 2.0, 5.0])
def test_entropy_is_bounded_by_a_multiple_of_the_distance_to_one(F, N):
    C = max(float(F(1 / N)) / (1 - 1 / N), float(F(N)) / (N - 1))
    s = np.linspace(1 / N, N, 400)
    assert np.all(F(s) <= C * np.abs(s - 1) + 1e-12)


@pytest.mark.parametrize("cost", COSTS, ids=lambda c: c.name)
def test_costs_vanish_at_zero_and_are_monotone_and_convex(cost):
    top = min(cost.finite_radius, 5.0) * (0.999 if cost.kind == "hk" else 1)
    d = np.linspace(0, top, 301)
    v = cost(d)
    assert cost(0.0) == 0.0
    assert np.all(np.diff(v) >= -1e-12)
    assert np.all(v[1:-1] <= (v[:-2] + v[2:]) / 2 + 1e-9)


def test_hk_cost_formula_and_radius():
    hk = CostFunction("hk")
    d = np.linspace(0, 1.5, 20)
    np.testing.assert_allclose(hk(d), -np.log(np.cos(d) ** 2), rtol=1e-13)
    assert hk(math.pi / 2) == INF and hk(3.0) == INF


def test_pure_entropy_limit_cost_is_zero_only_at_zero():
    pe = CostFunction("pe")
    assert pe(0.0) == 0.0 and pe(1e-9) == INF


@pytest.mark.parametrize("cost", [CostFunction("hk"), CostFunction("pow", 2.5)], ids=str)
def test_cost_derivatives_match_finite_differences(cost):
    d = np.linspace(0.1, 1.2, 12)
    h = 1e-6
    first, second = cost.derivatives(d)
    np.testing.assert_allclose(first, (cost(d + h) - cost(d - h)) / (2 * h), rtol=1e-6)
    np.testing.assert_allclose(second, (cost(d + h) - 2 * cost(d) + cost(d - h)) / h ** 2,
                               rtol=1e-3)


@pytest.mark.parametrize("F", FINITE, ids=lambda F: F.name)
@given(c=nonneg, r=nonneg, t=nonneg, lam=st.floats(0.01, 100))
def test_marginal_perspective_is_one_homogeneous(F, c, r, t, lam):
    base = marginal_perspective(F, c, r, t).value
    assert marginal_perspective(F, c, lam * r, lam * t).value == pytest.approx(
        lam * base, rel=1e-8, abs=1e-10)
