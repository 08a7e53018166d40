import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from etmetric.conic import (ConePlan, ConePoint, cgw_objective, check_cgw_inequality,
                            homogeneous_marginal, lift_optimal_plan)
from etmetric.entropy import CostFunction, DomainError, EntropyFunction
from etmetric.fixtures import random_space, singleton, two_point
from etmetric.mmspace import StructuralError
from etmetric.sturm import SturmOptions

KL = EntropyFunction("kl")
HK = CostFunction("hk")
seeds = st.integers(0, 2**31 - 1)


def test_apex_points_are_identified():
    assert ConePoint(0, 0.0) == ConePoint(3, 0.0)
    assert ConePoint(0, 1.0) != ConePoint(1, 1.0)
    assert len({ConePoint(0, 0.0), ConePoint(2, 0.0)}) == 1


def test_single_atom_marginals():
    plan = ConePlan([(ConePoint(0, 2.0), ConePoint(1, 3.0), 1.0)], 2, 1, 2)
    assert homogeneous_marginal(plan, 1).tolist() == [4.0]
    assert homogeneous_marginal(plan, 2).tolist() == [0.0, 9.0]


def test_apex_atoms_carry_no_marginal_mass():
    plan = ConePlan([(ConePoint(0, 0.0), ConePoint(0, 1.5), 2.0)], 1, 1, 1)
    assert homogeneous_marginal(plan, 1).tolist() == [0.0]
    assert homogeneous_marginal(plan, 2).tolist() == [3.0]


def test_atoms_over_one_base_point_add_up():
    plan = ConePlan([(ConePoint(0, 1.0), ConePoint(0, 1.0), 0.5),
                     (ConePoint(0, 2.0), ConePoint(0, 1.0), 0.25)], 2, 1, 1)
    assert homogeneous_marginal(plan, 1).tolist() == [0.5 + 0.25 * 4]


def test_invalid_plans_are_rejected():
    with pytest.raises(StructuralError):
        ConePoint(0, -1.0)
    with pytest.raises(StructuralError):
        ConePlan([(ConePoint(0, 1.0), ConePoint(0, 1.0), -1.0)], 1, 1, 1)
    with pytest.raises(DomainError):
        ConePlan([], 0.5, 1, 1)


def test_diagonal_atom_between_identical_singletons_costs_nothing():
    plan = ConePlan([(ConePoint(0, 1.0), ConePoint(0, 1.0), 1.0)], 2, 1, 1)
    assert cgw_objective(plan, singleton(1), singleton(1), KL, HK) == 0.0


def test_single_atom_between_singletons_is_the_pure_entropy_term():
    # H_0(1, 4) with the Hellinger closed form (1 - 2)^2
    plan = ConePlan([(ConePoint(0, 1.0), ConePoint(0, 2.0), 1.0)], 1, 1, 1)
    assert cgw_objective(plan, singleton(1), singleton(4), KL, HK) == pytest.approx(1.0)


@given(seeds)
def test_objective_is_quadratic_in_the_weights(seed):
    rng = np.random.default_rng(seed)
    mm1, mm2 = random_space(rng, 3), random_space(rng, 2)
    plan = lift_optimal_plan(rng.random((3, 2)), mm1.mass, mm2.mass, 2)
    base = cgw_objective(plan, mm1, mm2, KL, CostFunction("pow", 2))
    doubled = cgw_objective(plan.scaled(2), mm1, mm2, KL, CostFunction("pow", 2))
    assert doubled == pytest.approx(4 * base, rel=1e-12)


def test_diagonal_plan_lifts_to_unit_radii():
    mu = np.array([0.5, 1.0, 2.0])
    plan = lift_optimal_plan(np.diag(mu), mu, mu, 2)
    assert all(a.radius == 1.0 and b.radius == 1.0 for a, b, _ in plan.atoms)


@pytest.mark.parametrize("p", [1.0, 2.0, 3.0])
def test_dirac_plan_lift_has_the_expected_radii(p):
    a, b, d = 1.0, 4.0, 0.6
    theta = math.sqrt(a * b) * math.cos(d)
    plan = lift_optimal_plan([[theta]], [a], [b], p)
    (x, y, w), = plan.atoms
    assert x.radius == pytest.approx((a / theta) ** (1 / p))
    assert y.radius == pytest.approx((b / theta) ** (1 / p))
    assert homogeneous_marginal(plan, 1)[0] == pytest.approx(a)


def test_empty_rows_get_an_apex_correction_atom():
    plan = lift_optimal_plan([[1.0, 0.0], [0.0, 0.0]], [1.0, 0.7], [1.0, 0.0], 2)
    corrections = [(x, y, w) for x, y, w in plan.atoms if y.is_apex]
    assert corrections == [(ConePoint(1, 1.0), ConePoint(0, 0.0), 0.7)]


def test_plans_touching_massless_points_cannot_be_lifted():
    with pytest.raises(StructuralError):
        lift_optimal_plan([[1.0]], [0.0], [1.0], 2)


@given(seeds, st.integers(1, 5), st.integers(1, 5), st.sampled_from([1.0, 2.0, 3.0]))
def test_lifted_plans_reproduce_both_measures(seed, n1, n2, p):
    rng = np.random.default_rng(seed)
    g = rng.random((n1, n2)) * (rng.random((n1, n2)) < 0.6)
    mu1, mu2 = rng.uniform(0.1, 3, n1), rng.uniform(0.1, 3, n2)
    plan = lift_optimal_plan(g, mu1, mu2, p)
    np.testing.assert_allclose(homogeneous_marginal(plan, 1), mu1, rtol=0, atol=1e-9)
    np.testing.assert_allclose(homogeneous_marginal(plan, 2), mu2, rtol=0, atol=1e-9)


@given(seeds, st.sampled_from([KL, EntropyFunction("power", 2)]))
def test_objective_is_symmetric_and_label_invariant(seed, F):
    rng = np.random.default_rng(seed)
    mm1, mm2 = random_space(rng, 3), random_space(rng, 2)
    plan = lift_optimal_plan(rng.random((3, 2)), mm1.mass, mm2.mass, 2)
    cost = CostFunction("pow", 2)
    value = cgw_objective(plan, mm1, mm2, F, cost)
    swapped = ConePlan([(y, x, w) for x, y, w in plan.atoms], 2, 2, 3)
    assert cgw_objective(swapped, mm2, mm1, F, cost) == pytest.approx(value, rel=1e-12)
    shuffled = ConePlan([plan.atoms[k] for k in rng.permutation(len(plan.atoms))], 2, 3, 2)
    assert cgw_objective(shuffled, mm1, mm2, F, cost) == pytest.approx(value, rel=1e-12)


def test_bound_holds_between_identical_singletons():
    report = check_cgw_inequality(singleton(1), singleton(1), "hk", SturmOptions(seeds=2))
    assert report.holds and report.lifted_value == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=5)
@given(seeds, st.sampled_from(["hk", "ghk"]))
def test_bound_holds_on_random_spaces(seed, preset):
    rng = np.random.default_rng(seed)
    mm1, mm2 = random_space(rng, 3), random_space(rng, 2)
    report = check_cgw_inequality(mm1, mm2, preset, SturmOptions(seeds=2))
    assert report.holds
    assert report.marginal_error <= 1e-9


def test_bound_needs_a_superlinear_entropy():
    with pytest.raises(DomainError):
        check_cgw_inequality(two_point(1, 1, 1), singleton(1), "bl")
