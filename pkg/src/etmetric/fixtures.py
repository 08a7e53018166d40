"""Bundled fixture spaces and seeded random instance generators."""

from __future__ import annotations

import numpy as np

from .mmspace import MetricMeasureSpace


def singleton(mass: float) -> MetricMeasureSpace:
    return MetricMeasureSpace(np.zeros((1, 1)), [mass])


def two_point(d: float, m1: float, m2: float) -> MetricMeasureSpace:
    return MetricMeasureSpace([[0.0, d], [d, 0.0]], [m1, m2])


def tiny_fixtures() -> dict:
    """Eight one- and two-point spaces, keyed by a short descriptive name."""
    return {
        "unit-singleton": singleton(1.0),
        "heavy-singleton": singleton(4.0),
        "light-singleton": singleton(0.25),
        "pair-d1-even": two_point(1.0, 0.5, 0.5),
        "pair-d2-even": two_point(2.0, 0.5, 0.5),
        "pair-d0.5-skewed": two_point(0.5, 1.0, 2.0),
        "pair-d1.5-skewed": two_point(1.5, 0.3, 1.2),
        "pair-d0.8-heavy": two_point(0.8, 2.0, 0.5),
    }


def random_space(rng: np.random.Generator, n: int, dim: int = 2, mass_range=(0.3, 2.0),
                 scale: float = 1.0) -> MetricMeasureSpace:
    """``n`` uniform points in a box with uniform random masses."""
    pts = rng.random((n, dim)) * scale
    return MetricMeasureSpace.from_points(pts, rng.uniform(*mass_range, size=n))


def random_measure_pair(rng: np.random.Generator, n: int, dim: int = 2,
                        mass_range=(0.3, 2.0), sparsity: float = 0.0):
    """Two measures on one random point cloud; ``sparsity`` zeroes atoms at random."""
    space = random_space(rng, n, dim, mass_range)
    mu1 = rng.uniform(*mass_range, size=n)
    mu2 = rng.uniform(*mass_range, size=n)
    if sparsity > 0:
        mu1[rng.random(n) < sparsity] = 0.0
        mu2[rng.random(n) < sparsity] = 0.0
        mu1[rng.integers(n)] = rng.uniform(*mass_range)
        mu2[rng.integers(n)] = rng.uniform(*mass_range)
    return space.with_mass(mu1), space.with_mass(mu2)


def permuted_copy_pair(rng: np.random.Generator, n: int):
    space = random_space(rng, n)
    return space, space.permuted(rng.permutation(n))


def delta_configuration_pair(rng: np.random.Generator, n: int, atom_mass: float,
                             perturbation: float = 0.2):
    """Two ``n``-point configurations with uniform atom mass, the second a jittered copy."""
    pts = rng.random((n, 2))
    moved = pts + perturbation * (rng.random((n, 2)) - 0.5)
    mass = np.full(n, atom_mass)
    return MetricMeasureSpace.from_points(pts, mass), MetricMeasureSpace.from_points(moved, mass)
