"""Cone constructions: homogeneous marginals, lifted plans and the conic GW functional.

A cone point ``[x, r]`` is a base point with a radius; all radius-zero points
are the apex.  A cone plan is a finite list of weighted pairs of cone points.
Its ``p``-homogeneous marginal on side ``i`` pushes ``r_i^p`` times the plan
weight to the base point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .entropy import INF, DomainError, EntropyFunction, CostFunction, marginal_perspective
from .mmspace import Coupling, MetricMeasureSpace, StructuralError
from .presets import as_preset
from .sturm import SturmOptions, SturmProblem, joint_objective, sturm_distance


@dataclass(frozen=True)
class ConePoint:
    base: int
    radius: float

    def __post_init__(self):
        if not self.radius >= 0:
            raise StructuralError("cone radii are nonnegative")

    @property
    def is_apex(self) -> bool:
        return self.radius == 0

    def __eq__(self, other):
        if not isinstance(other, ConePoint):
            return NotImplemented
        if self.is_apex and other.is_apex:
            return True
        return self.base == other.base and self.radius == other.radius

    def __hash__(self):
        return hash(("apex",)) if self.is_apex else hash((self.base, self.radius))


@dataclass
class ConePlan:
    """Weighted atoms ``(point over X1, point over X2, weight)``."""

    atoms: list
    p: float
    n1: int
    n2: int

    def __post_init__(self):
        if self.p < 1:
            raise DomainError("the homogeneity exponent p must be at least 1")
        for a, b, w in self.atoms:
            if w < 0:
                raise StructuralError("cone plan weights are nonnegative")
            if not (0 <= a.base < self.n1 and 0 <= b.base < self.n2):
                raise StructuralError("cone point base index out of range")

    def arrays(self):
        """``(base1, radius1, base2, radius2, weight)`` as numpy arrays."""
        if not self.atoms:
            e = np.zeros(0)
            return e.astype(int), e, e.astype(int), e, e
        b1 = np.array([a.base for a, _, _ in self.atoms], dtype=int)
        r1 = np.array([a.radius for a, _, _ in self.atoms], dtype=float)
        b2 = np.array([b.base for _, b, _ in self.atoms], dtype=int)
        r2 = np.array([b.radius for _, b, _ in self.atoms], dtype=float)
        w = np.array([w for _, _, w in self.atoms], dtype=float)
        return b1, r1, b2, r2, w

    def scaled(self, factor: float) -> "ConePlan":
        return ConePlan([(a, b, w * factor) for a, b, w in self.atoms], self.p, self.n1, self.n2)


def homogeneous_marginal(alpha: ConePlan, side: int) -> np.ndarray:
    """Push-forward of ``radius^p * alpha`` to the base space of ``side``."""
    if side not in (1, 2):
        raise DomainError("side must be 1 or 2")
    b1, r1, b2, r2, w = alpha.arrays()
    base, radius, n = (b1, r1, alpha.n1) if side == 1 else (b2, r2, alpha.n2)
    out = np.zeros(n)
    np.add.at(out, base, w * radius ** alpha.p)
    return out


def _h_matrix(F: EntropyFunction, c, r, t):
    """Elementwise ``H_c(r, t)``; closed forms vectorized, the rest by scalar calls."""
    c = np.asarray(c, dtype=float)
    r = np.asarray(r, dtype=float)
    t = np.asarray(t, dtype=float)
    inf_c = ~np.isfinite(c)
    cf = np.where(inf_c, 0.0, c)
    if F.kind in ("kl", "scaled-kl"):
        n = 1.0 if F.kind == "kl" else F.param
        val = n * (r + t - 2.0 * np.sqrt(r * t) * np.exp(-cf / (2.0 * n)))
        val = np.maximum(val, 0.0)
    elif F.kind in ("tv", "pr-reg"):
        lo, hi = np.minimum(r, t), np.maximum(r, t)
        val = np.minimum(r + t, hi - lo + cf * lo)
    else:
        flat = [marginal_perspective(F, ci, ri, ti).value
                for ci, ri, ti in zip(cf.ravel(), r.ravel(), t.ravel())]
        val = np.array(flat).reshape(r.shape)
    edge = F.at_zero * (r + t)
    return np.where(inf_c, edge, val)


def cgw_objective(alpha: ConePlan, mm1: MetricMeasureSpace, mm2: MetricMeasureSpace,
                  F: EntropyFunction, cost: CostFunction) -> float:
    """Double sum ``sum_{k,k'} w_k w_k' H_{l(|d1 - d2|)}((r r')^p, (s s')^p)``.

    Apex points sit over base point 0; with a superlinear entropy their
    terms do not depend on the base, since ``H_c(u, 0) = F(0) u``.
    """
    if alpha.n1 != mm1.n or alpha.n2 != mm2.n:
        raise StructuralError("cone plan does not match the spaces")
    b1, r1, b2, r2, w = alpha.arrays()
    if w.size == 0:
        return 0.0
    b1 = np.where(r1 > 0, b1, 0)
    b2 = np.where(r2 > 0, b2, 0)
    gap = np.abs(mm1.dist[np.ix_(b1, b1)] - mm2.dist[np.ix_(b2, b2)])
    c = np.asarray(cost(gap), dtype=float)
    p = alpha.p
    R = np.outer(r1, r1) ** p
    S = np.outer(r2, r2) ** p
    H = _h_matrix(F, c, R, S)
    W = np.outer(w, w)
    return float(np.sum(np.where(W > 0, W * H, 0.0)))


def lift_optimal_plan(gamma, mu1, mu2, p: float) -> ConePlan:
    """Cone plan with ``p``-homogeneous marginals ``(mu1, mu2)`` built from ``gamma``.

    Each positive entry becomes an atom with radii ``(mu_i / gamma_i)^(1/p)``
    evaluated at the plan's marginals; rows or columns that carry no plan
    mass get an atom pairing the unit-radius point with the apex.
    """
    g = gamma.gamma if isinstance(gamma, Coupling) else np.asarray(gamma, dtype=float)
    mu1 = np.asarray(mu1, dtype=float)
    mu2 = np.asarray(mu2, dtype=float)
    n1, n2 = g.shape
    g1, g2 = g.sum(axis=1), g.sum(axis=0)
    if np.any((g1 > 0) & (mu1 <= 0)) or np.any((g2 > 0) & (mu2 <= 0)):
        raise StructuralError("plan moves mass from or to a point without mass")
    atoms = []
    rad1 = np.where(g1 > 0, (mu1 / np.where(g1 > 0, g1, 1.0)) ** (1.0 / p), 0.0)
    rad2 = np.where(g2 > 0, (mu2 / np.where(g2 > 0, g2, 1.0)) ** (1.0 / p), 0.0)
    for i, j in zip(*np.nonzero(g > 0)):
        atoms.append((ConePoint(int(i), float(rad1[i])), ConePoint(int(j), float(rad2[j])),
                      float(g[i, j])))
    for i in np.flatnonzero((g1 == 0) & (mu1 > 0)):
        atoms.append((ConePoint(int(i), 1.0), ConePoint(0, 0.0), float(mu1[i])))
    for j in np.flatnonzero((g2 == 0) & (mu2 > 0)):
        atoms.append((ConePoint(0, 0.0), ConePoint(int(j), 1.0), float(mu2[j])))
    return ConePlan(atoms, p, n1, n2)


@dataclass
class CgwReport:
    lifted_value: float
    bound: float
    sturm_value: float
    holds: bool
    marginal_error: float
    tol: float
    details: dict = field(default_factory=dict)

    @property
    def slack(self) -> float:
        return self.bound - self.lifted_value


def check_cgw_inequality(mm1: MetricMeasureSpace, mm2: MetricMeasureSpace, preset="hk",
                         options: Optional[SturmOptions] = None, p: Optional[float] = None,
                         tol: float = 1e-5, floor: float = 1e-12) -> CgwReport:
    """Compare the lifted conic functional with ``(m1^a + m2^a)`` times the Sturm value.

    The Sturm plan is cleaned of entries below ``floor`` times its largest
    entry before lifting, which keeps the radii finite; the right-hand side
    uses the objective of that cleaned plan when it is larger, so the
    comparison stays valid.
    """
    preset = as_preset(preset)
    if not preset.F.superlinear:
        raise DomainError("the conic lift needs a superlinear entropy")
    p = preset.p_homogeneity if p is None else p
    problem = SturmProblem.from_preset(mm1, mm2, preset)
    sol = sturm_distance(problem, options)
    g = np.array(sol.gamma.gamma)
    g[g <= floor * max(g.max(initial=0.0), 1e-300)] = 0.0
    raw = joint_objective(problem, g, sol.D.D)
    value = max(sol.value, raw ** preset.a if np.isfinite(raw) else INF)
    alpha = lift_optimal_plan(g, mm1.mass, mm2.mass, p)
    err = max(np.abs(homogeneous_marginal(alpha, 1) - mm1.mass).max(initial=0.0),
              np.abs(homogeneous_marginal(alpha, 2) - mm2.mass).max(initial=0.0))
    lifted = cgw_objective(alpha, mm1, mm2, preset.F, preset.cost) ** preset.a
    bound = (mm1.total_mass ** preset.a + mm2.total_mass ** preset.a) * value
    return CgwReport(lifted, bound, value, bool(lifted <= bound + tol), float(err), tol,
                     {"preset": preset.name, "p": p, "atoms": len(alpha.atoms)})


__all__ = ["ConePoint", "ConePlan", "homogeneous_marginal", "cgw_objective",
           "lift_optimal_plan", "check_cgw_inequality", "CgwReport"]
