"""Sturm-Entropy-Transport distances between finite metric measure spaces.

The distance is the joint infimum over plans ``gamma`` and pseudo-metric
couplings (cross blocks ``D``) of::

    D_F(gamma_1 || mu1) + D_F(gamma_2 || mu2) + sum_ij l(D_ij) gamma_ij

raised to the power ``a``.  The joint problem is nonconvex, so
:func:`sturm_distance` runs alternating minimization from several seeds and
reports the best pair found: an upper bound, not a certificate of
optimality.  Exact values are available for the pure-entropy limit, and
:func:`brute_force_sturm` grid-searches tiny instances.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .entropy import INF, CostFunction, DomainError, EntropyFunction, marginal_perspective, xmul
from .et_solver import (EtOptions, EtProblem, balanced_lp, barrier_solve, et_objective,
                        solve_et, tv_lp)
from .lp import LinearProgram, LpError, solve_lp
from .mmspace import (Coupling, CrossDistanceMatrix, MetricMeasureSpace, StructuralError,
                      canonical_coupling, correspondence_coupling, cross_violations,
                      validate_cross_distance)
from .presets import Preset, as_preset


@dataclass(frozen=True, eq=False)
class SturmProblem:
    mm1: MetricMeasureSpace
    mm2: MetricMeasureSpace
    F: EntropyFunction
    cost: CostFunction
    a: float

    @classmethod
    def from_preset(cls, mm1, mm2, preset) -> "SturmProblem":
        preset = as_preset(preset)
        return cls(mm1, mm2, preset.F, preset.cost, preset.a)

    def with_spaces(self, mm1, mm2) -> "SturmProblem":
        return SturmProblem(mm1, mm2, self.F, self.cost, self.a)

    def et_problem(self, D) -> EtProblem:
        return EtProblem(self.cost(np.asarray(D, dtype=float)), self.mm1.mass, self.mm2.mass, self.F)


@dataclass
class SturmOptions:
    seeds: int = 8
    max_outer: int = 50
    tol: float = 1e-9
    seed: int = 0
    et: EtOptions = field(default_factory=EtOptions)


@dataclass
class SturmSolution:
    value: float
    gamma: Coupling
    D: CrossDistanceMatrix
    seeds_tried: int = 0
    seed_values: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)


def joint_objective(problem: SturmProblem, gamma, D) -> float:
    """The un-powered objective of a pair ``(gamma, D)``."""
    return et_objective(problem.et_problem(D), gamma)[0]


# --------------------------------------------------------------------------
# the cross-block subproblem

def _coupling_rows(n1, n2, d1, d2):
    """Constraint matrix ``A D <= b`` of the four disjoint-union families."""
    rows, rhs = [], []

    def idx(i, j):
        return i * n2 + j

    for j in range(n2):
        for i in range(n1):
            for k in range(n1):
                if i != k:
                    r = np.zeros(n1 * n2)
                    r[idx(i, j)] += 1.0
                    r[idx(k, j)] -= 1.0
                    rows.append(r)
                    rhs.append(d1[i, k])
                    if i < k:
                        r = np.zeros(n1 * n2)
                        r[idx(i, j)] -= 1.0
                        r[idx(k, j)] -= 1.0
                        rows.append(r)
                        rhs.append(-d1[i, k])
    for i in range(n1):
        for j in range(n2):
            for l in range(n2):
                if j != l:
                    r = np.zeros(n1 * n2)
                    r[idx(i, j)] += 1.0
                    r[idx(i, l)] -= 1.0
                    rows.append(r)
                    rhs.append(d2[l, j])
                    if j < l:
                        r = np.zeros(n1 * n2)
                        r[idx(i, j)] -= 1.0
                        r[idx(i, l)] -= 1.0
                        rows.append(r)
                        rhs.append(-d2[j, l])
    if not rows:
        return np.zeros((0, n1 * n2)), np.zeros(0)
    return np.array(rows), np.array(rhs)


def _solve_cross_lp(c, A, b, upper, n_extra=0, extra_rows=None, extra_rhs=None):
    k = A.shape[1]
    nv = k + n_extra
    A_full = np.hstack([A, np.zeros((A.shape[0], n_extra))]) if n_extra else A
    if extra_rows is not None and len(extra_rows):
        A_full = np.vstack([A_full, extra_rows])
        b = np.concatenate([b, extra_rhs])
    up = np.concatenate([upper, np.full(n_extra, np.inf)])
    lp = LinearProgram(c, A_full, ["<="] * A_full.shape[0], b, np.zeros(nv), up)
    return solve_lp(lp)


def _chord_rows(cost, breaks, weighted, k):
    """Epigraph rows ``t_e >= chord`` of ``cost`` between consecutive breakpoints.

    ``breaks[e]`` is the sorted breakpoint array of weighted entry ``e``.
    """
    nw = len(weighted)
    blocks, rhs = [], []
    for e, ent in enumerate(weighted):
        bp = breaks[e]
        vals = np.asarray(cost(bp), dtype=float)
        slopes = np.diff(vals) / np.diff(bp)
        rows = np.zeros((len(slopes), k + nw))
        rows[:, ent] = slopes
        rows[:, k + e] = -1.0
        blocks.append(rows)
        rhs.append(slopes * bp[:-1] - vals[:-1])
    return np.vstack(blocks), np.concatenate(rhs)


def _initial_breaks(cap, centre, levels=6):
    """Breakpoints on ``[0, cap]`` clustered geometrically around ``centre``."""
    if cap <= 0:
        return np.array([0.0, 1e-300])
    if centre is None:
        return np.linspace(0.0, cap, 17)
    offsets = cap * 0.5 ** np.arange(1, levels + 1)
    pts = np.concatenate([[0.0, cap, centre], centre + offsets, centre - offsets,
                          np.linspace(0.0, cap, 5)])
    return np.unique(np.clip(pts, 0.0, cap))


def _barrier_cross(w, cost: CostFunction, A, b, upper, tol=1e-10, max_iter=400):
    """Log-barrier Newton for ``min sum_e w_e l(D_e)`` over ``A D <= b, 0 <= D <= upper``.

    Starts from the constant block halfway between half the largest base
    distance and the smallest cap, which is strictly feasible whenever the
    base distances between distinct points are positive.  Returns ``None``
    when no such start exists or the iteration breaks down.
    """
    k = w.shape[0]
    half = 0.5 * max(float(np.max(-b[b < 0], initial=0.0)), 0.0)
    top = float(upper.min())
    if not top > half:
        return None
    D = np.full(k, 0.5 * (half + top))
    G = np.vstack([A, -np.eye(k), np.eye(k)])
    h = np.concatenate([b, np.zeros(k), upper])
    if np.any(h - G @ D <= 0):
        return None
    m = G.shape[0]
    t = 1.0
    active = w > 0

    def phi(x, tt):
        s = h - G @ x
        if np.any(s <= 0):
            return np.inf
        lv = np.asarray(cost(x[active]), dtype=float)
        return tt * float(w[active] @ lv) - float(np.sum(np.log(s)))

    it = 0
    while it < max_iter:
        while it < max_iter:
            it += 1
            s = h - G @ D
            g1, g2 = cost.derivatives(np.where(active, D, 1.0))
            grad = t * np.where(active, w * g1, 0.0) + G.T @ (1.0 / s)
            H = (G.T * (1.0 / s ** 2)) @ G + np.diag(t * np.where(active, w * g2, 0.0))
            try:
                step = -np.linalg.solve(H, grad)
            except np.linalg.LinAlgError:
                return None
            dec = float(-grad @ step)
            if not np.isfinite(dec):
                return None
            f0 = phi(D, t)
            if dec <= 1e-10 or dec <= 1e-12 * abs(f0):
                break
            Gs = G @ step
            grow = Gs > 0
            lam = min(1.0, 0.99 * float(np.min(s[grow] / Gs[grow], initial=np.inf)))
            while lam > 1e-14 and not phi(D + lam * step, t) <= f0 - 0.25 * lam * dec:
                lam *= 0.5
            if lam <= 1e-14 or np.abs(lam * step).max() <= 1e-15 * (1.0 + np.abs(D).max()):
                return D
            D = D + lam * step
        value = float(w @ np.where(active, cost(np.where(active, D, 0.0)), 0.0))
        if m / t <= tol * max(value, 1e-300) or t > 1e14:
            break
        t *= 20.0
    return D


def min_metric_coupling(gamma, d1, d2, cost: CostFunction, incumbent=None,
                        tol: float = 1e-8, max_rounds: int = 12,
                        weight_floor: float = 1e-12) -> CrossDistanceMatrix:
    """Minimize ``sum_ij gamma_ij l(D_ij)`` over valid cross blocks ``D``.

    Linear costs give a single LP.  Smooth convex costs go through a
    log-barrier Newton solve.  When the valid blocks have no strictly
    interior point (coincident base points) the cost is replaced by its
    chord interpolant on a per-entry breakpoint grid, a majorant that is
    exact at the breakpoints, clustered around the incumbent and refined
    around each LP minimizer until the objective stalls.  The incumbent is
    kept whenever it is better, so the objective never increases.  Entries
    whose weight is below ``weight_floor`` times the plan mass are set to
    the smallest values compatible with the weighted ones by a second LP.
    """
    g = gamma.gamma if isinstance(gamma, Coupling) else np.asarray(gamma, dtype=float)
    d1 = np.asarray(d1, dtype=float)
    d2 = np.asarray(d2, dtype=float)
    n1, n2 = g.shape
    k = n1 * n2
    box = max(d1.max(initial=0.0), d2.max(initial=0.0))
    w = g.reshape(-1).copy()
    w[w <= weight_floor * max(w.sum(), 1e-300)] = 0.0
    scale = w.sum()
    if scale > 0:
        w = w / scale
    A, b = _coupling_rows(n1, n2, d1, d2)
    upper = np.full(k, box)
    inc = None
    if incumbent is not None:
        inc = np.minimum(np.asarray(getattr(incumbent, "D", incumbent), dtype=float).reshape(-1), box)

    def objective(D):
        return float(np.sum(xmul(w, np.asarray(cost(D), dtype=float))))

    weighted = np.flatnonzero(w > 0)
    if weighted.size == 0 or k == 1 and box == 0:
        D = _minimal_completion(A, b, upper, np.zeros(k), np.zeros(0, dtype=int), k)
        return CrossDistanceMatrix(D.reshape(n1, n2), d1, d2)

    slope = cost.linear_slope
    if cost.kind == "pe":
        # zero cross distance wherever mass moves; any other weighted entry costs inf
        up = upper.copy()
        up[weighted] = 0.0
        sol = _solve_cross_lp(np.ones(k), A, b, up)
        D = sol.x if sol.optimal else (inc if inc is not None else _canonical_block(d1, d2))
    elif slope is not None:
        sol = _solve_cross_lp(w * slope, A, b, upper).require_optimal()
        D = sol.x
    else:
        cap = box
        if cost.finite_radius < INF:
            cap = min(box, cost.finite_radius * (1.0 - 1e-9))
            if inc is not None:
                cap = max(cap, float(inc[weighted].max()))
            upper = upper.copy()
            upper[weighted] = cap
        best_D, best_val = (inc, objective(inc)) if inc is not None else (None, INF)
        D_bar = _barrier_cross(w, cost, A, b, upper)
        rounds = max_rounds
        if D_bar is not None:
            D_bar = np.clip(D_bar, 0.0, upper)
            if objective(D_bar) < best_val:
                best_D, best_val = D_bar, objective(D_bar)
            rounds = 0
        breaks = [_initial_breaks(cap, None if inc is None else float(min(inc[e], cap)))
                  for e in weighted]
        prev = INF
        for _ in range(rounds):
            rows, rhs = _chord_rows(cost, breaks, weighted, k)
            cvec = np.concatenate([np.zeros(k), w[weighted]])
            sol = _solve_cross_lp(cvec, A, b, upper, len(weighted), rows, rhs)
            if not sol.optimal:
                break
            D_new = np.clip(sol.x[:k], 0.0, None)
            val = objective(D_new)
            if val < best_val:
                best_D, best_val = D_new, val
            if prev - sol.value <= tol * max(sol.value, 1e-300):
                break
            prev = sol.value
            # split the segments on either side of each minimizing entry
            for e, ent in enumerate(weighted):
                bp = breaks[e]
                x = min(D_new[ent], cap)
                j = int(np.searchsorted(bp, x))
                new = [x] + [0.5 * (bp[s - 1] + bp[s]) for s in (j - 1, j, j + 1)
                             if 0 < s < len(bp)]
                breaks[e] = np.union1d(bp, new)
        if best_D is None:
            raise LpError("cross-block LP failed without an incumbent")
        D = best_D
    D = _minimal_completion(A, b, upper, D, weighted, k)
    return CrossDistanceMatrix(D.reshape(n1, n2), d1, d2)


def _canonical_block(d1, d2):
    return (d1[:, 0][:, None] + d2[0, :][None, :]).reshape(-1)


def _minimal_completion(A, b, upper, D, weighted, k):
    """Lower every entry as far as the constraints allow, weighted ones capped at ``D``."""
    if weighted.size == k:
        return np.clip(D, 0.0, None)
    up = upper.copy()
    up[weighted] = np.minimum(up[weighted], D[weighted])
    if A.shape[0] == 0:
        out = np.zeros(k)
        return out
    sol = _solve_cross_lp(np.ones(k), A, b, up)
    if not sol.optimal:
        return np.clip(D, 0.0, None)
    out = np.clip(sol.x, 0.0, None)
    out[weighted] = np.minimum(out[weighted], D[weighted])
    return out


def _repair(D, d1, d2, tol=1e-10):
    """Nudge tiny LP round-off so the block passes validation."""
    D = np.asarray(D, dtype=float)
    lip1, lip2, tri1, tri2 = cross_violations(D, d1, d2)
    worst = max(a.max(initial=0.0) for a in (lip1, lip2, tri1, tri2))
    if worst <= 0:
        return D
    if max(tri1.max(initial=0.0), tri2.max(initial=0.0)) > 0 and \
            max(lip1.max(initial=0.0), lip2.max(initial=0.0)) <= 0:
        return D + 0.5 * max(tri1.max(initial=0.0), tri2.max(initial=0.0))
    return D


# --------------------------------------------------------------------------
# seeds

def _orientation_key(mm: MetricMeasureSpace):
    return (mm.n, tuple(np.round(mm.mass, 15)), tuple(np.round(mm.dist.reshape(-1), 15)))


def _injections(n_small, n_large, limit=50000):
    count = 0
    for perm in itertools.permutations(range(n_large), n_small):
        yield perm
        count += 1
        if count >= limit:
            return


def _distortion(d1, d2, pairs):
    ks = [p[0] for p in pairs]
    ls = [p[1] for p in pairs]
    return float(np.abs(d1[np.ix_(ks, ks)] - d2[np.ix_(ls, ls)]).max())


def _seed_blocks(mm1: MetricMeasureSpace, mm2: MetricMeasureSpace, budget: int, rng):
    """Up to ``budget`` distinct starting cross blocks.

    Matchings of least distortion come first (they contain the isometric
    and near-isometric cases), then the greedy mass-ordered matching, then
    canonical gluings through basepoint pairs at growing offsets, and one
    quarter of the budget goes to random matchings with random slack.
    """
    d1, d2 = mm1.dist, mm2.dist
    n1, n2 = mm1.n, mm2.n
    span = mm1.diameter + mm2.diameter
    n_random = max(1, budget // 4)
    structured = []
    transpose = n1 > n2
    small, large = (n2, n1) if transpose else (n1, n2)
    ds, dl = (d2, d1) if transpose else (d1, d2)
    ms, ml = (mm2.mass, mm1.mass) if transpose else (mm1.mass, mm2.mass)
    if large <= 6:
        scored = []
        for perm in _injections(small, large):
            pairs = list(zip(range(small), perm))
            dis = _distortion(ds, dl, pairs)
            overlap = -sum(math.sqrt(ms[i] * ml[j]) for i, j in pairs)
            scored.append((round(dis, 12), overlap, perm))
        scored.sort()
        for dis, _, perm in scored[:3]:
            pairs = [(j, i) for i, j in zip(range(small), perm)] if transpose else \
                list(zip(range(small), perm))
            structured.append(correspondence_coupling(d1, d2, pairs).D)
    order1 = np.argsort(-mm1.mass, kind="stable")
    order2 = np.argsort(-mm2.mass, kind="stable")
    greedy = list(zip(order1.tolist(), order2.tolist()))
    structured.append(correspondence_coupling(d1, d2, greedy).D)
    bases = [(int(i), int(j)) for i in order1[:3] for j in order2[:3]]
    for factor in (0.0, 0.5, 1.0, 2.0):
        for i, j in bases:
            structured.append(canonical_coupling(mm1, mm2, i, j, c=factor * span).D)
    randoms = []
    for _ in range(n_random):
        m = int(rng.integers(1, min(n1, n2) + 1))
        ks = rng.permutation(n1)[:m]
        ls = rng.permutation(n2)[:m]
        extra = float(rng.uniform(0.0, 0.5 * span)) if span > 0 else 0.0
        randoms.append(correspondence_coupling(d1, d2, list(zip(ks, ls)), extra).D)
    out, seen = [], set()
    for kind, blocks, cap in (("structured", structured, budget - n_random),
                              ("random", randoms, budget)):
        for D in blocks:
            if len(out) >= cap:
                break
            key = tuple(np.round(np.asarray(D).reshape(-1), 12))
            if key not in seen:
                seen.add(key)
                out.append((kind, np.asarray(D, dtype=float)))
    return out


# --------------------------------------------------------------------------
# alternating minimization

def _alternate(problem: SturmProblem, D0, options: SturmOptions):
    d1, d2 = problem.mm1.dist, problem.mm2.dist
    D = np.asarray(D0, dtype=float)
    sol = solve_et(problem.et_problem(D), options.et)
    gamma = sol.gamma.gamma
    value = sol.value
    trace = [value]
    outer = 0
    mass = problem.mm1.total_mass + problem.mm2.total_mass
    for outer in range(1, options.max_outer + 1):
        if not np.isfinite(value) or value <= 1e-15 * mass:
            break
        try:
            cand = min_metric_coupling(gamma, d1, d2, problem.cost, incumbent=D).D
        except LpError:
            break
        best_pair = (gamma, D, value)
        for g_try in (gamma, _thresholded(gamma)):
            v = joint_objective(problem, g_try, cand)
            if v < best_pair[2]:
                best_pair = (g_try, cand, v)
        gamma_b, D_b, val_b = best_pair
        et_sol = solve_et(problem.et_problem(D_b), options.et)
        if et_sol.value < val_b:
            gamma_b, val_b = et_sol.gamma.gamma, et_sol.value
        improvement = value - val_b
        if improvement < 0:
            improvement = 0.0
        gamma, D = gamma_b, D_b
        value = min(value, val_b)
        trace.append(value)
        if improvement <= options.tol * max(value, 1e-300):
            break
    return gamma, D, value, trace, outer


def _thresholded(gamma, rel=1e-9):
    g = np.array(gamma, dtype=float)
    g[g <= rel * max(g.max(initial=0.0), 1e-300)] = 0.0
    return g


def _degenerate(problem: SturmProblem):
    """Either space massless: the empty plan is optimal."""
    n1, n2 = problem.mm1.n, problem.mm2.n
    gamma = np.zeros((n1, n2))
    D = canonical_coupling(problem.mm1, problem.mm2, 0, 0).D
    raw = joint_objective(problem, gamma, D)
    if problem.F.kind == "indicator" and problem.mm1.total_mass == problem.mm2.total_mass:
        raw = 0.0
    value = raw ** problem.a if np.isfinite(raw) else INF
    return SturmSolution(value, Coupling(gamma), CrossDistanceMatrix(D, problem.mm1.dist,
                                                                     problem.mm2.dist),
                         0, [], {"method": "analytic", "objective": raw})


def _transpose_solution(sol: SturmSolution, problem: SturmProblem) -> SturmSolution:
    return SturmSolution(sol.value, Coupling(sol.gamma.gamma.T),
                         CrossDistanceMatrix(sol.D.D.T, problem.mm1.dist, problem.mm2.dist),
                         sol.seeds_tried, sol.seed_values, sol.diagnostics)


def sturm_distance(problem: SturmProblem, options: Optional[SturmOptions] = None) -> SturmSolution:
    """Multi-start alternating minimization over ``(gamma, D)``.

    For a fixed cross block the ET problem is solved exactly; for a fixed
    plan :func:`min_metric_coupling` improves the block.  A step is kept only
    when the joint objective does not increase, so each seed's trace is
    nonincreasing.  The returned value is the best objective over all seeds,
    raised to the power ``a``.  The result is symmetric in the two spaces
    because the pair is always solved in a canonical orientation.
    """
    options = options or SturmOptions()
    if _orientation_key(problem.mm1) > _orientation_key(problem.mm2):
        swapped = problem.with_spaces(problem.mm2, problem.mm1)
        return _transpose_solution(sturm_distance(swapped, options), problem)
    if problem.cost.kind == "pe":
        p = problem.F.param if problem.F.kind == "power" else 1.0
        if problem.F.kind not in ("kl", "power"):
            raise DomainError("the pure-entropy limit is defined for the power-like entropies")
        return sturm_pure_entropy(problem.mm1, problem.mm2, p)
    if problem.F.kind == "indicator":
        m1, m2 = problem.mm1.total_mass, problem.mm2.total_mass
        if abs(m1 - m2) > 1e-12 * max(1.0, m1, m2):
            sol = _degenerate(problem)
            sol.value = INF
            sol.diagnostics = {"method": "analytic", "infeasible": True,
                               "reason": "unequal total masses"}
            return sol
    if problem.mm1.total_mass == 0 or problem.mm2.total_mass == 0:
        return _degenerate(problem)
    rng = np.random.default_rng(options.seed)
    seeds = _seed_blocks(problem.mm1, problem.mm2, max(2, options.seeds), rng)
    results = []
    for kind, D0 in seeds:
        gamma, D, value, trace, outer = _alternate(problem, D0, options)
        results.append((value, tuple(np.round(D.reshape(-1), 12)), kind, gamma, D, trace, outer))
        if value <= 1e-15 * (problem.mm1.total_mass + problem.mm2.total_mass):
            break
    results.sort(key=lambda r: (r[0], r[1]))
    value, _, kind, gamma, D, trace, outer = results[0]
    D = _repair(D, problem.mm1.dist, problem.mm2.dist)
    raw = joint_objective(problem, gamma, D)
    return SturmSolution(raw ** problem.a if np.isfinite(raw) else INF, Coupling(gamma),
                         CrossDistanceMatrix(D, problem.mm1.dist, problem.mm2.dist),
                         len(results), [r[0] for r in results],
                         {"method": "alternating", "best_seed": kind, "outer_iterations": outer,
                          "objective_trace": trace, "objective": raw})


# --------------------------------------------------------------------------
# exact and limiting variants

def _partial_isometries(mm1, mm2, rtol=1e-9):
    s1 = mm1.support.tolist()
    s2 = mm2.support.tolist()
    d1, d2 = mm1.dist, mm2.dist

    def compatible(pairs, i, j):
        return all(abs(d1[i, k] - d2[j, l]) <= rtol * (1.0 + d1[i, k]) for k, l in pairs)

    def extend(pos, pairs, used):
        if pos == len(s1):
            yield list(pairs)
            return
        i = s1[pos]
        yield from extend(pos + 1, pairs, used)
        for j in s2:
            if j not in used and compatible(pairs, i, j):
                pairs.append((i, j))
                used.add(j)
                yield from extend(pos + 1, pairs, used)
                pairs.pop()
                used.discard(j)

    yield from extend(0, [], set())


def sturm_pure_entropy(mm1: MetricMeasureSpace, mm2: MetricMeasureSpace, p: float = 1.0,
                       max_points: int = 8, heuristic: bool = False) -> SturmSolution:
    """Pure-entropy Sturm distance by enumerating partial isometries.

    Matched pairs sit at cross distance zero and pay ``H_0``; every unmatched
    atom pays ``F(0)`` times its mass.  Returns the square root of the best
    total (the exponent is ``1/2``).
    """
    F = EntropyFunction("kl") if p == 1 else EntropyFunction("power", p)
    s1, s2 = mm1.support, mm2.support
    if min(len(s1), len(s2)) > max_points and not heuristic:
        raise StructuralError(f"enumeration guard: supports larger than {max_points}")
    f0 = F.at_zero
    best = None
    count = 0
    candidates = _partial_isometries(mm1, mm2) if not heuristic or \
        min(len(s1), len(s2)) <= max_points else iter([_greedy_isometry(mm1, mm2)])
    for pairs in candidates:
        count += 1
        matched1 = {i for i, _ in pairs}
        matched2 = {j for _, j in pairs}
        val = sum(marginal_perspective(F, 0.0, mm1.mass[i], mm2.mass[j]).value for i, j in pairs)
        val += f0 * (sum(mm1.mass[i] for i in s1 if i not in matched1)
                     + sum(mm2.mass[j] for j in s2 if j not in matched2))
        key = (val, tuple(pairs))
        if best is None or key < best[0]:
            best = (key, pairs)
    (raw, _), pairs = best
    gamma = np.zeros((mm1.n, mm2.n))
    for i, j in pairs:
        gamma[i, j] = marginal_perspective(F, 0.0, mm1.mass[i], mm2.mass[j]).argmin_theta
    if pairs:
        D = correspondence_coupling(mm1.dist, mm2.dist, pairs).D
    else:
        D = canonical_coupling(mm1, mm2, 0, 0, c=1.0).D
    return SturmSolution(math.sqrt(raw), Coupling(gamma), CrossDistanceMatrix(D, mm1.dist, mm2.dist),
                         count, [], {"method": "enumeration", "matching": [list(map(int, q)) for q in pairs],
                                     "objective": raw})


def _greedy_isometry(mm1, mm2):
    pairs = []
    used = set()
    for i in np.argsort(-mm1.mass, kind="stable"):
        if mm1.mass[i] <= 0:
            continue
        for j in np.argsort(-mm2.mass, kind="stable"):
            if mm2.mass[j] <= 0 or j in used:
                continue
            if all(abs(mm1.dist[i, k] - mm2.dist[j, l]) <= 1e-9 * (1 + mm1.dist[i, k]) for k, l in pairs):
                pairs.append((int(i), int(j)))
                used.add(j)
                break
    return pairs


def sturm_dp(mm1: MetricMeasureSpace, mm2: MetricMeasureSpace, p: float = 2.0,
             options: Optional[SturmOptions] = None) -> SturmSolution:
    """Balanced Sturm distance: the indicator entropy with cost ``d^p`` and exponent ``1/p``.

    Unequal total masses give ``+inf``.  Equal but unnormalized masses are
    handled directly (the value is ``m^(1/p)`` times the normalized one).
    """
    problem = SturmProblem.from_preset(mm1, mm2, f"wp:{p:g}")
    return sturm_distance(problem, options)


def sturm_bl(mm1: MetricMeasureSpace, mm2: MetricMeasureSpace,
             options: Optional[SturmOptions] = None) -> SturmSolution:
    """Sturm lift of the bounded-Lipschitz distance; both subproblems are LPs."""
    return sturm_distance(SturmProblem.from_preset(mm1, mm2, "bl"), options)


# --------------------------------------------------------------------------
# grid oracle

def _pareto_blocks(d1, d2, values):
    """Cross blocks that cannot be lowered entrywise, parametrized by a grid.

    Lowering an entry never increases the objective, so it suffices to
    search the minimal elements of the constraint set.  Returns the array of
    candidate blocks (feasibility-filtered) and the number of free
    coordinates.
    """
    n1, n2 = d1.shape[0], d2.shape[0]
    if n1 == 1 and n2 == 1:
        return np.zeros((1, 1, 1))
    if n1 == 1 or n2 == 1:
        span = float(d2[0, 1] if n1 == 1 else d1[0, 1])
        t = values[values <= span]
        blocks = np.stack([t, span - t], axis=1)
        return blocks.reshape(-1, 1, 2) if n1 == 1 else blocks.reshape(-1, 2, 1)
    a, b = float(d1[0, 1]), float(d2[0, 1])
    g11, g12, g21 = np.meshgrid(values, values, values, indexing="ij")
    g11, g12, g21 = g11.ravel(), g12.ravel(), g21.ravel()
    g22 = np.maximum.reduce([np.zeros_like(g11), a - g12, b - g21, g12 - a, g21 - b])
    blocks = np.stack([g11, g12, g21, g22], axis=1).reshape(-1, 2, 2)
    return _feasible(blocks, d1, d2)


def _feasible(blocks, d1, d2, tol=1e-12):
    if blocks.shape[0] == 0:
        return blocks
    ok = np.ones(blocks.shape[0], dtype=bool)
    for arr in _batched_violations(blocks, d1, d2):
        ok &= arr.reshape(blocks.shape[0], -1).max(axis=1, initial=-np.inf) <= tol
    return blocks[ok]


def _batched_violations(D, d1, d2):
    lip1 = D[:, :, None, :] - d1[None, :, :, None] - D[:, None, :, :]
    lip2 = D[:, :, :, None] - D[:, :, None, :] - d2.T[None, None, :, :]
    tri1 = d1[None, :, :, None] - D[:, :, None, :] - D[:, None, :, :]
    tri2 = d2[None, None, :, :] - D[:, :, :, None] - D[:, :, None, :]
    return lip1, lip2, tri1, tri2


def _batch_et_values(problem: SturmProblem, blocks):
    costs = np.asarray(problem.cost(blocks), dtype=float)
    mu1, mu2 = problem.mm1.mass, problem.mm2.mass
    F = problem.F
    if F.smooth:
        _, vals, _ = barrier_solve(costs, mu1, mu2, F, tol=1e-13)
        return vals
    solver = balanced_lp if F.kind == "indicator" else tv_lp
    return np.array([solver(EtProblem(c, mu1, mu2, F)).value for c in costs])


def brute_force_sturm(problem: SturmProblem, grid_step: float = 1.0 / 128,
                      coarse_points: int = 17, keep: int = 6) -> float:
    """Grid oracle over cross blocks for spaces of at most two points.

    The grid runs over ``[0, diam1 + diam2 + 1]``, plus the two spaces' own
    distances and their difference; only blocks that cannot be
    lowered entrywise are visited (the objective is monotone in each
    entry).  A coarse exhaustive pass is followed by local grids of halving
    step around the best candidates until the step reaches ``grid_step``.
    Each visited block gets an exact inner ET solve, so the result is an
    upper bound that decreases as ``grid_step`` shrinks.  Returns the value
    raised to the power ``a``.
    """
    mm1, mm2 = problem.mm1, problem.mm2
    if mm1.n > 2 or mm2.n > 2:
        raise StructuralError("the grid oracle handles spaces of at most two points")
    if problem.F.kind == "indicator":
        m1, m2 = mm1.total_mass, mm2.total_mass
        if abs(m1 - m2) > 1e-12 * max(1.0, m1, m2):
            return INF
    d1, d2 = mm1.dist, mm2.dist
    top = mm1.diameter + mm2.diameter + 1.0
    n_free = 0 if (mm1.n == 1 and mm2.n == 1) else (1 if min(mm1.n, mm2.n) == 1 else 3)
    if n_free == 0:
        val = _batch_et_values(problem, np.zeros((1, 1, 1)))[0]
        return val ** problem.a if np.isfinite(val) else INF
    if n_free == 1:
        # one free coordinate: exhaustive at the requested step
        span = float(d2[0, 1] if mm1.n == 1 else d1[0, 1])
        steps = int(math.ceil(span / grid_step))
        values = np.linspace(0.0, span, steps + 1) if span > 0 else np.zeros(1)
        blocks = _pareto_blocks(d1, d2, values)
        vals = _batch_et_values(problem, blocks)
        best = float(np.min(vals))
        return best ** problem.a if np.isfinite(best) else INF
    step = top / (coarse_points - 1)
    # the spaces' own distances are added to the coarse grid so that blocks
    # gluing matched points together (isometric matchings) are visited exactly
    a, b = float(d1[0, 1]), float(d2[0, 1])
    values = np.union1d(np.linspace(0.0, top, coarse_points), [a, b, abs(a - b)])
    blocks = _pareto_blocks(d1, d2, values)
    vals = _batch_et_values(problem, blocks)
    order = np.argsort(vals)
    best = float(vals[order[0]])
    centers = [blocks[i].reshape(-1)[:3] for i in order[:keep]]
    while step > grid_step * (1 + 1e-12):
        step *= 0.5
        offsets = np.arange(-2, 3) * step
        cand = []
        for c in centers:
            grid = np.stack(np.meshgrid(*(c[e] + offsets for e in range(3)), indexing="ij"),
                            -1).reshape(-1, 3)
            cand.append(grid)
        cand = np.clip(np.unique(np.concatenate(cand), axis=0), 0.0, top)
        g22 = np.maximum.reduce([np.zeros(len(cand)), a - cand[:, 1], b - cand[:, 2],
                                 cand[:, 1] - a, cand[:, 2] - b])
        blk = _feasible(np.column_stack([cand, g22]).reshape(-1, 2, 2), d1, d2)
        if blk.shape[0] == 0:
            continue
        v = _batch_et_values(problem, blk)
        order = np.argsort(v)
        if v[order[0]] < best:
            best = float(v[order[0]])
        centers = [blk[i].reshape(-1)[:3] for i in order[:keep]]
    return best ** problem.a if np.isfinite(best) else INF


# --------------------------------------------------------------------------
# explicit bounds

def delta_config_bound(mm1: MetricMeasureSpace, mm2: MetricMeasureSpace, M: float, n: int,
                       cost) -> float:
    """``M n l(sup |d - d'|)`` for two ``n``-point configurations of atom mass ``M``."""
    cost = CostFunction.parse(cost) if isinstance(cost, str) else cost
    for mm in (mm1, mm2):
        if mm.n != n:
            raise StructuralError(f"expected {n}-point configurations, got {mm.n}")
        if not np.allclose(mm.mass, M, rtol=1e-12, atol=0.0):
            raise StructuralError("configurations must carry uniform atom mass M")
    gap = float(np.abs(mm1.dist - mm2.dist).max()) if n else 0.0
    return float(M * n * cost(gap))


def mass_scaling_bound(mm: MetricMeasureSpace, M: float, N: float, F: EntropyFunction) -> float:
    """``C mu(X) |M - 1|`` with ``C = max(F(1/N)/(1 - 1/N), F(N)/(N - 1))``, for ``1/N < M < N``."""
    if not N > 1:
        raise DomainError("N must exceed 1")
    if not 1.0 / N < M < N:
        raise DomainError("the rescaling factor must lie in (1/N, N)")
    C = max(float(F(1.0 / N)) / (1.0 - 1.0 / N), float(F(N)) / (N - 1.0))
    return C * mm.total_mass * abs(M - 1.0)


__all__ = [
    "SturmProblem", "SturmOptions", "SturmSolution", "sturm_distance", "min_metric_coupling",
    "sturm_pure_entropy", "sturm_dp", "sturm_bl", "brute_force_sturm", "delta_config_bound",
    "mass_scaling_bound", "joint_objective",
]
