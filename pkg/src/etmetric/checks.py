"""Property and acceptance batteries, grouped into the suites run by ``etmetric check``.

Every check returns a :class:`CheckResult` whose ``margin`` is the smallest
slack over all cases (nonnegative when the check passes).  Case counts
default to the full acceptance sizes; ``scale < 1`` shrinks them for quick
runs.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .conic import check_cgw_inequality
from .entropy import EntropyFunction, marginal_perspective_numeric, power_h0
from .et_solver import (EtOptions, EtProblem, bl_cost, bl_dual, et_distance, sinkhorn_kl,
                        solve_generic)
from .fixtures import (delta_configuration_pair, permuted_copy_pair, random_measure_pair,
                       random_space, singleton, tiny_fixtures, two_point)
from .mmspace import MetricMeasureSpace
from .presets import NAMED, as_preset
from .sturm import (SturmOptions, SturmProblem, brute_force_sturm, delta_config_bound,
                    mass_scaling_bound, sturm_distance, sturm_dp, sturm_pure_entropy)

ORACLE_GRID = 1.0 / 128
ORACLE_TOL = 1e-3


@dataclass
class CheckResult:
    criterion: int
    title: str
    passed: bool
    margin: float
    cases: int
    failures: list = field(default_factory=list)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] criterion {self.criterion:2d} {self.title}: "
                f"{self.cases} cases, worst margin {self.margin:.3e}, {self.seconds:.1f}s")

    def to_dict(self) -> dict:
        return {"criterion": self.criterion, "title": self.title, "passed": self.passed,
                "margin": self.margin, "cases": self.cases, "failures": self.failures[:20],
                "seconds": self.seconds}


class _Tally:
    """Accumulates slacks; a case fails when its slack is negative."""

    def __init__(self, criterion: int, title: str):
        self.criterion, self.title = criterion, title
        self.margin = math.inf
        self.cases = 0
        self.failures = []
        self.start = time.perf_counter()

    def add(self, slack: float, **info):
        self.cases += 1
        slack = float(slack) if not np.isnan(slack) else -math.inf
        self.margin = min(self.margin, slack)
        if slack < 0:
            self.failures.append({"slack": slack, **info})

    def result(self) -> CheckResult:
        return CheckResult(self.criterion, self.title, not self.failures and self.cases > 0,
                           self.margin if self.cases else -math.inf, self.cases,
                           self.failures, time.perf_counter() - self.start)


def _count(n: int, scale: float) -> int:
    return max(1, int(round(n * scale)))


def _sturm(mm1, mm2, preset, seeds: int = 4) -> float:
    problem = SturmProblem.from_preset(mm1, mm2, preset)
    return sturm_distance(problem, SturmOptions(seeds=seeds)).value


_ORACLE_CACHE: dict = {}


def oracle_value(name1: str, name2: str, preset: str, grid_step: float = ORACLE_GRID) -> float:
    """Grid-oracle value for two bundled fixtures, cached per process."""
    key = (min(name1, name2), max(name1, name2), preset, grid_step)
    if key not in _ORACLE_CACHE:
        fx = tiny_fixtures()
        if name1 == name2:
            _ORACLE_CACHE[key] = 0.0
        else:
            problem = SturmProblem.from_preset(fx[key[0]], fx[key[1]], preset)
            _ORACLE_CACHE[key] = brute_force_sturm(problem, grid_step=grid_step)
    return _ORACLE_CACHE[key]


# --------------------------------------------------------------------------
# individual criteria

def check_h0_closed_form(scale: float = 1.0, seed: int = 1) -> CheckResult:
    tally = _Tally(1, "closed-form H0 vs numeric minimization")
    rng = np.random.default_rng(seed)
    for p in (1.0, 1.5, 2.0, 3.0):
        F = EntropyFunction("kl") if p == 1 else EntropyFunction("power", p)
        for r, t in rng.uniform(0.0, 10.0, size=(_count(200, scale), 2)):
            closed = power_h0(p, r, t)
            numeric = marginal_perspective_numeric(F, 0.0, r, t).value
            rel = abs(closed - numeric) / max(abs(numeric), 1e-300)
            tally.add(1e-8 - rel, p=p, r=r, t=t)
    return tally.result()


def check_dirac_hk(scale: float = 1.0) -> CheckResult:
    tally = _Tally(2, "Dirac-Dirac Hellinger-Kantorovich")
    for a, b in itertools.product((0.25, 1.0, 4.0), repeat=2):
        for d in (0.0, math.pi / 6, math.pi / 3, math.pi / 2, 2.0):
            value = et_distance(two_point(d, a, 0.0), two_point(d, 0.0, b), "hk")
            expect = a + b - 2.0 * math.sqrt(a * b) * math.cos(min(d, math.pi / 2))
            tally.add(1e-6 - abs(value ** 2 - expect), a=a, b=b, d=d)
    return tally.result()


HOMOGENEITY_PRESETS = ("hk", "ghk", "qpl:2", "bl", "lpl:2")


def check_homogeneity(scale: float = 1.0, seed: int = 3) -> CheckResult:
    tally = _Tally(3, "homogeneity under mass scaling")
    rng = np.random.default_rng(seed)
    for k in range(_count(50, scale)):
        preset = as_preset(HOMOGENEITY_PRESETS[k % len(HOMOGENEITY_PRESETS)])
        mm1, mm2 = random_measure_pair(rng, int(rng.integers(2, 7)), sparsity=0.2)
        base = et_distance(mm1, mm2, preset)
        for M in (0.5, 4.0):
            value = et_distance(mm1.scaled(M), mm2.scaled(M), preset)
            tally.add(1e-5 * base - abs(value - M ** preset.a * base), kind="measure",
                      preset=preset.name, M=M, index=k)
    for k in range(_count(20, scale)):
        preset = as_preset(HOMOGENEITY_PRESETS[k % 4])
        mm1 = random_space(rng, int(rng.integers(1, 4)))
        mm2 = random_space(rng, int(rng.integers(2, 4)))
        base = _sturm(mm1, mm2, preset)
        for M in (0.5, 4.0):
            value = _sturm(mm1.scaled(M), mm2.scaled(M), preset)
            tally.add(1e-5 * base - abs(value - M ** preset.a * base), kind="sturm",
                      preset=preset.name, M=M, index=k)
    return tally.result()


def _chain_slacks(values: dict) -> list:
    out = [("ghk<=hk", values["hk"] + 1e-5 - values["ghk"])]
    for p in (1.5, 2.0, 3.0):
        q = values[f"qpl:{p:g}"]
        out.append((f"qpl:{p:g}<=ghk", values["ghk"] + 1e-5 - q))
        out.append((f"ghk<=sqrt(p)qpl:{p:g}", math.sqrt(p) * q + 1e-5 - values["ghk"]))
    return out


CHAIN_PRESETS = ("hk", "ghk", "qpl:1.5", "qpl:2", "qpl:3")


def check_bounds_chain(scale: float = 1.0, seed: int = 4) -> CheckResult:
    tally = _Tally(4, "bounds chain between hk, ghk and qpl")
    rng = np.random.default_rng(seed)
    for k in range(_count(30, scale)):
        mm1, mm2 = random_measure_pair(rng, int(rng.integers(2, 7)), sparsity=0.2)
        values = {p: et_distance(mm1, mm2, p) for p in CHAIN_PRESETS}
        for name, slack in _chain_slacks(values):
            tally.add(slack, kind="measure", inequality=name, index=k)
    for k in range(_count(10, scale)):
        mm1 = random_space(rng, int(rng.integers(1, 3)))
        mm2 = random_space(rng, int(rng.integers(2, 3)))
        values = {p: _sturm(mm1, mm2, p) for p in CHAIN_PRESETS}
        for name, slack in _chain_slacks(values):
            tally.add(slack, kind="sturm", inequality=name, index=k)
    return tally.result()


def check_isomorphism(scale: float = 1.0, seed: int = 5) -> CheckResult:
    tally = _Tally(5, "permuted copies are at distance zero")
    rng = np.random.default_rng(seed)
    for preset in NAMED:
        for k in range(_count(20, scale)):
            mm1, mm2 = permuted_copy_pair(rng, int(rng.integers(2, 6)))
            tally.add(1e-6 - _sturm(mm1, mm2, preset), preset=preset, index=k)
    return tally.result()


ORACLE_PRESETS = ("hk", "qpl:2")


def _closed_form_tiny(mm1: MetricMeasureSpace, mm2: MetricMeasureSpace, preset) -> Optional[float]:
    """Exact value when both spaces are singletons (cross block is forced to zero)."""
    if mm1.n == 1 and mm2.n == 1:
        p = 1.0 if preset.F.kind == "kl" else preset.F.param
        return power_h0(p, mm1.mass[0], mm2.mass[0]) ** preset.a
    return None


def check_oracle_gap(scale: float = 1.0, oracle_step: float = ORACLE_GRID) -> CheckResult:
    tally = _Tally(6, "alternating solver vs grid oracle")
    fx = tiny_fixtures()
    names = sorted(fx)
    pairs = list(itertools.combinations_with_replacement(names, 2))
    pairs = pairs[: _count(len(pairs), scale)]
    for preset_name in ORACLE_PRESETS:
        preset = as_preset(preset_name)
        for n1, n2 in pairs:
            oracle = oracle_value(n1, n2, preset_name, oracle_step)
            value = _sturm(fx[n1], fx[n2], preset, seeds=8)
            tally.add(oracle + ORACLE_TOL - value, preset=preset_name, pair=[n1, n2])
            exact = 0.0 if n1 == n2 else _closed_form_tiny(fx[n1], fx[n2], preset)
            if exact is not None:
                tally.add(ORACLE_TOL - abs(oracle - exact), preset=preset_name, pair=[n1, n2],
                          kind="closed form")
    return tally.result()


def check_triangle(scale: float = 1.0, preset: str = "hk",
                   oracle_step: float = ORACLE_GRID) -> CheckResult:
    tally = _Tally(7, "triangle inequality on oracle values")
    names = sorted(tiny_fixtures())
    names = names[: max(3, _count(len(names), scale))]
    for a, b, c in itertools.product(names, repeat=3):
        lhs = oracle_value(a, c, preset, oracle_step)
        rhs = oracle_value(a, b, preset, oracle_step) + oracle_value(b, c, preset, oracle_step)
        tally.add(rhs + 3 * ORACLE_TOL - lhs, triple=[a, b, c])
    return tally.result()


def check_bl_duality(scale: float = 1.0, seed: int = 8) -> CheckResult:
    tally = _Tally(8, "bounded-Lipschitz primal equals dual")
    rng = np.random.default_rng(seed)
    for k in range(_count(30, scale)):
        mm1, mm2 = random_measure_pair(rng, int(rng.integers(2, 8)), sparsity=0.2)
        problem = EtProblem(mm1.dist, mm1.mass, mm2.mass, EntropyFunction("tv"))
        primal = bl_cost(problem).value
        dual = bl_dual(mm1.mass, mm2.mass, mm1.dist)
        tally.add(1e-7 - abs(primal - dual), index=k)
    for d in (0.25, 1.0, 2.0, 3.5):
        value = et_distance(two_point(d, 1.0, 0.0), two_point(d, 0.0, 1.0), "bl")
        tally.add(1e-12 - abs(value - min(d, 2.0)), dirac_distance=d)
    return tally.result()


LIMIT_SCALES = (1, 10, 100, 1000)


# Once a sequence has saturated at its limit, consecutive solves differ by
# rounding only; monotonicity is asserted up to the solver tolerance.
MONOTONE_RTOL = 1e-9


def check_pure_entropy_limit(scale: float = 1.0) -> CheckResult:
    tally = _Tally(9, "pure-entropy limit of scaled costs")
    fx = tiny_fixtures()
    names = sorted(fx)
    pairs = list(itertools.combinations(names, 2))
    pairs = pairs[: _count(len(pairs), scale)]
    for p in (1, 2):
        for n1, n2 in pairs:
            vals = [_sturm(fx[n1], fx[n2], f"lim-pe:{p}:{n}") for n in LIMIT_SCALES]
            for lo, hi in zip(vals, vals[1:]):
                tally.add(hi - lo + MONOTONE_RTOL * abs(lo), p=p, pair=[n1, n2], kind="monotone")
            exact = sturm_pure_entropy(fx[n1], fx[n2], p).value
            tally.add(1e-3 - abs(vals[-1] - exact), p=p, pair=[n1, n2], kind="limit")
    return tally.result()


def equal_mass_fixtures() -> list:
    return [singleton(1.0), two_point(1.0, 0.5, 0.5), two_point(2.0, 0.5, 0.5),
            two_point(0.5, 0.25, 0.75), singleton(2.0), two_point(1.5, 1.2, 0.8),
            two_point(0.7, 1.0, 1.0)]


def check_sturm_limit(scale: float = 1.0) -> CheckResult:
    tally = _Tally(10, "balanced Sturm limit of scaled KL")
    fx = equal_mass_fixtures()
    pairs = [(a, b) for a, b in itertools.combinations(range(len(fx)), 2)
             if abs(fx[a].total_mass - fx[b].total_mass) <= 1e-12]
    pairs = pairs[: _count(len(pairs), scale)]
    for p in (1, 2):
        for i, j in pairs:
            vals = [_sturm(fx[i], fx[j], f"lim-sturm:{p}:{n}") for n in LIMIT_SCALES]
            for lo, hi in zip(vals, vals[1:]):
                tally.add(hi - lo + MONOTONE_RTOL * abs(lo), p=p, pair=[i, j], kind="monotone")
            balanced = sturm_dp(fx[i], fx[j], p, SturmOptions(seeds=4)).value
            tally.add(balanced + 1e-3 - vals[-1], p=p, pair=[i, j], kind="upper bound")
    return tally.result()


def check_cgw(scale: float = 1.0, seed: int = 11) -> CheckResult:
    tally = _Tally(11, "conic lift bound")
    rng = np.random.default_rng(seed)
    for k in range(_count(50, scale)):
        mm1 = random_space(rng, 3)
        mm2 = random_space(rng, 3)
        for preset in ("hk", "ghk"):
            rep = check_cgw_inequality(mm1, mm2, preset, SturmOptions(seeds=4), tol=1e-5)
            tally.add(rep.bound + 1e-5 - rep.lifted_value, preset=preset, index=k,
                      kind="inequality")
            tally.add(1e-9 - rep.marginal_error, preset=preset, index=k, kind="marginals")
    return tally.result()


def check_explicit_bounds(scale: float = 1.0, seed: int = 12) -> CheckResult:
    tally = _Tally(12, "delta-configuration and rescaling bounds")
    rng = np.random.default_rng(seed)
    presets = ("hk", "ghk", "qpl:2")
    for k in range(_count(20, scale)):
        preset = as_preset(presets[k % 3])
        n = int(rng.integers(2, 4))
        M = float(rng.uniform(0.2, 2.0))
        mm1, mm2 = delta_configuration_pair(rng, n, M, perturbation=0.3)
        bound = delta_config_bound(mm1, mm2, M, n, preset.cost)
        raw = _sturm(mm1, mm2, preset) ** (1.0 / preset.a)
        tally.add(bound * (1 + 1e-9) + 1e-12 - raw, kind="delta", preset=preset.name, index=k)
    for k in range(_count(20, scale)):
        preset = as_preset(presets[k % 3])
        mm = random_space(rng, int(rng.integers(1, 4)))
        N = float(rng.choice([2.0, 4.0]))
        M = float(rng.uniform(1.0 / N, N))
        bound = mass_scaling_bound(mm, M, N, preset.F)
        raw = _sturm(mm, mm.scaled(M), preset) ** (1.0 / preset.a)
        tally.add(bound * (1 + 1e-9) + 1e-12 - raw, kind="rescaling", preset=preset.name,
                  M=M, N=N, index=k)
    return tally.result()


def check_sinkhorn_vs_generic(scale: float = 1.0, seed: int = 13) -> CheckResult:
    tally = _Tally(13, "Sinkhorn schedule endpoint vs Newton solver")
    rng = np.random.default_rng(seed)
    schedule = EtOptions().epsilon_schedule
    for k in range(_count(50, scale)):
        n1, n2 = (int(x) for x in rng.integers(2, 21, size=2))
        x = rng.random((n1, 2))
        y = rng.random((n2, 2))
        cost = ((x[:, None, :] - y[None, :, :]) ** 2).sum(-1)
        problem = EtProblem(cost, rng.uniform(0.1, 2.0, n1), rng.uniform(0.1, 2.0, n2),
                            EntropyFunction("kl"))
        sk = sinkhorn_kl(problem, schedule=schedule).value
        newton = solve_generic(problem).value
        tally.add(1e-5 * abs(newton) - abs(sk - newton), shape=[n1, n2], index=k)
    return tally.result()


CRITERIA: dict = {
    1: check_h0_closed_form,
    2: check_dirac_hk,
    3: check_homogeneity,
    4: check_bounds_chain,
    5: check_isomorphism,
    6: check_oracle_gap,
    7: check_triangle,
    8: check_bl_duality,
    9: check_pure_entropy_limit,
    10: check_sturm_limit,
    11: check_cgw,
    12: check_explicit_bounds,
    13: check_sinkhorn_vs_generic,
}

SUITES: dict = {
    "axioms": (3, 5, 7),
    "bounds": (4, 12),
    "limits": (8, 9, 10),
    "conic": (11,),
    "oracle": (1, 2, 6, 13),
}


_USES_ORACLE = (6, 7)


def run_suite(name: str, scale: float = 1.0, oracle_step: float = ORACLE_GRID,
              progress: Optional[Callable[[CheckResult], None]] = None) -> list:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    results = []
    for crit in SUITES[name]:
        extra = {"oracle_step": oracle_step} if crit in _USES_ORACLE else {}
        res = CRITERIA[crit](scale=scale, **extra)
        results.append(res)
        if progress is not None:
            progress(res)
    return results
