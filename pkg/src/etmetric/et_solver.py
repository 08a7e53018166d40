"""Discrete Entropy-Transport problems.

Minimize over nonnegative plans ``gamma`` on ``X1 x X2``::

    D_F(gamma_1 || mu1) + D_F(gamma_2 || mu2) + sum_ij c_ij gamma_ij

Routes: an interior-point Newton solver for the smooth superlinear
entropies, generalized Sinkhorn for the KL family, linear programs for total
variation and for the indicator entropy (balanced transport).  Every value
returned is the objective of the returned plan, never an extrapolation.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .entropy import (INF, DomainError, EntropyFunction, divergence, marginal_perspective,
                      perspective, xmul)
from .lp import LinearProgram, solve_lp
from .mmspace import Coupling, MetricMeasureSpace, StructuralError
from .presets import Preset, as_preset

log = logging.getLogger(__name__)


class UnsupportedMethod(DomainError):
    pass


@dataclass
class EtOptions:
    """Solver options; round-trips through JSON for the CLI."""

    method: str = "auto"
    tol: float = 1e-9
    max_iter: int = 100000
    epsilon_schedule: tuple = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("auto", "generic", "sinkhorn", "lp"):
            raise DomainError(f"unknown method {self.method!r}")
        self.epsilon_schedule = tuple(float(e) for e in self.epsilon_schedule)

    def to_json(self) -> str:
        d = asdict(self)
        d["epsilon_schedule"] = list(self.epsilon_schedule)
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text) -> "EtOptions":
        data = json.loads(text) if isinstance(text, str) else dict(text)
        return cls(**data)


@dataclass(frozen=True, eq=False)
class EtProblem:
    cost: np.ndarray
    mu1: np.ndarray
    mu2: np.ndarray
    F: EntropyFunction

    def __post_init__(self):
        cost = np.array(self.cost, dtype=float)
        mu1 = np.array(self.mu1, dtype=float).reshape(-1)
        mu2 = np.array(self.mu2, dtype=float).reshape(-1)
        if cost.shape != (mu1.shape[0], mu2.shape[0]):
            raise StructuralError(f"cost shape {cost.shape} does not match masses "
                                  f"{(mu1.shape[0], mu2.shape[0])}")
        if np.any(np.isnan(cost)) or np.any(cost < 0):
            raise StructuralError("costs must be nonnegative (inf allowed)")
        for mu in (mu1, mu2):
            if np.any(mu < 0) or not np.all(np.isfinite(mu)):
                raise StructuralError("masses must be finite and nonnegative")
        for name, val in (("cost", cost), ("mu1", mu1), ("mu2", mu2)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def shape(self):
        return self.cost.shape

    def scaled(self, M: float) -> "EtProblem":
        return EtProblem(self.cost, self.mu1 * M, self.mu2 * M, self.F)

    def transposed(self) -> "EtProblem":
        return EtProblem(self.cost.T, self.mu2, self.mu1, self.F)


@dataclass
class EtSolution:
    gamma: Coupling
    value: float
    breakdown: dict
    diagnostics: dict = field(default_factory=dict)


def et_objective(problem: EtProblem, gamma) -> tuple:
    """``(total, divergence_1, divergence_2, transport)`` of a plan."""
    g = gamma.gamma if isinstance(gamma, Coupling) else np.asarray(gamma, dtype=float)
    d1 = divergence(problem.F, g.sum(axis=1), problem.mu1)
    d2 = divergence(problem.F, g.sum(axis=0), problem.mu2)
    tr = float(np.sum(xmul(problem.cost, g)))
    return d1 + d2 + tr, d1, d2, tr


def _solution(problem, gamma, method, **diag) -> EtSolution:
    gamma = np.maximum(np.asarray(gamma, dtype=float), 0.0)
    total, d1, d2, tr = et_objective(problem, gamma)
    diag["method"] = method
    return EtSolution(Coupling(gamma), total,
                      {"divergence_1": d1, "divergence_2": d2, "transport": tr}, diag)


# --------------------------------------------------------------------------
# interior-point Newton solver (batched)

def _marg_terms(F, g, mu):
    """Sum over atoms of ``mu F(g/mu)`` for rows with ``mu > 0``; batch-first."""
    pos = mu > 0
    s = np.where(pos, g / np.where(pos, mu, 1.0), 1.0)
    return np.sum(np.where(pos, mu * F(s), 0.0), axis=-1)


def barrier_solve(cost, mu1, mu2, F: EntropyFunction, tol: float = 1e-13,
                  max_iter: int = 2000, x0=None):
    """Primal log-barrier Newton method for a batch of ET problems.

    ``cost`` has shape ``(B, n1, n2)`` (``inf`` pins an entry to zero); the
    masses are shared.  Returns ``(plans, values, iterations)``.  The
    duality-gap bound of the final barrier parameter is ``tol * (m1 + m2)``.
    """
    if not F.smooth:
        raise UnsupportedMethod(f"the Newton solver needs a differentiable entropy, got {F.name}")
    cost = np.asarray(cost, dtype=float)
    B, n1, n2 = cost.shape
    mu1 = np.asarray(mu1, dtype=float)
    mu2 = np.asarray(mu2, dtype=float)
    k = n1 * n2
    scale = float(mu1.sum() + mu2.sum())
    free = np.isfinite(cost) & (mu1[None, :, None] > 0) & (mu2[None, None, :] > 0)
    c = np.where(free, cost, 0.0).reshape(B, k)
    free = free.reshape(B, k)
    nfree = np.maximum(free.sum(axis=1), 1)
    if scale == 0 or not free.any():
        x = np.zeros((B, n1, n2))
        vals = _marg_terms(F, x.sum(2), mu1) + _marg_terms(F, x.sum(1), mu2)
        return x, vals, 0
    I = np.repeat(np.arange(n1), n2)
    J = np.tile(np.arange(n2), n1)
    eqI = (I[:, None] == I[None, :]).astype(float)
    eqJ = (J[:, None] == J[None, :]).astype(float)
    eye = np.eye(k)
    if x0 is None:
        base = np.sqrt(np.outer(mu1, mu2)).reshape(k) / max(n1, n2)
        x = np.where(free, np.maximum(base[None, :], 1e-6 * scale / k), 0.0)
    else:
        x = np.where(free, np.maximum(np.asarray(x0, dtype=float).reshape(B, k),
                                      1e-9 * scale / k), 0.0)
    tau = np.full(B, 1e-2 * scale) / nfree if x0 is None else np.full(B, 1e-8 * scale) / nfree
    tau_min = tol * scale / nfree
    done = np.zeros(B, dtype=bool)
    pos1 = mu1 > 0
    pos2 = mu2 > 0
    safe1 = np.where(pos1, mu1, 1.0)
    safe2 = np.where(pos2, mu2, 1.0)

    def phi(xx, tt, cc, ff):
        g1 = xx.reshape(-1, n1, n2).sum(2)
        g2 = xx.reshape(-1, n1, n2).sum(1)
        f = _marg_terms(F, g1, mu1) + _marg_terms(F, g2, mu2) + np.sum(cc * xx, 1)
        bar = np.sum(np.log(np.where(ff, xx, 1.0)), 1)
        return f - tt * bar

    it = 0
    while it < max_iter and not done.all():
        it += 1
        act = ~done
        xa, ca, fa, ta = x[act], c[act], free[act], tau[act]
        g1 = xa.reshape(-1, n1, n2).sum(2)
        g2 = xa.reshape(-1, n1, n2).sum(1)
        s1 = np.where(pos1, g1 / safe1, 1.0)
        s2 = np.where(pos2, g2 / safe2, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            d1 = np.where(pos1, F.derivative(s1), 0.0)
            d2 = np.where(pos2, F.derivative(s2), 0.0)
            h1 = np.where(pos1 & (g1 > 0), F.second_derivative(s1) / safe1, 0.0)
            h2 = np.where(pos2 & (g2 > 0), F.second_derivative(s2) / safe2, 0.0)
            grad = d1[:, I] + d2[:, J] + ca - ta[:, None] / np.where(fa, xa, 1.0)
        grad = np.where(fa, grad, 0.0)
        H = h1[:, I][:, :, None] * eqI + h2[:, J][:, :, None] * eqJ
        diag = np.where(fa, ta[:, None] / np.where(fa, xa, 1.0) ** 2, 1.0)
        mask = fa[:, :, None] & fa[:, None, :]
        H = np.where(mask, H, 0.0) + diag[:, :, None] * eye
        try:
            dx = -np.linalg.solve(H, grad[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            dx = -np.linalg.lstsq(H[0], grad[0], rcond=None)[0][None, :]
        dx = np.where(fa, dx, 0.0)
        dec = -np.sum(grad * dx, 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where((dx < 0) & fa, -xa / dx, np.inf)
        alpha = np.minimum(1.0, 0.995 * ratio.min(1))
        phi0 = phi(xa, ta, ca, fa)
        ok = np.zeros(xa.shape[0], dtype=bool)
        todo = np.arange(xa.shape[0])
        for _ in range(60):
            trial = xa[todo] + alpha[todo, None] * dx[todo]
            ph = phi(trial, ta[todo], ca[todo], fa[todo])
            ok[todo] = ph <= phi0[todo] - 1e-4 * alpha[todo] * dec[todo]
            todo = todo[~ok[todo]]
            if todo.size == 0:
                break
            alpha[todo] *= 0.5
        trial = np.where(ok[:, None], xa + alpha[:, None] * dx, xa)
        xa = np.where(fa, np.maximum(trial, 1e-300), 0.0)
        x[act] = xa
        # Newton decrement of the barrier problem scaled by 1/tau: loose
        # centering between shrinks, tight centering at the final tau
        moved = alpha * np.abs(dx).max(1)
        stalled = ~ok | (dec <= 1e-14 * scale) | (moved <= 1e-12 * np.abs(xa).max(1))
        at_min = ta <= tau_min[act]
        shrink = ((dec <= 0.1 * ta) | stalled) & ~at_min
        new_tau = np.where(shrink, np.maximum(ta * 0.05, tau_min[act]), ta)
        finished = ((dec <= 1e-4 * ta) | stalled) & at_min
        idx = np.flatnonzero(act)
        tau[idx] = new_tau
        done[idx[finished]] = True
    plans = x.reshape(B, n1, n2)
    g1 = plans.sum(2)
    g2 = plans.sum(1)
    vals = (_marg_terms(F, g1, mu1) + _marg_terms(F, g2, mu2)
            + np.sum(xmul(cost, plans).reshape(B, -1), 1))
    return plans, vals, it


def solve_generic(problem: EtProblem, options: Optional[EtOptions] = None,
                  x0=None) -> EtSolution:
    """Interior-point Newton solve for differentiable superlinear entropies."""
    options = options or EtOptions()
    F = problem.F
    if not F.smooth:
        raise UnsupportedMethod(f"{F.name} is not differentiable; use the LP route")
    plans, vals, it = barrier_solve(problem.cost[None], problem.mu1, problem.mu2, F,
                                    tol=min(options.tol, 1e-9) * 1e-2,
                                    max_iter=min(options.max_iter, 5000),
                                    x0=None if x0 is None else np.asarray(x0)[None])
    return _solution(problem, plans[0], "generic", iterations=it)


# --------------------------------------------------------------------------
# generalized Sinkhorn

def _kl_scale(F: EntropyFunction) -> float:
    if F.kind == "kl":
        return 1.0
    if F.kind == "scaled-kl":
        return F.param
    raise UnsupportedMethod(f"Sinkhorn scaling needs a KL-type entropy, got {F.name}")


def _lse(x):
    top = x.max()
    return top + math.log(np.exp(x - top).sum())


def _scaled_product(K, log_scaling):
    """``K @ exp(log_scaling)``, or ``None`` when it is not safely representable."""
    if np.abs(log_scaling).max(initial=0.0) > 300.0:
        return None
    out = K @ np.exp(log_scaling)
    if np.any(out < 1e-280) or not np.all(np.isfinite(out)):
        return None
    return out


def sinkhorn_kl(problem: EtProblem, epsilon=None, max_iter: int = 200000,
                tol: float = 1e-3, schedule=None, potentials=None) -> EtSolution:
    """Stabilized unbalanced Sinkhorn for ``F = n U_1``.

    The entropic term is ``epsilon KL(gamma | mu1 x mu2)``.  Each sweep
    applies the closed-form KL proximal update on both sides (exponent
    damping ``n / (n + epsilon)``) and then the optimal common translation of
    the two potentials, so the entropic dual objective never decreases; its
    value after every sweep is recorded per epsilon stage in
    ``diagnostics["dual_trace"]``.  Scalings are kept relative to reference
    potentials that are refreshed whenever the scalings drift, which keeps
    the kernel representable for small epsilon.  A stage stops once no
    potential moves by more than ``tol * epsilon`` in a sweep.  With a ``schedule`` the
    potentials are warm-started along decreasing epsilons.
    """
    n = _kl_scale(problem.F)
    if schedule is None:
        schedule = (epsilon,) if epsilon is not None else EtOptions().epsilon_schedule
    C = problem.cost
    mu1, mu2 = problem.mu1, problem.mu2
    n1, n2 = C.shape
    live1 = mu1 > 0
    live2 = mu2 > 0
    finite = np.isfinite(C) & live1[:, None] & live2[None, :]
    row_ok = finite.any(1)
    col_ok = finite.any(0)
    if not (row_ok.any() and col_ok.any()):
        return _solution(problem, np.zeros((n1, n2)), "sinkhorn", iterations=0,
                         dual_trace=[], converged=True)
    # restrict to the rows and columns that can carry mass
    r_idx = np.flatnonzero(row_ok)
    c_idx = np.flatnonzero(col_ok)
    Cs = np.where(finite, C, np.inf)[np.ix_(r_idx, c_idx)]
    m1 = mu1[r_idx]
    m2 = mu2[c_idx]
    lm1, lm2 = np.log(m1), np.log(m2)
    f = np.zeros(r_idx.size) if potentials is None else np.asarray(potentials[0], float)[r_idx]
    g = np.zeros(c_idx.size) if potentials is None else np.asarray(potentials[1], float)[c_idx]

    def dual(f, g, eps, mass):
        a = -n * np.sum(m1 * np.expm1(-f / n))
        b = -n * np.sum(m2 * np.expm1(-g / n))
        return float(a + b - eps * (mass - mu1.sum() * mu2.sum()))

    trace = []
    total_it = 0
    converged = True
    for eps in schedule:
        damp = n * eps / (n + eps)
        conv = False
        stage = []
        fbar, gbar = f.copy(), g.copy()
        with np.errstate(under="ignore"):
            K = np.exp(lm1[:, None] + lm2[None, :] + (fbar[:, None] + gbar[None, :] - Cs) / eps)
        for _ in range(max_iter):
            total_it += 1
            Kv = _scaled_product(K, (g - gbar) / eps)
            if Kv is None:
                f_new = -damp * logsumexp((g[None, :] - Cs) / eps + lm2[None, :], axis=1)
            else:
                f_new = -damp * (np.log(Kv) - lm1 - fbar / eps)
            Ku = _scaled_product(K.T, (f_new - fbar) / eps)
            if Ku is None:
                lse_g = logsumexp((f_new[:, None] - Cs) / eps + lm1[:, None], axis=0)
            else:
                lse_g = np.log(Ku) - lm2 - gbar / eps
            g_new = -damp * lse_g
            # total plan mass; invariant under the translation below
            mass = float(np.exp(_lse(lm2 + g_new / eps + lse_g)))
            A = _lse(lm1 - f_new / n)
            B = _lse(lm2 - g_new / n)
            lam = 0.5 * n * (A - B)
            f_new = f_new + lam
            g_new = g_new - lam
            stage.append(dual(f_new, g_new, eps, mass))
            delta = max(np.abs(f_new - f).max(), np.abs(g_new - g).max())
            f, g = f_new, g_new
            if delta < tol * eps:
                conv = True
                break
            drift = max(np.abs(f - fbar).max(), np.abs(g - gbar).max()) / eps
            if drift > 30.0:
                fbar, gbar = f.copy(), g.copy()
                with np.errstate(under="ignore"):
                    K = np.exp(lm1[:, None] + lm2[None, :] + (fbar[:, None] + gbar[None, :] - Cs) / eps)
        converged &= conv
        trace.append(stage)
    eps = schedule[-1]
    gamma = np.zeros((n1, n2))
    with np.errstate(under="ignore"):
        gamma[np.ix_(r_idx, c_idx)] = np.exp(lm1[:, None] + lm2[None, :]
                                             + (f[:, None] + g[None, :] - Cs) / eps)
    f_full = np.zeros(n1)
    g_full = np.zeros(n2)
    f_full[r_idx] = f
    g_full[c_idx] = g
    return _solution(problem, gamma, "sinkhorn", iterations=total_it, dual_trace=trace,
                     converged=converged, potentials=(f_full.tolist(), g_full.tolist()),
                     epsilon=eps)


# --------------------------------------------------------------------------
# linear-programming routes

def _pinned_upper(cost):
    return np.where(np.isfinite(cost), np.inf, 0.0).reshape(-1)


def tv_lp(problem: EtProblem, cap_at_mu: bool = False) -> EtSolution:
    """Total-variation ET as an LP over ``(gamma, u1+, u1-, u2+, u2-)``.

    With ``cap_at_mu`` the plan's marginals are bounded by the measures,
    which leaves the optimum unchanged for ``|s - 1|`` and makes it exact for
    the regularized Piccoli-Rossi entropies.
    """
    C = problem.cost
    mu1, mu2 = problem.mu1, problem.mu2
    n1, n2 = C.shape
    k = n1 * n2
    nv = k + 2 * n1 + 2 * n2
    cvec = np.concatenate([np.where(np.isfinite(C), C, 0.0).reshape(-1), np.ones(2 * n1 + 2 * n2)])
    A = np.zeros((n1 + n2, nv))
    for i in range(n1):
        A[i, i * n2:(i + 1) * n2] = 1.0
        A[i, k + i] = -1.0          # u1+
        A[i, k + n1 + i] = 1.0      # u1-
    for j in range(n2):
        A[n1 + j, j:k:n2] = 1.0
        A[n1 + j, k + 2 * n1 + j] = -1.0
        A[n1 + j, k + 2 * n1 + n2 + j] = 1.0
    upper = np.full(nv, np.inf)
    upper[:k] = _pinned_upper(C)
    if cap_at_mu or problem.F.superlinear:
        upper[k:k + n1] = 0.0
        upper[k + 2 * n1:k + 2 * n1 + n2] = 0.0
    lp = LinearProgram(cvec, A, ["="] * (n1 + n2), np.concatenate([mu1, mu2]), None, upper)
    sol = solve_lp(lp).require_optimal()
    gamma = sol.x[:k].reshape(n1, n2)
    return _solution(problem, gamma, "lp", lp_value=sol.value,
                     duality_gap=sol.diagnostics["duality_gap"],
                     lp_iterations=sol.diagnostics["iterations"])


def balanced_lp(problem: EtProblem) -> EtSolution:
    """Indicator entropy: classical transport with both marginals fixed."""
    C = problem.cost
    mu1, mu2 = problem.mu1, problem.mu2
    n1, n2 = C.shape
    m1, m2 = mu1.sum(), mu2.sum()
    if abs(m1 - m2) > 1e-12 * max(1.0, m1, m2):
        gamma = np.zeros((n1, n2))
        return EtSolution(Coupling(gamma), INF,
                          {"divergence_1": INF, "divergence_2": INF, "transport": 0.0},
                          {"method": "lp", "infeasible": True,
                           "reason": "unequal total masses"})
    k = n1 * n2
    A = np.zeros((n1 + n2, k))
    for i in range(n1):
        A[i, i * n2:(i + 1) * n2] = 1.0
    for j in range(n2):
        A[n1 + j, j:k:n2] = 1.0
    rhs = np.concatenate([mu1, mu2 * (m1 / m2 if m2 > 0 else 1.0)])
    lp = LinearProgram(np.where(np.isfinite(C), C, 0.0).reshape(-1), A, ["="] * (n1 + n2), rhs,
                       None, _pinned_upper(C))
    sol = solve_lp(lp)
    if sol.status == "infeasible":
        return EtSolution(Coupling(np.zeros((n1, n2))), INF,
                          {"divergence_1": INF, "divergence_2": INF, "transport": 0.0},
                          {"method": "lp", "infeasible": True, "reason": "no finite-cost plan"})
    sol.require_optimal()
    gamma = sol.x.reshape(n1, n2)
    # exact marginals by construction of the LP; evaluate the transport term only
    tr = float(np.sum(xmul(C, np.maximum(gamma, 0.0))))
    return EtSolution(Coupling(np.maximum(gamma, 0.0)), tr,
                      {"divergence_1": 0.0, "divergence_2": 0.0, "transport": tr},
                      {"method": "lp", "duality_gap": sol.diagnostics["duality_gap"],
                       "marginal_residual": sol.diagnostics["primal_residual"]})


# --------------------------------------------------------------------------
# dispatcher

def polish_on_support(problem: EtProblem, gamma, rel: float = 1e-9, max_iter: int = 50,
                      max_support: int = 400) -> Optional[np.ndarray]:
    """Damped Newton on the positive entries of ``gamma`` with the support held fixed.

    Interior methods stop a duality gap short of the optimum; once the support
    is right, the restricted problem is smooth and unconstrained apart from
    positivity, and Newton reaches rounding level in a few steps.  Returns the
    polished plan, or ``None`` when no entry qualifies or the support has more
    than ``max_support`` entries (the Hessian is dense).
    """
    F = problem.F
    g = np.asarray(gamma, dtype=float)
    mu1, mu2 = problem.mu1, problem.mu2
    keep = (g > rel * max(g.max(initial=0.0), 1e-300)) & np.isfinite(problem.cost)
    keep &= (mu1[:, None] > 0) & (mu2[None, :] > 0)
    rows, cols = np.nonzero(keep)
    if rows.size == 0 or rows.size > max_support:
        return None
    c = problem.cost[rows, cols]
    x = g[rows, cols].copy()
    n1, n2 = problem.shape
    R = np.zeros((n1, rows.size))
    R[rows, np.arange(rows.size)] = 1.0
    C = np.zeros((n2, rows.size))
    C[cols, np.arange(rows.size)] = 1.0

    used1, used2 = R.any(axis=1), C.any(axis=1)

    def full(xv):
        out = np.zeros_like(g)
        out[rows, cols] = xv
        return out

    def value(xv):
        return et_objective(problem, full(xv))[0]

    fx = value(x)
    for _ in range(max_iter):
        with np.errstate(divide="ignore", invalid="ignore"):
            s1, s2 = R @ x / mu1, C @ x / mu2
            grad = R.T @ np.where(used1, F.derivative(s1), 0.0) \
                + C.T @ np.where(used2, F.derivative(s2), 0.0) + c
            w1 = np.where(used1, F.second_derivative(s1) / np.where(used1, mu1, 1.0), 0.0)
            w2 = np.where(used2, F.second_derivative(s2) / np.where(used2, mu2, 1.0), 0.0)
        hess = R.T @ (w1[:, None] * R) + C.T @ (w2[:, None] * C)
        if not (np.all(np.isfinite(grad)) and np.all(np.isfinite(hess))):
            break
        step = -np.linalg.lstsq(hess, grad, rcond=1e-13)[0]
        dec = -float(grad @ step)
        if not dec > 1e-14 * abs(fx):
            break
        neg = step < 0
        alpha = min(1.0, 0.99 * float(np.min(-x[neg] / step[neg]))) if neg.any() else 1.0
        while alpha > 1e-12:
            trial = x + alpha * step
            ft = value(trial)
            if ft <= fx - 1e-4 * alpha * dec:
                break
            alpha *= 0.5
        else:
            break
        x, fx = trial, ft
    return full(x)


def solve_et(problem: EtProblem, options: Optional[EtOptions] = None) -> EtSolution:
    """Solve an ET problem by the route suited to its entropy."""
    options = options or EtOptions()
    F = problem.F
    n1, n2 = problem.shape
    m1, m2 = problem.mu1.sum(), problem.mu2.sum()
    if m1 == 0 or m2 == 0:
        if F.kind == "indicator" and m1 != m2:
            return balanced_lp(problem)
        return _solution(problem, np.zeros((n1, n2)), "analytic")
    if F.kind == "indicator":
        return balanced_lp(problem)
    if F.kind in ("tv", "pr-reg"):
        return tv_lp(problem, cap_at_mu=F.kind == "pr-reg")
    method = options.method
    if method == "lp":
        raise UnsupportedMethod(f"no LP route for {F.name}")
    if method == "sinkhorn":
        return sinkhorn_kl(problem, schedule=options.epsilon_schedule,
                           max_iter=options.max_iter)
    if method == "auto" and F.kind in ("kl", "scaled-kl"):
        warm = sinkhorn_kl(problem, schedule=(1e-1, 1e-2), max_iter=2000)
        polished = solve_generic(problem, options, x0=warm.gamma.gamma)
        cold = None
        if not polished.value <= warm.value:
            cold = solve_generic(problem, options)
        best = min((s for s in (warm, polished, cold) if s is not None), key=lambda s: s.value)
        best.diagnostics["route"] = "sinkhorn+generic"
        return _polished(problem, best)
    return _polished(problem, solve_generic(problem, options))


def _polished(problem: EtProblem, sol: EtSolution) -> EtSolution:
    if not np.isfinite(sol.value) or sol.value == 0:
        return sol
    plan = polish_on_support(problem, sol.gamma.gamma)
    if plan is None:
        return sol
    better = _solution(problem, plan, sol.diagnostics.get("method", "generic"))
    if not better.value < sol.value:
        return sol
    better.diagnostics = dict(sol.diagnostics, polished=True)
    return better


# --------------------------------------------------------------------------
# oracles and closed forms

def objective_batch(problem: EtProblem, plans) -> np.ndarray:
    """ET objective for a stack of plans of shape ``(N, n1, n2)``."""
    plans = np.asarray(plans, dtype=float)
    F = problem.F
    d1 = np.sum(perspective(F, plans.sum(2), problem.mu1[None, :]), axis=-1)
    d2 = np.sum(perspective(F, plans.sum(1), problem.mu2[None, :]), axis=-1)
    tr = np.sum(xmul(problem.cost[None], plans).reshape(plans.shape[0], -1), axis=1)
    return d1 + d2 + tr


def brute_force_et(problem: EtProblem, grid_step: float = 1e-3,
                   max_points: int = 2_000_000) -> float:
    """Grid search over plans followed by coordinate refinement.

    Every entry ranges over ``[0, m1 + m2]``; the grid is exhaustive at
    ``grid_step`` when that fits in ``max_points`` evaluations and coarser
    otherwise.  Pattern search then halves the step down to ``grid_step /
    64``.  The result is the objective of an explicit plan, hence an upper
    bound on the optimum.
    """
    n1, n2 = problem.shape
    k = n1 * n2
    if k > 6:
        raise StructuralError("brute force is limited to n1 * n2 <= 6")
    top = float(problem.mu1.sum() + problem.mu2.sum())
    if top == 0:
        return float(objective_batch(problem, np.zeros((1, n1, n2)))[0])
    per_axis = int(round(top / grid_step)) + 1
    per_axis = max(2, min(per_axis, int(max_points ** (1.0 / k))))
    axis = np.linspace(0.0, top, per_axis)
    best_val, best = INF, np.zeros(k)
    chunk = max(1, 200_000 // max(1, per_axis ** max(0, k - 1)))
    first = np.arange(per_axis)
    for start in range(0, per_axis, chunk):
        heads = axis[first[start:start + chunk]]
        rest = [axis] * (k - 1)
        mesh = np.meshgrid(heads, *rest, indexing="ij")
        pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
        vals = objective_batch(problem, pts.reshape(-1, n1, n2))
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best_val, best = float(vals[j]), pts[j].copy()
    h = axis[1] - axis[0]
    while h > grid_step / 64:
        improved = True
        while improved:
            improved = False
            moves = []
            for e in range(k):
                for sgn in (1.0, -1.0):
                    cand = best.copy()
                    cand[e] = max(0.0, cand[e] + sgn * h)
                    moves.append(cand)
            moves = np.array(moves)
            vals = objective_batch(problem, moves.reshape(-1, n1, n2))
            j = int(np.argmin(vals))
            if vals[j] < best_val - 1e-15 * max(1.0, abs(best_val)):
                best_val, best = float(vals[j]), moves[j]
                improved = True
        h *= 0.5
    return best_val


def pure_entropy_cost(mu1, mu2, F: EntropyFunction) -> float:
    """Sum of ``H_0(mu1_i, mu2_i)`` over the atoms of a common space."""
    mu1 = np.asarray(mu1, dtype=float).reshape(-1)
    mu2 = np.asarray(mu2, dtype=float).reshape(-1)
    if mu1.shape != mu2.shape:
        raise StructuralError("pure-entropy cost needs index-aligned measures")
    return float(sum(marginal_perspective(F, 0.0, r, t).value for r, t in zip(mu1, mu2)))


def _pure_entropy_plan(mu1, mu2, F):
    theta = []
    for r, t in zip(mu1, mu2):
        mp = marginal_perspective(F, 0.0, r, t)
        th = mp.argmin_theta
        if th is None:
            from .entropy import marginal_perspective_numeric
            th = marginal_perspective_numeric(F, 0.0, r, t).argmin_theta or 0.0
        theta.append(th if (r > 0 and t > 0) else 0.0)
    return np.diag(theta)


def bl_cost(problem: EtProblem) -> EtSolution:
    """Piccoli-Rossi primal: TV entropy with a linear cost, as one LP."""
    if problem.F.kind != "tv":
        problem = EtProblem(problem.cost, problem.mu1, problem.mu2, EntropyFunction("tv"))
    return tv_lp(problem)


def bl_dual(mu1, mu2, dist) -> float:
    """Flat-metric dual: maximize ``sum f (mu1 - mu2)`` over ``|f| <= 1``, ``Lip(f) <= 1``."""
    mu1 = np.asarray(mu1, dtype=float)
    mu2 = np.asarray(mu2, dtype=float)
    d = np.asarray(dist, dtype=float)
    n = mu1.shape[0]
    rows = []
    for i in range(n):
        for j in range(n):
            if i != j:
                a = np.zeros(n)
                a[i], a[j] = 1.0, -1.0
                rows.append((a, "<=", d[i, j]))
    lp = LinearProgram.from_rows(-(mu1 - mu2), rows, -np.ones(n), np.ones(n)) if rows else \
        LinearProgram(-(mu1 - mu2), np.zeros((0, n)), [], [], -np.ones(n), np.ones(n))
    sol = solve_lp(lp).require_optimal()
    return -sol.value


# --------------------------------------------------------------------------
# measure-level distances

def _same_space(mm1: MetricMeasureSpace, mm2: MetricMeasureSpace):
    if mm1.dist.shape != mm2.dist.shape or not np.array_equal(mm1.dist, mm2.dist):
        raise StructuralError("measure-level distances need both measures on one space")


def et_distance(mm1: MetricMeasureSpace, mm2: MetricMeasureSpace, preset="hk",
                options: Optional[EtOptions] = None, return_solution: bool = False):
    """``ET(mu1, mu2)^a`` for two measures on the same finite metric space."""
    _same_space(mm1, mm2)
    preset = as_preset(preset)
    if preset.cost.kind == "pe":
        value = pure_entropy_cost(mm1.mass, mm2.mass, preset.F)
        problem = EtProblem(preset.cost(mm1.dist), mm1.mass, mm2.mass, preset.F)
        sol = _solution(problem, _pure_entropy_plan(mm1.mass, mm2.mass, preset.F), "pure-entropy")
        sol.diagnostics["closed_form_value"] = value
        sol.value = min(sol.value, value) if np.isfinite(sol.value) else value
    else:
        problem = EtProblem(preset.cost(mm1.dist), mm1.mass, mm2.mass, preset.F)
        sol = solve_et(problem, options)
    dist = sol.value ** preset.a if np.isfinite(sol.value) else INF
    return (dist, sol) if return_solution else dist


def et_distance_masses(mu1, mu2, dist, preset="hk", options=None, return_solution=False):
    space1 = MetricMeasureSpace(dist, mu1)
    space2 = MetricMeasureSpace(dist, mu2)
    return et_distance(space1, space2, preset, options, return_solution)


def dirac_hk_squared(a: float, b: float, d: float) -> float:
    """HK^2 between ``a delta_x`` and ``b delta_y`` at distance ``d``."""
    return a + b - 2.0 * math.sqrt(a * b) * math.cos(min(d, math.pi / 2))


__all__ = [
    "EtOptions", "EtProblem", "EtSolution", "et_objective", "solve_et", "sinkhorn_kl",
    "solve_generic", "brute_force_et", "pure_entropy_cost", "bl_cost", "bl_dual",
    "et_distance", "et_distance_masses", "balanced_lp", "tv_lp", "barrier_solve",
    "objective_batch", "UnsupportedMethod", "dirac_hk_squared",
]

