"""Dense revised simplex with a duality certificate.

Small linear programs (a few thousand variables at most) in the form

    minimize    c @ x
    subject to  A[i] @ x  (<=, =, >=)  b[i]
                lower <= x <= upper

The solver runs a two-phase revised simplex on an explicit basis inverse
(product-form updates, periodic refactorization), Dantzig pricing with a
switch to Bland's rule while the objective stalls.  Every optimal answer is
certified afterwards in the original coordinates: primal feasibility,
sign-feasible duals, complementary slackness and a matching dual objective.
A solve that cannot be certified comes back with status ``"failed"``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
FAILED = "failed"

_SENSES = {"<=": -1, "=": 0, "==": 0, ">=": 1}


class LpError(RuntimeError):
    """Raised by :meth:`LpSolution.require_optimal` on a non-optimal status."""


@dataclass
class LinearProgram:
    objective: np.ndarray
    A: np.ndarray
    senses: Sequence[str]
    rhs: np.ndarray
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).reshape(-1)
        n = self.objective.shape[0]
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.rhs = np.asarray(self.rhs, dtype=float).reshape(-1)
        self.senses = [s.strip() for s in self.senses]
        m = self.A.shape[0]
        if self.rhs.shape[0] != m or len(self.senses) != m:
            raise ValueError("constraint matrix, senses and rhs disagree in length")
        bad = [s for s in self.senses if s not in _SENSES]
        if bad:
            raise ValueError(f"unknown constraint relation {bad[0]!r}")
        self.lower = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=float)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValueError("bounds must have one entry per variable")
        for arr in (self.objective, self.A, self.rhs):
            if not np.all(np.isfinite(arr)):
                raise ValueError("coefficients must be finite")
        if np.any(self.lower > self.upper) or np.any(self.lower == np.inf) \
                or np.any(self.upper == -np.inf):
            raise ValueError("empty variable bounds")

    @property
    def n(self) -> int:
        return self.objective.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @classmethod
    def from_rows(cls, objective, rows, lower=None, upper=None) -> "LinearProgram":
        """Build from a list of ``(coefficients, relation, rhs)`` triples."""
        n = len(objective)
        A = np.array([r[0] for r in rows], dtype=float).reshape(-1, n)
        return cls(objective, A, [r[1] for r in rows], [r[2] for r in rows], lower, upper)


@dataclass
class LpSolution:
    status: str
    x: np.ndarray
    value: float
    dual: np.ndarray
    reduced_costs: np.ndarray = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    def require_optimal(self) -> "LpSolution":
        if self.status != OPTIMAL:
            raise LpError(f"linear program not solved: {self.status} {self.diagnostics}")
        return self


class _Standard:
    """``min c@z, Az = b, z >= 0`` built from a :class:`LinearProgram`."""

    def __init__(self, lp: LinearProgram):
        n, m = lp.n, lp.m
        lo, hi = lp.lower, lp.upper
        cols = []        # (original var, sign)
        offset = np.zeros(n)
        for j in range(n):
            if np.isfinite(lo[j]):
                offset[j] = lo[j]
                cols.append((j, 1.0))
            elif np.isfinite(hi[j]):
                offset[j] = hi[j]
                cols.append((j, -1.0))
            else:
                cols.append((j, 1.0))
                cols.append((j, -1.0))
        nz = len(cols)
        var_idx = np.array([c[0] for c in cols])
        var_sign = np.array([c[1] for c in cols])
        A_struct = lp.A[:, var_idx] * var_sign
        b = lp.rhs - lp.A @ offset
        rows = [A_struct]
        senses = [_SENSES[s] for s in lp.senses]
        rhs = [b]
        # finite upper bounds on shifted variables become rows
        bound_rows = []
        for k, (j, s) in enumerate(cols):
            if s > 0 and np.isfinite(lo[j]) and np.isfinite(hi[j]):
                row = np.zeros(nz)
                row[k] = 1.0
                bound_rows.append((row, hi[j] - lo[j]))
        if bound_rows:
            rows.append(np.array([r for r, _ in bound_rows]))
            senses += [-1] * len(bound_rows)
            rhs.append(np.array([v for _, v in bound_rows]))
        A = np.vstack(rows) if len(rows) > 1 else rows[0]
        b = np.concatenate(rhs)
        senses = np.array(senses)
        mm = A.shape[0]
        scale = np.abs(A).max(axis=1)
        scale[scale == 0] = 1.0
        A = A / scale[:, None]
        b = b / scale
        # slack/surplus columns
        n_slack = int(np.count_nonzero(senses != 0))
        S = np.zeros((mm, n_slack))
        slack_row = np.flatnonzero(senses != 0)
        for k, i in enumerate(slack_row):
            S[i, k] = 1.0 if senses[i] < 0 else -1.0
        A = np.hstack([A, S])
        flip = b < 0
        A[flip] *= -1.0
        b = np.where(flip, -b, b)
        self.A, self.b = A, b
        self.c = np.concatenate([lp.objective[var_idx] * var_sign, np.zeros(n_slack)])
        self.const = float(lp.objective @ offset)
        self.n_struct = nz
        self.var_idx, self.var_sign, self.offset = var_idx, var_sign, offset
        self.row_scale = scale
        self.row_flip = flip
        self.m_orig = m
        self.slack_row = slack_row

    def recover_x(self, z, n):
        x = self.offset.copy()
        np.add.at(x, self.var_idx, self.var_sign * z[: self.n_struct])
        return x


class _Simplex:
    def __init__(self, A, b, c, basis, allowed, max_iter, refactor_every=64):
        self.A, self.b, self.c = A, b, c
        self.basis = np.array(basis, dtype=int)
        self.allowed = allowed
        self.max_iter = max_iter
        self.refactor_every = refactor_every
        self.iterations = 0
        self.bland_pivots = 0
        self.refactor()

    def refactor(self):
        B = self.A[:, self.basis]
        self.Binv = np.linalg.inv(B)
        self.xB = self.Binv @ self.b
        self.xB[np.abs(self.xB) < 1e-13] = 0.0
        self.since_refactor = 0

    def run(self, tol=1e-9):
        A, c = self.A, self.c
        m = A.shape[0]
        tol = tol * max(1.0, float(np.abs(c).max(initial=0.0)))
        stall = 0
        bland = False
        last_obj = np.inf
        while self.iterations < self.max_iter:
            y = c[self.basis] @ self.Binv
            d = c - y @ A
            d[self.basis] = 0.0
            cand = np.flatnonzero((d < -tol) & self.allowed)
            if cand.size == 0:
                return OPTIMAL
            q = int(cand[0]) if bland else int(cand[np.argmin(d[cand])])
            alpha = self.Binv @ A[:, q]
            pos = np.flatnonzero(alpha > tol)
            if pos.size == 0:
                return UNBOUNDED
            ratios = np.maximum(self.xB[pos], 0.0) / alpha[pos]
            theta = ratios.min()
            ties = pos[ratios <= theta + 1e-12 * (1.0 + theta)]
            if bland:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                r = int(ties[np.argmax(alpha[ties])])
            self._pivot(r, q, alpha)
            self.iterations += 1
            if bland:
                self.bland_pivots += 1
            obj = float(c[self.basis] @ self.xB)
            if obj < last_obj - 1e-12 * (1.0 + abs(obj)):
                stall = 0
                bland = False
                last_obj = obj
            else:
                stall += 1
                if stall > 2 * m + 20:
                    bland = True
        return FAILED

    def _pivot(self, r, q, alpha):
        theta = max(self.xB[r], 0.0) / alpha[r]
        self.xB -= theta * alpha
        self.xB[r] = theta
        piv = self.Binv[r] / alpha[r]
        self.Binv -= np.outer(alpha, piv)
        self.Binv[r] = piv
        self.basis[r] = q
        self.since_refactor += 1
        if self.since_refactor >= self.refactor_every:
            self.refactor()
        self.xB[(self.xB < 0) & (self.xB > -1e-11)] = 0.0


def solve_lp(lp: LinearProgram, max_iter: int = 50000, tol: float = 1e-9,
             certify_tol: float = 1e-7) -> LpSolution:
    """Solve ``lp`` and certify the answer through LP duality."""
    std = _Standard(lp)
    A, b = std.A, std.b
    m, nz = A.shape
    # initial basis: slack columns with +1 coefficient where available
    basis = -np.ones(m, dtype=int)
    for k, i in enumerate(std.slack_row):
        col = std.n_struct + k
        if A[i, col] > 0:
            basis[i] = col
    need = np.flatnonzero(basis < 0)
    n_art = need.size
    if n_art:
        Art = np.zeros((m, n_art))
        Art[need, np.arange(n_art)] = 1.0
        A_full = np.hstack([A, Art])
        basis[need] = nz + np.arange(n_art)
    else:
        A_full = A
    ntot = A_full.shape[1]
    is_art = np.zeros(ntot, dtype=bool)
    is_art[nz:] = True
    diagnostics = {"rows": m, "columns": nz, "artificials": n_art}

    if n_art:
        c1 = np.zeros(ntot)
        c1[nz:] = 1.0
        sx = _Simplex(A_full, b, c1, basis, np.ones(ntot, dtype=bool), max_iter)
        status = sx.run(tol)
        diagnostics["phase1_iterations"] = sx.iterations
        if status != OPTIMAL:
            return _fail(lp, FAILED, diagnostics)
        infeas = float(c1[sx.basis] @ sx.xB)
        if infeas > 1e-8 * (1.0 + np.abs(b).max()):
            diagnostics["phase1_residual"] = infeas
            return _fail(lp, INFEASIBLE, diagnostics)
        # drive zero-level artificials out of the basis
        for r in range(m):
            if not is_art[sx.basis[r]]:
                continue
            row = sx.Binv[r] @ A_full
            row[is_art] = 0.0
            row[sx.basis] = 0.0
            j = int(np.argmax(np.abs(row)))
            if abs(row[j]) > 1e-9:
                alpha = sx.Binv @ A_full[:, j]
                sx._pivot(r, j, alpha)
        sx.refactor()
        basis = sx.basis
        it0 = sx.iterations
    else:
        it0 = 0
    c2 = np.zeros(ntot)
    c2[: std.c.shape[0]] = std.c
    sx = _Simplex(A_full, b, c2, basis, ~is_art, max_iter)
    status = sx.run(tol)
    diagnostics["iterations"] = it0 + sx.iterations
    diagnostics["bland_pivots"] = sx.bland_pivots
    if status == UNBOUNDED:
        return _fail(lp, UNBOUNDED, diagnostics)
    if status != OPTIMAL:
        return _fail(lp, FAILED, diagnostics)
    sx.refactor()
    z = np.zeros(ntot)
    z[sx.basis] = np.maximum(sx.xB, 0.0)
    x = std.recover_x(z, lp.n)
    x = np.clip(x, lp.lower, lp.upper)
    y_std = c2[sx.basis] @ sx.Binv
    # undo row flips and scaling, keep the original constraints only
    y_rows = np.where(std.row_flip, -y_std, y_std) / std.row_scale
    y = y_rows[: std.m_orig]
    return _certify(lp, x, y, diagnostics, certify_tol)


def _fail(lp, status, diagnostics):
    return LpSolution(status, np.full(lp.n, np.nan), np.nan, np.full(lp.m, np.nan),
                      None, diagnostics)


def _certify(lp: LinearProgram, x, y, diagnostics, certify_tol) -> LpSolution:
    """Check the primal-dual pair in the original coordinates.

    Convention: ``L = c@x - y@(A@x - b) - z@x`` so ``y <= 0`` on ``<=`` rows,
    ``y >= 0`` on ``>=`` rows, ``z = c - A.T@y`` with the sign dictated by the
    active bound of each variable.
    """
    sense = np.array([_SENSES[s] for s in lp.senses]) if lp.m else np.zeros(0)
    Ax = lp.A @ x
    scale = 1.0 + np.abs(lp.rhs).max(initial=0.0) + np.abs(Ax).max(initial=0.0)
    viol = np.zeros(lp.m)
    viol[sense < 0] = np.maximum(Ax - lp.rhs, 0.0)[sense < 0]
    viol[sense > 0] = np.maximum(lp.rhs - Ax, 0.0)[sense > 0]
    viol[sense == 0] = np.abs(Ax - lp.rhs)[sense == 0]
    primal_res = float(viol.max(initial=0.0))
    # project duals onto their sign cones (roundoff only)
    y = np.where(sense < 0, np.minimum(y, 0.0), y)
    y = np.where(sense > 0, np.maximum(y, 0.0), y)
    z = lp.objective - lp.A.T @ y
    lo, hi = lp.lower, lp.upper
    zpos = np.maximum(z, 0.0)
    zneg = np.maximum(-z, 0.0)
    # positive reduced cost must be carried by a finite lower bound, negative by an upper one
    dual_inf = float(np.max(np.concatenate([
        zpos[~np.isfinite(lo)], zneg[~np.isfinite(hi)], [0.0]])))
    lo_f = np.where(np.isfinite(lo), lo, 0.0)
    hi_f = np.where(np.isfinite(hi), hi, 0.0)
    value = float(lp.objective @ x)
    dual_value = float(lp.rhs @ y + zpos @ lo_f - zneg @ hi_f)
    comp = float(np.max(np.concatenate([
        np.abs(y * (Ax - lp.rhs)),
        zpos * np.abs(x - lo_f) * np.isfinite(lo),
        zneg * np.abs(hi_f - x) * np.isfinite(hi),
        [0.0]])))
    gap = abs(value - dual_value)
    vscale = 1.0 + abs(value)
    diagnostics.update(primal_residual=primal_res, dual_infeasibility=dual_inf,
                       complementarity=comp, duality_gap=gap, dual_value=dual_value)
    ok = (primal_res <= 1e-8 * scale and dual_inf <= certify_tol * vscale
          and comp <= certify_tol * vscale and gap <= certify_tol * vscale)
    status = OPTIMAL if ok else FAILED
    return LpSolution(status, x, value, y, z, diagnostics)
