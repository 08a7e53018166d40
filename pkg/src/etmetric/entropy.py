"""Admissible entropy functions, cost functions and marginal perspective costs.

Extended reals are plain floats with ``math.inf``; products follow the
measure-theoretic rule ``0 * inf = 0`` (see :func:`xmul`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

INF = math.inf
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class DomainError(ValueError):
    pass


def xmul(a, b):
    """Elementwise product with the convention ``0 * inf = 0``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(invalid="ignore"):
        out = a * b
    return np.where((a == 0) | (b == 0), 0.0, out)


def _scalar(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


# --------------------------------------------------------------------------
# entropy functions

# Rounding in a computed plan moves its marginals by a few ulps; the
# hard-marginal entropy accepts ratios this close to one.
INDICATOR_RTOL = 1e-12

_ENTROPY_KINDS = ("kl", "power", "tv", "indicator", "scaled-kl", "pr-reg")


@dataclass(frozen=True)
class EntropyFunction:
    """A convex, lower semicontinuous ``F`` on ``[0, inf)`` with ``F(1) = 0``.

    ``param`` is the exponent for ``power`` and the scale ``n`` for
    ``scaled-kl`` and ``pr-reg``; it is ignored otherwise.
    """

    kind: str
    param: Optional[float] = None

    def __post_init__(self):
        if self.kind not in _ENTROPY_KINDS:
            raise DomainError(f"unknown entropy kind {self.kind!r}")
        if self.kind == "power" and not (self.param is not None and self.param > 1):
            raise DomainError("power-like entropy needs an exponent p > 1")
        if self.kind == "scaled-kl" and not (self.param is not None and self.param > 0):
            raise DomainError("scaled KL needs a positive scale")
        if self.kind == "pr-reg" and not (self.param is not None and self.param >= 2):
            raise DomainError("the regularized Piccoli-Rossi entropy needs n >= 2")
        if self.param is not None:
            object.__setattr__(self, "param", float(self.param))

    # -- catalog names -----------------------------------------------------
    @property
    def name(self) -> str:
        if self.param is None or self.kind in ("kl", "tv", "indicator"):
            return self.kind
        return f"{self.kind}:{_fmt(self.param)}"

    @classmethod
    def parse(cls, text: str) -> "EntropyFunction":
        kind, _, arg = text.strip().partition(":")
        if kind in ("kl", "tv", "indicator"):
            if arg:
                raise DomainError(f"entropy {kind!r} takes no parameter")
            return cls(kind)
        if kind in ("power", "scaled-kl", "pr-reg"):
            if not arg:
                raise DomainError(f"entropy {kind!r} needs a parameter")
            value = float(arg)
            if kind == "power" and value == 1.0:
                return cls("kl")
            return cls(kind, value)
        raise DomainError(f"unknown entropy {text!r}")

    # -- structural constants ---------------------------------------------
    @property
    def recession(self) -> float:
        """``F'_inf = lim F(s)/s``."""
        return 1.0 if self.kind == "tv" else INF

    @property
    def at_zero(self) -> float:
        if self.kind == "power":
            return 1.0 / self.param
        if self.kind == "scaled-kl":
            return self.param
        return INF if self.kind == "indicator" else 1.0

    @property
    def superlinear(self) -> bool:
        return self.recession == INF

    @property
    def smooth(self) -> bool:
        return self.kind in ("kl", "power", "scaled-kl")

    # -- evaluation ------------------------------------------------------
    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s < 0):
            raise DomainError("entropy functions are defined on [0, inf)")
        k = self.kind
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if k in ("kl", "scaled-kl"):
                val = np.where(s > 0, s * np.log(np.where(s > 0, s, 1.0)), 0.0) - s + 1.0
                if k == "scaled-kl":
                    val = self.param * val
            elif k == "power":
                p = self.param
                val = (s ** p - p * (s - 1.0) - 1.0) / (p * (p - 1.0))
            elif k == "tv":
                val = np.abs(s - 1.0)
            elif k == "indicator":
                val = np.where(np.abs(s - 1.0) <= INDICATOR_RTOL, 0.0, INF)
            else:  # pr-reg
                n = self.param
                val = np.where(s <= n, np.abs(s - 1.0), (s - 1.0) ** 2 / (n - 1.0))
        val = np.where(np.isinf(s), INF, np.maximum(val, 0.0))
        return _scalar(val)

    def derivative(self, s):
        """``F'(s)`` for the smooth kinds (``-inf`` at 0 where applicable)."""
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            if self.kind == "kl":
                return np.log(s)
            if self.kind == "scaled-kl":
                return self.param * np.log(s)
            if self.kind == "power":
                p = self.param
                return (s ** (p - 1.0) - 1.0) / (p - 1.0)
        raise DomainError(f"entropy {self.name!r} is not differentiable")

    def second_derivative(self, s):
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore"):
            if self.kind == "kl":
                return 1.0 / s
            if self.kind == "scaled-kl":
                return self.param / s
            if self.kind == "power":
                return s ** (self.param - 2.0)
        raise DomainError(f"entropy {self.name!r} is not differentiable")


def f_eval(F: EntropyFunction, s):
    return F(s)


def perspective(F: EntropyFunction, r, t):
    """``t F(r/t)`` for ``t > 0`` and ``F'_inf r`` for ``t = 0``."""
    r = np.asarray(r, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(r < 0) or np.any(t < 0):
        raise DomainError("perspective arguments must be nonnegative")
    pos = t > 0
    safe_t = np.where(pos, t, 1.0)
    with np.errstate(over="ignore"):
        inner = xmul(safe_t, F(r / safe_t))
    val = np.where(pos, inner, xmul(F.recession, r))
    return _scalar(val)


def reverse_entropy(F: EntropyFunction, t):
    return perspective(F, np.ones_like(np.asarray(t, dtype=float)), t)


def divergence(F: EntropyFunction, gamma_marg, mu) -> float:
    """Discrete ``D_F(gamma || mu)``; singular mass is charged at ``F'_inf``."""
    g = np.asarray(gamma_marg, dtype=float).reshape(-1)
    m = np.asarray(mu, dtype=float).reshape(-1)
    if g.shape != m.shape:
        raise DomainError(f"length mismatch: {g.shape[0]} vs {m.shape[0]}")
    return float(np.sum(perspective(F, g, m)))


# --------------------------------------------------------------------------
# cost functions

_COST_KINDS = ("hk", "pow", "lin", "scaled", "pe")


@dataclass(frozen=True)
class CostFunction:
    """A nondecreasing convex ``l`` on ``[0, inf)`` with ``l(0) = 0``."""

    kind: str
    param: Optional[float] = None

    def __post_init__(self):
        if self.kind not in _COST_KINDS:
            raise DomainError(f"unknown cost kind {self.kind!r}")
        if self.kind == "pow" and not (self.param is not None and self.param >= 1):
            raise DomainError("power cost needs an exponent p >= 1")
        if self.kind == "scaled" and not (self.param is not None and self.param > 0):
            raise DomainError("scaled cost needs a positive factor")
        if self.param is not None:
            object.__setattr__(self, "param", float(self.param))

    @property
    def name(self) -> str:
        if self.kind in ("pow", "scaled"):
            return f"{self.kind}:{_fmt(self.param)}"
        return self.kind

    @classmethod
    def parse(cls, text: str) -> "CostFunction":
        kind, _, arg = text.strip().partition(":")
        if kind in ("hk", "lin", "pe"):
            if arg:
                raise DomainError(f"cost {kind!r} takes no parameter")
            return cls(kind)
        if kind in ("pow", "scaled"):
            if not arg:
                raise DomainError(f"cost {kind!r} needs a parameter")
            return cls(kind, float(arg))
        raise DomainError(f"unknown cost {text!r}")

    @property
    def finite_radius(self) -> float:
        """Supremum of the distances with finite cost."""
        if self.kind == "hk":
            return math.pi / 2
        if self.kind == "pe":
            return 0.0
        return INF

    @property
    def linear_slope(self) -> Optional[float]:
        if self.kind == "lin" or (self.kind == "pow" and self.param == 1.0):
            return 1.0
        if self.kind == "scaled":
            return self.param
        return None

    def derivatives(self, d):
        """First and second derivatives on the open finite range (smooth kinds)."""
        d = np.asarray(d, dtype=float)
        if self.kind == "hk":
            sec2 = 1.0 / np.cos(d) ** 2
            return 2.0 * np.tan(d), 2.0 * sec2
        if self.kind == "pow":
            p = self.param
            return p * d ** (p - 1.0), p * (p - 1.0) * d ** (p - 2.0)
        slope = self.linear_slope
        if slope is None:
            raise DomainError(f"cost {self.name!r} is not differentiable")
        return np.full_like(d, slope), np.zeros_like(d)

    def __call__(self, d):
        d = np.asarray(d, dtype=float)
        if np.any(d < 0):
            raise DomainError("costs are defined on [0, inf)")
        k = self.kind
        with np.errstate(divide="ignore", invalid="ignore"):
            if k == "hk":
                inside = d < math.pi / 2
                cosd = np.cos(np.where(inside, d, 0.0))
                val = np.where(inside, -np.log(cosd ** 2), INF)
                val = np.where(inside & (cosd <= 0), INF, val)
            elif k == "pow":
                val = d ** self.param
            elif k == "lin":
                val = d.copy()
            elif k == "scaled":
                val = self.param * d
            else:
                val = np.where(d == 0, 0.0, INF)
        return _scalar(np.maximum(val, 0.0))


def _fmt(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


# --------------------------------------------------------------------------
# marginal perspective function

@dataclass(frozen=True)
class MarginalPerspectiveValue:
    value: float
    argmin_theta: Optional[float] = None


def _h_theta(F, c, r, t, theta):
    return float(perspective(F, theta, r) + perspective(F, theta, t) + xmul(theta, c))


def _h_slope(F, c, r, t, theta):
    return float(F.derivative(theta / r) + F.derivative(theta / t) + c)


def marginal_perspective_numeric(F: EntropyFunction, c: float, r: float, t: float,
                                 tol: float = 1e-12) -> MarginalPerspectiveValue:
    """Minimize ``F^(theta, r) + F^(theta, t) + theta c`` over ``theta > 0``.

    Golden-section search on ``log theta`` (the objective is convex in theta,
    hence unimodal in ``log theta``), refined by bisection on the derivative
    for differentiable ``F``.  The ``theta -> 0`` boundary value
    ``F(0)(r + t)`` is compared as well, which realizes the lower
    semicontinuous envelope.
    """
    r, t = float(r), float(t)
    if r < 0 or t < 0 or c < 0:
        raise DomainError("arguments must be nonnegative")
    if c == INF:
        return MarginalPerspectiveValue(float(xmul(F.at_zero, r + t)), 0.0)
    if r == 0 and t == 0:
        return MarginalPerspectiveValue(0.0, 0.0)
    lo = math.log(1e-12)
    hi = math.log(1e6 * max(r, t, 1.0))

    def h(u):
        return _h_theta(F, c, r, t, math.exp(u))

    a, b = lo, hi
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = h(x1), h(x2)
    while b - a > tol:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = h(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = h(x2)
    u_best = x1 if f1 <= f2 else x2
    if F.smooth and r > 0 and t > 0:
        # bracket the root of the monotone derivative and bisect
        ta, tb = math.exp(max(lo, u_best - 1e-3)), math.exp(min(hi, u_best + 1e-3))
        if _h_slope(F, c, r, t, ta) < 0 < _h_slope(F, c, r, t, tb):
            for _ in range(200):
                tm = 0.5 * (ta + tb)
                if tm <= ta or tm >= tb:
                    break
                if _h_slope(F, c, r, t, tm) < 0:
                    ta = tm
                else:
                    tb = tm
            u_best = math.log(0.5 * (ta + tb))
    theta = math.exp(u_best)
    best = MarginalPerspectiveValue(_h_theta(F, c, r, t, theta), theta)
    edge = float(xmul(F.at_zero, r + t))
    if edge < best.value:
        best = MarginalPerspectiveValue(edge, 0.0)
    return best


def marginal_perspective(F: EntropyFunction, c: float, r: float, t: float) -> MarginalPerspectiveValue:
    """``H_c(r, t)``, closed form when the catalog provides one."""
    r, t, c = float(r), float(t), float(c)
    if r < 0 or t < 0 or c < 0:
        raise DomainError("arguments must be nonnegative")
    if c == INF:
        return MarginalPerspectiveValue(float(xmul(F.at_zero, r + t)), 0.0)
    k = F.kind
    if k in ("kl", "scaled-kl"):
        n = 1.0 if k == "kl" else F.param
        damp = math.exp(-c / (2.0 * n))
        theta = math.sqrt(r * t) * damp
        return MarginalPerspectiveValue(max(n * (r + t - 2.0 * theta), 0.0), theta)
    if k in ("tv", "pr-reg"):
        lo, hi = min(r, t), max(r, t)
        move = hi - lo + c * lo
        if move < r + t:
            return MarginalPerspectiveValue(move, lo)
        return MarginalPerspectiveValue(r + t, 0.0)
    if k == "indicator":
        if r == t:
            return MarginalPerspectiveValue(float(xmul(c, r)), r)
        return MarginalPerspectiveValue(INF, None)
    if k == "power" and c == 0:
        q = F.param
        theta = 0.0
        if r > 0 and t > 0:
            theta = 2.0 ** (1.0 / (q - 1.0)) * _power_mean(q, r, t)
        return MarginalPerspectiveValue(power_h0(q, r, t), theta)
    return marginal_perspective_numeric(F, c, r, t)


def power_h0(p: float, r: float, t: float) -> float:
    """Closed form of ``H_0`` for ``U_p`` (``p = 1`` is the Hellinger case)."""
    if p == 1:
        return (math.sqrt(r) - math.sqrt(t)) ** 2
    if r == 0 or t == 0:
        return (r + t) / p
    return max((r + t - 2.0 ** (p / (p - 1.0)) * _power_mean(p, r, t)) / p, 0.0)


def _power_mean(p: float, r: float, t: float) -> float:
    """``(r^(1-p) + t^(1-p))^(1/(1-p))`` for positive ``r, t``, without overflow."""
    lo, hi = min(r, t), max(r, t)
    return lo * (1.0 + (lo / hi) ** (p - 1.0)) ** (-1.0 / (p - 1.0))
