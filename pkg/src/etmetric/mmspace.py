"""Finite metric measure spaces, transport plans and cross-distance blocks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

DEFAULT_TOL = 1e-9


class StructuralError(ValueError):
    """Malformed input: wrong shapes, negative or non-finite entries."""


@dataclass(frozen=True)
class Violation:
    kind: str
    indices: tuple
    magnitude: float


@dataclass
class ValidationReport:
    valid: bool
    tol: float
    violations: list = field(default_factory=list)

    @property
    def worst(self) -> float:
        if not self.violations:
            return 0.0
        return max(v.magnitude for v in self.violations)

    def __bool__(self) -> bool:
        return self.valid


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MetricMeasureSpace:
    """A finite point set with a distance matrix and a nonnegative mass vector.

    Zero-mass points are kept so index-aligned data round-trips; use
    :attr:`support` to get the indices carrying mass.  Construction checks
    shapes and signs only; call :func:`validate_metric` for the metric axioms.
    """

    dist: np.ndarray
    mass: np.ndarray
    labels: Optional[tuple] = None

    def __post_init__(self):
        dist = np.array(self.dist, dtype=float)
        mass = np.array(self.mass, dtype=float).reshape(-1)
        if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
            raise StructuralError(f"distance matrix must be square, got shape {dist.shape}")
        if mass.shape[0] != dist.shape[0]:
            raise StructuralError(
                f"mass vector has length {mass.shape[0]}, expected {dist.shape[0]}")
        if not (np.all(np.isfinite(dist)) and np.all(np.isfinite(mass))):
            raise StructuralError("distances and masses must be finite")
        if np.any(mass < 0):
            raise StructuralError("masses must be nonnegative")
        if np.any(dist < 0):
            raise StructuralError("distances must be nonnegative")
        labels = self.labels
        if labels is not None:
            labels = tuple(str(x) for x in labels)
            if len(labels) != mass.shape[0]:
                raise StructuralError("labels must match the number of points")
        object.__setattr__(self, "dist", _frozen(dist))
        object.__setattr__(self, "mass", _frozen(mass))
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.mass.shape[0]

    @property
    def total_mass(self) -> float:
        return float(self.mass.sum())

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.mass > 0)

    @property
    def diameter(self) -> float:
        return float(self.dist.max()) if self.n else 0.0

    def with_mass(self, mass) -> "MetricMeasureSpace":
        return MetricMeasureSpace(self.dist, mass, self.labels)

    def scaled(self, factor: float) -> "MetricMeasureSpace":
        return self.with_mass(self.mass * factor)

    def permuted(self, perm: Sequence[int]) -> "MetricMeasureSpace":
        """Relabel points so that new point ``k`` is old point ``perm[k]``."""
        perm = np.asarray(perm, dtype=int)
        labels = None if self.labels is None else tuple(self.labels[k] for k in perm)
        return MetricMeasureSpace(self.dist[np.ix_(perm, perm)], self.mass[perm], labels)

    @classmethod
    def from_points(cls, points, mass, labels=None) -> "MetricMeasureSpace":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        diff = pts[:, None, :] - pts[None, :, :]
        return cls(np.sqrt((diff ** 2).sum(-1)), mass, labels)


def validate_metric(space: MetricMeasureSpace, tol: float = DEFAULT_TOL) -> ValidationReport:
    """Check symmetry, zero diagonal and every triangle inequality.

    Each violation is reported with its indices and magnitude; the space is
    valid when no magnitude exceeds ``tol``.
    """
    d = space.dist
    n = space.n
    out = []
    for i in range(n):
        if abs(d[i, i]) > tol:
            out.append(Violation("diagonal", (i,), abs(d[i, i])))
    asym = np.abs(d - d.T)
    for i, j in zip(*np.nonzero(np.triu(asym > tol, 1))):
        out.append(Violation("symmetry", (int(i), int(j)), float(asym[i, j])))
    # excess[i, j, k] = d[i,k] - d[i,j] - d[j,k]
    excess = d[:, None, :] - d[:, :, None] - d[None, :, :]
    for i, j, k in zip(*np.nonzero(excess > tol)):
        out.append(Violation("triangle", (int(i), int(j), int(k)), float(excess[i, j, k])))
    return ValidationReport(not out, tol, out)


@dataclass(frozen=True, eq=False)
class Coupling:
    """Nonnegative plan on ``X1 x X2``; marginals are unconstrained."""

    gamma: np.ndarray

    def __post_init__(self):
        g = np.array(self.gamma, dtype=float)
        if g.ndim != 2:
            raise StructuralError("a plan must be a 2-d matrix")
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise StructuralError("plan entries must be finite and nonnegative")
        object.__setattr__(self, "gamma", _frozen(g))

    @property
    def shape(self):
        return self.gamma.shape

    def marginals(self):
        return marginals(self.gamma)


def marginals(gamma):
    """Row sums and column sums of a plan."""
    g = gamma.gamma if isinstance(gamma, Coupling) else np.asarray(gamma, dtype=float)
    return g.sum(axis=1), g.sum(axis=0)


@dataclass(frozen=True, eq=False)
class CrossDistanceMatrix:
    """The ``X1 x X2`` block of a pseudo-metric on the disjoint union."""

    D: np.ndarray
    d1: np.ndarray
    d2: np.ndarray

    def __post_init__(self):
        D = np.array(self.D, dtype=float)
        d1 = np.array(self.d1, dtype=float)
        d2 = np.array(self.d2, dtype=float)
        if D.shape != (d1.shape[0], d2.shape[0]):
            raise StructuralError(
                f"cross block has shape {D.shape}, expected {(d1.shape[0], d2.shape[0])}")
        if np.any(D < 0):
            raise StructuralError("cross distances must be nonnegative")
        if not np.all(np.isfinite(D)):
            raise StructuralError("cross distances must be finite")
        for name, val in (("D", D), ("d1", d1), ("d2", d2)):
            object.__setattr__(self, name, _frozen(val))

    @property
    def shape(self):
        return self.D.shape


def cross_violations(D, d1, d2):
    """Excess of each of the four constraint families, as arrays.

    Returns ``(lip1, lip2, tri1, tri2)`` with

    - ``lip1[i, k, j] = D[i,j] - d1[i,k] - D[k,j]``
    - ``lip2[i, j, l] = D[i,j] - D[i,l] - d2[l,j]``
    - ``tri1[i, k, j] = d1[i,k] - D[i,j] - D[k,j]``
    - ``tri2[i, j, l] = d2[j,l] - D[i,j] - D[i,l]``
    """
    lip1 = D[:, None, :] - d1[:, :, None] - D[None, :, :]
    lip2 = D[:, :, None] - D[:, None, :] - d2.T[None, :, :]
    tri1 = d1[:, :, None] - D[:, None, :] - D[None, :, :]
    tri2 = d2[None, :, :] - D[:, :, None] - D[:, None, :]
    return lip1, lip2, tri1, tri2


def validate_cross_distance(cd: CrossDistanceMatrix, tol: float = DEFAULT_TOL) -> ValidationReport:
    """Report every violated instance of the four disjoint-union triangle families."""
    names = ("lipschitz1", "lipschitz2", "triangle1", "triangle2")
    out = []
    for name, arr in zip(names, cross_violations(cd.D, cd.d1, cd.d2)):
        for idx in zip(*np.nonzero(arr > tol)):
            out.append(Violation(name, tuple(int(i) for i in idx), float(arr[idx])))
    return ValidationReport(not out, tol, out)


def canonical_coupling(mm1: MetricMeasureSpace, mm2: MetricMeasureSpace,
                       basepoint1: int, basepoint2: int,
                       c: float = 0.0, delta: float = 0.0) -> CrossDistanceMatrix:
    """Glue the two spaces through their basepoints at distance ``c + delta``."""
    if not (0 <= basepoint1 < mm1.n and 0 <= basepoint2 < mm2.n):
        raise StructuralError("basepoint out of range")
    if c < 0 or delta < 0:
        raise StructuralError("offsets must be nonnegative")
    D = mm1.dist[:, basepoint1][:, None] + c + mm2.dist[basepoint2, :][None, :] + delta
    return CrossDistanceMatrix(D, mm1.dist, mm2.dist)


def correspondence_coupling(d1, d2, pairs, extra: float = 0.0) -> CrossDistanceMatrix:
    """Cross block induced by a (partial) matching of points.

    ``D[i, j] = min over matched (k, l) of d1[i,k] + h + d2[l,j]`` where ``h``
    is half the distortion of the matching plus ``extra``.  This is a valid
    pseudo-metric coupling for any nonempty matching.
    """
    d1 = np.asarray(d1, dtype=float)
    d2 = np.asarray(d2, dtype=float)
    pairs = list(pairs)
    if not pairs:
        raise StructuralError("matching must be nonempty")
    ks = np.array([p[0] for p in pairs])
    ls = np.array([p[1] for p in pairs])
    dis = np.abs(d1[np.ix_(ks, ks)] - d2[np.ix_(ls, ls)]).max()
    h = 0.5 * dis + extra
    D = (d1[:, ks][:, None, :] + d2[ls, :].T[None, :, :]).min(axis=2) + h
    return CrossDistanceMatrix(D, d1, d2)
