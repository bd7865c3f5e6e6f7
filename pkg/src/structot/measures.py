"""Discrete measures, ground costs, couplings and the edge ground set.

Every other module indexes transport edges ``(i, j)`` through
:class:`EdgeIndex`, which flattens row-major: ``e = i * m + j``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .exceptions import InputError

WEIGHT_ATOL = 1e-12
RENORMALIZE_ATOL = 1e-9
DUPLICATE_ATOL = 1e-12

METRICS = ("euclidean", "squared_euclidean", "precomputed")


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Weighted point cloud ``sum_i p_i delta_{x_i}``.

    Weights default to uniform. They must be strictly positive; a total mass
    within ``1e-9`` of one is renormalized, anything else is rejected.
    Duplicate support points are rejected unless ``allow_duplicates`` is set.
    """

    points: np.ndarray
    weights: np.ndarray = None
    labels: np.ndarray | None = None
    allow_duplicates: bool = field(default=False, repr=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0 or pts.shape[1] == 0:
            raise InputError("points must be a non-empty (n, d) array with d >= 1")
        if not np.all(np.isfinite(pts)):
            raise InputError("points must be finite")
        n = pts.shape[0]
        if self.weights is None:
            w = np.full(n, 1.0 / n)
        else:
            w = np.array(self.weights, dtype=float).ravel()
        if w.shape != (n,):
            raise InputError(f"expected {n} weights, got {w.size}")
        if not np.all(w > 0):
            raise InputError("weights must be strictly positive")
        total = w.sum()
        if abs(total - 1.0) > RENORMALIZE_ATOL:
            raise InputError(f"weights sum to {total!r}, not 1")
        w = w / total
        labels = None
        if self.labels is not None:
            labels = np.array(self.labels).ravel()
            if labels.shape != (n,):
                raise InputError(f"expected {n} labels, got {labels.size}")
            if labels.size and not np.all(np.equal(np.mod(labels, 1), 0)):
                raise InputError("labels must be integers")
            labels = labels.astype(np.int64)
            labels.setflags(write=False)
        if not self.allow_duplicates and n > 1:
            if cKDTree(pts).query_pairs(DUPLICATE_ATOL):
                raise InputError("duplicate support points")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "weights", _frozen(w))
        object.__setattr__(self, "labels", labels)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.size


@dataclass(frozen=True, eq=False)
class CostMatrix:
    """Nonnegative ``n x m`` ground cost."""

    entries: np.ndarray
    metric_tag: str = "precomputed"

    def __post_init__(self):
        c = np.array(self.entries, dtype=float)
        if c.ndim != 2:
            raise InputError("cost must be a 2-d matrix")
        if not np.all(np.isfinite(c)) or np.any(c < 0):
            raise InputError("cost entries must be finite and nonnegative")
        if self.metric_tag not in METRICS:
            raise InputError(f"unknown metric {self.metric_tag!r}")
        object.__setattr__(self, "entries", _frozen(c))

    @property
    def shape(self):
        return self.entries.shape

    def flat(self) -> np.ndarray:
        return self.entries.ravel()


@dataclass(frozen=True)
class EdgeIndex:
    """Row-major bijection between edges ``(i, j)`` and ``0 .. n*m - 1``."""

    n: int
    m: int

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise InputError("EdgeIndex needs n, m >= 1")

    @property
    def size(self) -> int:
        return self.n * self.m

    def flatten(self, i, j):
        i = np.asarray(i)
        j = np.asarray(j)
        if np.any((i < 0) | (i >= self.n)) or np.any((j < 0) | (j >= self.m)):
            raise InputError("edge endpoint out of range")
        e = i * self.m + j
        return int(e) if e.ndim == 0 else e

    def unflatten(self, e):
        e = np.asarray(e)
        if np.any((e < 0) | (e >= self.size)):
            raise InputError("flat edge index out of range")
        i, j = np.divmod(e, self.m)
        if e.ndim == 0:
            return int(i), int(j)
        return i, j

    def transpose_map(self) -> np.ndarray:
        """``perm[e]`` is the flat index of edge ``(j, i)`` in the ``m x n`` index."""
        i, j = self.unflatten(np.arange(self.size))
        return j * self.n + i


@dataclass(frozen=True, eq=False)
class Coupling:
    """Transport plan with certified marginal residual.

    ``scalings`` holds ``(u, v)`` when the plan came from matrix scaling, so
    that ``gamma == u[:, None] * w * v[None, :]`` for the scaled kernel ``w``.
    """

    gamma: np.ndarray
    marginal_tol: float
    certified: bool = True
    scalings: tuple | None = None
    iterations: int = 0

    def __post_init__(self):
        object.__setattr__(self, "gamma", _frozen(self.gamma))

    @property
    def shape(self):
        return self.gamma.shape


@dataclass(frozen=True, eq=False)
class GroupStructure:
    """Groups of flat edge indices over an :class:`EdgeIndex`.

    With ``singleton_remainder`` every edge not covered by a listed group
    is treated as its own group.
    """

    index: EdgeIndex
    groups: tuple
    cover_type: str = "partition"
    singleton_remainder: bool = True

    def __post_init__(self):
        if self.cover_type not in ("partition", "cover"):
            raise InputError(f"unknown cover_type {self.cover_type!r}")
        gs = []
        for g in self.groups:
            a = np.unique(np.asarray(list(g) if not isinstance(g, np.ndarray) else g,
                                     dtype=np.int64))
            if a.size == 0:
                continue
            if a[0] < 0 or a[-1] >= self.index.size:
                raise InputError("group contains an out-of-range edge index")
            a.setflags(write=False)
            gs.append(a)
        object.__setattr__(self, "groups", tuple(gs))
        counts = self.coverage_counts(completed=False)
        if self.cover_type == "partition" and np.any(counts > 1):
            raise InputError("partition groups overlap")
        if not self.singleton_remainder and np.any(counts == 0):
            raise InputError("groups do not cover every edge")

    def coverage_counts(self, completed=True) -> np.ndarray:
        counts = np.zeros(self.index.size, dtype=np.int64)
        for g in self.groups:
            counts[g] += 1
        if completed and self.singleton_remainder:
            counts[counts == 0] = 1
        return counts

    def remainder(self) -> np.ndarray:
        """Edges that appear in no listed group."""
        if not self.singleton_remainder:
            return np.empty(0, dtype=np.int64)
        return np.flatnonzero(self.coverage_counts(completed=False) == 0)

    def completed_groups(self) -> list:
        return list(self.groups) + [np.array([e]) for e in self.remainder()]

    def transposed(self) -> "GroupStructure":
        """Same groups on the transposed ``m x n`` edge index."""
        perm = self.index.transpose_map()
        return GroupStructure(EdgeIndex(self.index.m, self.index.n),
                              tuple(perm[g] for g in self.groups),
                              self.cover_type, self.singleton_remainder)


def build_cost(src: DiscreteMeasure, tgt: DiscreteMeasure,
               metric_tag: str = "euclidean") -> CostMatrix:
    """Ground cost between the supports of two measures."""
    if src.dim != tgt.dim:
        raise InputError(f"dimension mismatch: {src.dim} vs {tgt.dim}")
    if metric_tag == "euclidean":
        c = cdist(src.points, tgt.points)
    elif metric_tag == "squared_euclidean":
        c = cdist(src.points, tgt.points, "sqeuclidean")
    else:
        raise InputError(f"cannot build a {metric_tag!r} cost from point clouds")
    return CostMatrix(c, metric_tag)


def product_coupling(mu: DiscreteMeasure, nu: DiscreteMeasure) -> Coupling:
    """The independent coupling ``mu nu^T``."""
    return Coupling(np.outer(mu.weights, nu.weights), marginal_tol=1e-14)


def marginal_violation(gamma, mu_w, nu_w) -> float:
    gamma = np.asarray(gamma, dtype=float)
    rows = np.abs(gamma.sum(axis=1) - mu_w).max()
    cols = np.abs(gamma.sum(axis=0) - nu_w).max()
    neg = max(0.0, -gamma.min())
    return float(max(rows, cols, neg))


def round_to_polytope(gamma, a, b) -> np.ndarray:
    """Map a nonnegative matrix onto ``M(a, b)`` with a small L1 change.

    Rows are scaled down to at most ``a``, then columns to at most ``b``, and
    the remaining deficit is filled by a rank-one nonnegative correction.
    Used to turn approximate Sinkhorn iterates into exactly feasible
    couplings before certifying them.
    """
    X = np.maximum(np.asarray(gamma, dtype=float), 0.0)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    r = X.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        X = X * np.where(r > a, a / r, 1.0)[:, None]
        c = X.sum(axis=0)
        X = X * np.where(c > b, b / c, 1.0)[None, :]
    er = np.maximum(a - X.sum(axis=1), 0.0)
    ec = np.maximum(b - X.sum(axis=0), 0.0)
    tot = er.sum()
    if tot > 0:
        X = X + np.outer(er, ec) / tot
    return X


def check_coupling(gamma, mu: DiscreteMeasure, nu: DiscreteMeasure,
                   tol: float = 1e-8) -> tuple[bool, float]:
    """Return ``(ok, worst)`` where ``worst`` is the largest marginal residual
    or negative entry magnitude."""
    if isinstance(gamma, Coupling):
        gamma = gamma.gamma
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (mu.size, nu.size):
        raise InputError(f"coupling shape {gamma.shape} != {(mu.size, nu.size)}")
    worst = marginal_violation(gamma, mu.weights, nu.weights)
    return worst <= tol, worst


def uniform_measure(points, labels=None) -> DiscreteMeasure:
    return DiscreteMeasure(np.asarray(points, dtype=float), None, labels)


def as_index_array(subset: Iterable[int] | np.ndarray, n: int) -> np.ndarray:
    """Normalize a subset (indices or boolean mask) to sorted unique indices."""
    a = np.asarray(subset if not isinstance(subset, (set, frozenset)) else sorted(subset))
    if a.dtype == bool:
        if a.shape != (n,):
            raise InputError(f"mask must have length {n}")
        return np.flatnonzero(a)
    a = np.unique(a.astype(np.int64).ravel())
    if a.size and (a[0] < 0 or a[-1] >= n):
        raise InputError("subset index out of range")
    return a


def validate_pair(mu: DiscreteMeasure, nu: DiscreteMeasure, shape: Sequence[int]):
    if tuple(shape) != (mu.size, nu.size):
        raise InputError(f"shape {tuple(shape)} does not match measures "
                         f"({mu.size}, {nu.size})")
