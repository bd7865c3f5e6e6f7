"""Submodular set functions over the edge ground set.

Four representations share the interface ``F(S)`` / ``F.greedy(w)``:

* :class:`Modular` -- ``F(S) = c(S)``.
* :class:`ConcaveOfSum` -- ``F(S) = g(sum_{e in S & group} w_e)``.
* :class:`Decomposable` -- a sum of components (disjoint or overlapping supports).
* :class:`BlackBox` -- any callable on ``frozenset`` subsets.

Subsets are accepted as iterables of flat edge indices or boolean masks.
The greedy order is a stable sort by decreasing weight, ties broken by
ascending edge index.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable

import numpy as np

from . import _kernels_py, kernels
from .exceptions import InputError
from .measures import as_index_array

_KINDS = {"identity": 0, "sqrt": 1, "threshold_sqrt": 2, "power": 3}


@dataclass(frozen=True)
class ConcaveFn:
    """Nondecreasing concave ``g`` on ``[0, inf)`` with ``g(0) = 0``.

    Kinds: ``identity``, ``sqrt``, ``power`` (``x**p``, ``0 < p <= 1``) and
    ``threshold_sqrt``, which is linear up to the threshold and then grows
    like a square root: ``g(x) = min{x, alpha + sqrt([x - alpha]_+)}``. That
    equals ``min{x, alpha} + sqrt([x - alpha]_+)`` except on
    ``(alpha, alpha + 1)``, where the latter is not concave.
    """

    kind: str = "identity"
    param: float | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InputError(f"unknown concave function kind {self.kind!r}")
        if self.kind == "threshold_sqrt":
            if self.param is None or not self.param > 0:
                raise InputError("threshold_sqrt needs alpha > 0")
        elif self.kind == "power":
            if self.param is None or not 0 < self.param <= 1:
                raise InputError("power needs p in (0, 1]")
        elif self.param is not None:
            object.__setattr__(self, "param", None)

    @classmethod
    def identity(cls):
        return cls("identity")

    @classmethod
    def sqrt(cls):
        return cls("sqrt")

    @classmethod
    def threshold_sqrt(cls, alpha):
        return cls("threshold_sqrt", float(alpha))

    @classmethod
    def power(cls, p):
        return cls("power", float(p))

    @classmethod
    def from_dict(cls, d):
        kind = d.get("kind", "identity")
        param = d.get("alpha", d.get("p", d.get("param")))
        return cls(kind, None if param is None else float(param))

    def to_dict(self):
        d = {"kind": self.kind}
        if self.kind == "threshold_sqrt":
            d["alpha"] = self.param
        elif self.kind == "power":
            d["p"] = self.param
        return d

    @property
    def code(self) -> tuple[int, float]:
        return _KINDS[self.kind], (0.0 if self.param is None else self.param)

    def __call__(self, x):
        kind, param = self.code
        out = _kernels_py.g_eval(kind, param, x)
        return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True, eq=False)
class DualPoint:
    """A point ``kappa`` (flat, length ``n*m``) asserted to lie in ``B_F``."""

    kappa: np.ndarray
    source_tag: str = "greedy"
    certified: bool = True
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        k = np.array(self.kappa, dtype=float).ravel()
        k.setflags(write=False)
        object.__setattr__(self, "kappa", k)

    def matrix(self, shape) -> np.ndarray:
        return self.kappa.reshape(shape)


class SubmodularCost:
    """Base class; subclasses implement ``_eval_mask`` and ``greedy``."""

    n: int

    def __call__(self, subset) -> float:
        return self._eval_mask(self._mask(subset))

    def _mask(self, subset):
        if isinstance(subset, np.ndarray) and subset.dtype == bool:
            if subset.shape != (self.n,):
                raise InputError(f"mask must have length {self.n}")
            return subset
        mask = np.zeros(self.n, dtype=bool)
        mask[as_index_array(subset, self.n)] = True
        return mask

    def _eval_mask(self, mask) -> float:
        raise NotImplementedError

    def greedy(self, w) -> np.ndarray:
        raise NotImplementedError

    def support(self) -> np.ndarray:
        return np.arange(self.n)

    def _check_w(self, w):
        w = np.ascontiguousarray(w, dtype=float).ravel()
        if w.shape != (self.n,):
            raise InputError(f"expected a vector of length {self.n}, got {w.size}")
        return w


class Modular(SubmodularCost):
    def __init__(self, c):
        c = np.array(c, dtype=float).ravel()
        c.setflags(write=False)
        self.c = c
        self.n = c.size

    def _eval_mask(self, mask):
        return float(self.c[mask].sum())

    def greedy(self, w):
        self._check_w(w)
        return self.c.copy()

    def support(self):
        return np.flatnonzero(self.c)

    def __repr__(self):
        return f"Modular(n={self.n})"


class ConcaveOfSum(SubmodularCost):
    """``F(S) = g(sum of edge_weights over S & group)`` on a ground set of size ``n``."""

    def __init__(self, group, edge_weights, g: ConcaveFn, n: int):
        group = np.asarray(group, dtype=np.int64).ravel()
        wts = np.asarray(edge_weights, dtype=float).ravel()
        if group.shape != wts.shape:
            raise InputError("group and edge_weights differ in length")
        if group.size and (group.min() < 0 or group.max() >= n):
            raise InputError("group index out of range")
        if np.unique(group).size != group.size:
            raise InputError("group contains repeated edges")
        if np.any(wts < 0) or not np.all(np.isfinite(wts)):
            raise InputError("edge weights must be finite and nonnegative")
        order = np.argsort(group)
        self.group = group[order]
        self.edge_weights = wts[order]
        self.group.setflags(write=False)
        self.edge_weights.setflags(write=False)
        self.g = g
        self.n = int(n)
        # packed single-group layout for the kernels
        self._ptr = np.array([0, self.group.size], dtype=np.int64)

    def _eval_mask(self, mask):
        return float(self.g(self.edge_weights[mask[self.group]].sum()))

    def greedy(self, w):
        w = self._check_w(w)
        out = np.zeros(self.n)
        kind, param = self.g.code
        kernels.group_greedy(w, self.group, self._ptr, self.edge_weights, kind, param, out)
        return out

    def support(self):
        return self.group

    def __repr__(self):
        return f"ConcaveOfSum(k={self.group.size}, g={self.g}, n={self.n})"


class _Pack:
    """ConcaveOfSum components sharing one ``g``, concatenated for the kernels."""

    def __init__(self, comps):
        self.g = comps[0].g
        self.kind, self.param = self.g.code
        self.idx = np.concatenate([c.group for c in comps]).astype(np.int64)
        self.wts = np.concatenate([c.edge_weights for c in comps]).astype(float)
        sizes = [c.group.size for c in comps]
        self.ptr = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        self.size = len(comps)


class Decomposable(SubmodularCost):
    """Sum of component functions over a common ground set.

    ``support_flag`` is ``"disjoint"`` or ``"overlapping"``; when omitted it
    is detected from the component supports. Declaring ``"disjoint"`` for
    overlapping supports is an error.
    """

    def __init__(self, components, support_flag: str | None = None):
        components = list(components)
        if not components:
            raise InputError("Decomposable needs at least one component")
        n = components[0].n
        if any(c.n != n for c in components):
            raise InputError("components live on different ground sets")
        self.components = components
        self.n = n
        counts = np.zeros(n, dtype=np.int64)
        for c in components:
            counts[c.support()] += 1
        overlapping = bool(np.any(counts > 1))
        if support_flag is None:
            support_flag = "overlapping" if overlapping else "disjoint"
        if support_flag not in ("disjoint", "overlapping"):
            raise InputError(f"unknown support_flag {support_flag!r}")
        if support_flag == "disjoint" and overlapping:
            raise InputError("components declared disjoint have overlapping supports")
        self.support_flag = support_flag
        self._build_packs()

    def _build_packs(self):
        by_g = {}
        modular = np.zeros(self.n)
        others = []
        for c in self.components:
            if isinstance(c, ConcaveOfSum):
                by_g.setdefault(c.g, []).append(c)
            elif isinstance(c, Modular):
                modular += c.c
            else:
                others.append(c)
        self._packs = [_Pack(v) for v in by_g.values()]
        self._modular = modular
        self._others = others

    def _eval_mask(self, mask):
        total = float(self._modular[mask].sum())
        for p in self._packs:
            total += kernels.group_eval(mask, p.idx, p.ptr, p.wts, p.kind, p.param)
        for c in self._others:
            total += c._eval_mask(mask)
        return total

    def greedy(self, w):
        w = self._check_w(w)
        out = self._modular.copy()
        for p in self._packs:
            kernels.group_greedy(w, p.idx, p.ptr, p.wts, p.kind, p.param, out)
        for c in self._others:
            out += c.greedy(w)
        return out

    def support(self):
        return np.unique(np.concatenate([c.support() for c in self.components]))

    def __repr__(self):
        return (f"Decomposable({len(self.components)} components, "
                f"{self.support_flag}, n={self.n})")


class BlackBox(SubmodularCost):
    """Set function given by ``evaluator(frozenset_of_indices) -> float``."""

    def __init__(self, evaluator: Callable, n: int):
        self.evaluator = evaluator
        self.n = int(n)

    def _eval_mask(self, mask):
        return float(self.evaluator(frozenset(np.flatnonzero(mask).tolist())))

    def greedy(self, w):
        w = self._check_w(w)
        order = np.argsort(-w, kind="stable")
        out = np.empty(self.n)
        members = set()
        prev = float(self.evaluator(frozenset()))
        for e in order.tolist():
            members.add(e)
            cur = float(self.evaluator(frozenset(members)))
            out[e] = cur - prev
            prev = cur
        return out

    def __repr__(self):
        return f"BlackBox(n={self.n})"


def shifted(F: SubmodularCost, w) -> Decomposable:
    """``F - w`` as a set function, i.e. ``S -> F(S) - w(S)``."""
    return Decomposable([F, Modular(-np.asarray(w, dtype=float))], "overlapping")


def group_cost(groups, weights, g: ConcaveFn, n: int, remainder=None) -> SubmodularCost:
    """Sum over groups of ``g(weights(S & group))``; ``remainder`` edges become
    singleton groups, which are modular with value ``g(weights[e])``."""
    weights = np.asarray(weights, dtype=float).ravel()
    comps = [ConcaveOfSum(gr, weights[gr], g, n) for gr in groups]
    if remainder is not None and len(remainder):
        c = np.zeros(n)
        remainder = np.asarray(remainder, dtype=np.int64)
        c[remainder] = g(weights[remainder])
        comps.append(Modular(c))
    if len(comps) == 1:
        return comps[0]
    return Decomposable(comps)


# -- operations ---------------------------------------------------------------


def evaluate(F: SubmodularCost, subset) -> float:
    """``F(S)`` for a subset given as indices or a boolean mask."""
    return F(subset)


def _all_values(F: SubmodularCost) -> np.ndarray:
    n = F.n
    codes = np.arange(1 << n)
    masks = ((codes[:, None] >> np.arange(n)) & 1).astype(bool)
    return np.array([F._eval_mask(m) for m in masks])


def check_submodular(F: SubmodularCost, max_ground_size: int = 12,
                     tol: float = 1e-10) -> bool:
    """Exhaustive diminishing-returns check.

    Uses the equivalent local form ``F(S+u) + F(S+v) >= F(S+u+v) + F(S)``
    for all ``S`` and ``u, v`` outside ``S``.
    """
    if F.n > max_ground_size:
        raise InputError(f"ground set of size {F.n} exceeds max_ground_size={max_ground_size}")
    vals = _all_values(F)
    if abs(vals[0]) > tol:
        return False
    codes = np.arange(1 << F.n)
    for u, v in combinations(range(F.n), 2):
        bu, bv = 1 << u, 1 << v
        s = codes[(codes & (bu | bv)) == 0]
        if np.any(vals[s | bu] + vals[s | bv] - vals[s | bu | bv] - vals[s] < -tol):
            return False
    return True


def singleton_values(F: SubmodularCost) -> np.ndarray:
    """``F({e})`` for every element ``e`` of the ground set."""
    if isinstance(F, Modular):
        return F.c.copy()
    if isinstance(F, ConcaveOfSum):
        out = np.zeros(F.n)
        out[F.group] = F.g(F.edge_weights)
        return out
    if isinstance(F, Decomposable):
        return sum((singleton_values(c) for c in F.components), np.zeros(F.n))
    out = np.empty(F.n)
    mask = np.zeros(F.n, dtype=bool)
    for e in range(F.n):
        mask[e] = True
        out[e] = F._eval_mask(mask)
        mask[e] = False
    return out


def greedy_vertex(F: SubmodularCost, w) -> DualPoint:
    """Edmonds' greedy vertex: maximizer of ``<kappa, w>`` over ``B_F``."""
    return DualPoint(F.greedy(w), "greedy")


def lovasz(F: SubmodularCost, w) -> float:
    """Lovasz extension ``f(w)`` for ``w >= 0``."""
    w = np.ascontiguousarray(w, dtype=float).ravel()
    if np.any(w < 0):
        raise InputError("the Lovasz extension is only evaluated on w >= 0")
    return float(np.dot(F.greedy(w), w))


def membership_violation(F: SubmodularCost, kappa, samples: int = 256,
                         rng: np.random.Generator | None = None) -> float:
    """Largest violation ``max(kappa(A) - F(A), |kappa(V) - F(V)|)`` found.

    Exact for modular, concave-of-sum and disjoint decomposable functions built
    from those (via the prefix-scan minimizer), and for ground sets of at most
    12 elements. Otherwise ``samples`` random subsets plus the greedy chain of
    ``kappa`` itself are tested.
    """
    kappa = np.asarray(kappa, dtype=float).ravel()
    exact = _exact_violation(F, kappa)
    if exact is not None:
        return exact
    worst = abs(kappa.sum() - F._eval_mask(np.ones(F.n, dtype=bool)))
    if F.n <= 12:
        vals = _all_values(F)
        codes = np.arange(1 << F.n)
        masks = ((codes[:, None] >> np.arange(F.n)) & 1).astype(bool)
        return max(worst, float(np.max(masks @ kappa - vals)))
    rng = np.random.default_rng(0) if rng is None else rng
    for _ in range(samples):
        m = rng.random(F.n) < rng.random()
        worst = max(worst, kappa[m].sum() - F._eval_mask(m))
    order = np.argsort(kappa)[::-1]
    m = np.zeros(F.n, dtype=bool)
    for e in order:
        m[e] = True
        worst = max(worst, kappa[m].sum() - F._eval_mask(m))
    return float(worst)


def _exact_violation(F, kappa):
    """Exact ``max_A kappa(A) - F(A)`` together with the equality on ``V``,
    or ``None`` when no exact method applies."""
    excess = _max_excess(F, kappa)
    if excess is None:
        return None
    full = np.ones(F.n, dtype=bool)
    return max(abs(kappa.sum() - F._eval_mask(full)), excess)


def _max_excess(F, kappa):
    """``max_A kappa(A) - F(A)`` (at least 0, from ``A`` empty) or ``None``."""
    if isinstance(F, Modular):
        return float(np.maximum(kappa - F.c, 0.0).sum())
    if isinstance(F, ConcaveOfSum):
        pos = F.edge_weights > 0
        loops = np.ones(F.n, dtype=bool)
        loops[F.group[pos]] = False
        # loops add nothing to F, so any positive kappa on them is pure excess
        free = float(np.maximum(kappa[loops], 0.0).sum())
        kind, param = F.g.code
        _, _, val = kernels.sfm_prefix(F.edge_weights[pos], -kappa[F.group[pos]],
                                       0.0, 0.0, kind, param)
        return free - val
    if isinstance(F, Decomposable) and F.support_flag == "disjoint" and not F._others:
        # the maximizing set splits over the supports
        covered = np.zeros(F.n, dtype=bool)
        total = 0.0
        for c in F.components:
            sup = np.asarray(c.support(), dtype=np.int64)
            covered[sup] = True
            sub = np.zeros(F.n)
            sub[sup] = kappa[sup]
            part = _max_excess(c, sub)
            if part is None:
                return None
            total += part
        total += float(np.maximum(kappa[~covered], 0.0).sum())
        return total
    return None


def check_dual_point(F: SubmodularCost, kappa, tol: float = 1e-8, **kw) -> tuple[bool, float]:
    if isinstance(kappa, DualPoint):
        kappa = kappa.kappa
    v = membership_violation(F, kappa, **kw)
    return v <= tol, v


def is_monotone(F: SubmodularCost) -> bool | None:
    """Structural monotonicity; ``None`` when it cannot be decided cheaply."""
    if isinstance(F, Modular):
        return bool(np.all(F.c >= 0))
    if isinstance(F, ConcaveOfSum):
        return True
    if isinstance(F, Decomposable):
        parts = [is_monotone(c) for c in F.components]
        if any(p is False for p in parts):
            return None
        return None if any(p is None for p in parts) else True
    if F.n <= 12:
        vals = _all_values(F)
        codes = np.arange(1 << F.n)
        for u in range(F.n):
            s = codes[(codes & (1 << u)) == 0]
            if np.any(vals[s | (1 << u)] < vals[s] - 1e-12):
                return False
        return True
    return None
