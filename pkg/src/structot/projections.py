"""Bregman projections used by the outer solvers.

* :func:`kl_project` -- KL projection onto the transport polytope ``M(mu, nu)``
  by Sinkhorn matrix scaling (switches to the log domain on underflow).
* :func:`project_base` and friends -- Euclidean projection onto the base
  polytope ``B_F``, with fast paths for concave-of-sum groups and a generic
  Fujishige-Wolfe minimum-norm-point fallback.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import kernels
from .exceptions import InputError, NotCertifiedWarning
from .measures import Coupling, DiscreteMeasure
from .submodular import (BlackBox, ConcaveOfSum, Decomposable, DualPoint, Modular,
                         SubmodularCost, shifted)

log = logging.getLogger(__name__)

LOG_DOMAIN_THRESHOLD = 1e-100
_EPS = np.finfo(float).eps


# -- transport polytope ---------------------------------------------------------


@dataclass(frozen=True)
class SinkhornConfig:
    inner_tol: float = 1e-9
    max_inner: int = 10000
    underflow_floor: float = 1e-300

    def __post_init__(self):
        if not self.inner_tol > 0:
            raise InputError("inner_tol must be positive")
        if self.max_inner < 1:
            raise InputError("max_inner must be >= 1")


@dataclass
class ScalingResult:
    """Output of :func:`sinkhorn_log`; ``log_u``/``log_v`` scale ``exp(logw)``."""

    gamma: np.ndarray
    log_gamma: np.ndarray
    log_u: np.ndarray
    log_v: np.ndarray
    residual: float
    iterations: int
    certified: bool
    log_domain: bool


def _lse(x, axis):
    mx = x.max(axis=axis, keepdims=True)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    out = np.log(np.exp(x - mx).sum(axis=axis, keepdims=True)) + mx
    return out.squeeze(axis)


def _scale_standard(K, a, b, tol, max_inner):
    u = np.ones(K.shape[0])
    v = np.ones(K.shape[1])
    err = np.inf
    it = 0
    while True:
        Kv = K @ v
        err = float(np.abs(u * Kv - a).max())
        if err <= tol or it >= max_inner:
            break
        u = a / Kv
        v = b / (K.T @ u)
        it += 1
    return u, v, err, it


def _scale_log(logK, a, b, tol, max_inner, f=None, g=None, absorb_at=50.0):
    """Sinkhorn on log-potentials ``(f, g)`` with ``gamma = exp(logK + f + g)``.

    Stabilized scaling: plain scalings ``(u, v)`` run against the absorbed
    kernel ``exp(logK + f + g)`` and are folded back into the potentials
    once ``|log u|`` or ``|log v|`` exceeds ``absorb_at``. Absorption starts
    with an exact log-domain row and column update, so no row or column of
    the working kernel underflows to zero.
    """
    f = np.zeros(logK.shape[0]) if f is None else np.array(f, dtype=float)
    g = np.zeros(logK.shape[1]) if g is None else np.array(g, dtype=float)
    la, lb = np.log(a), np.log(b)
    err = np.inf
    it = 0
    while True:
        f = la - _lse(logK + g[None, :], axis=1)
        g = lb - _lse(logK + f[:, None], axis=0)
        it += 1
        K = np.exp(logK + f[:, None] + g[None, :])
        u, v, err, inner, absorbed = kernels.sinkhorn_scale(K, a, b, tol, max_inner - it,
                                                            absorb_at)
        it += inner
        with np.errstate(divide="ignore"):
            f = f + np.log(u)
            g = g + np.log(v)
        if not absorbed or not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
            break
        if it >= max_inner:
            break
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
        f, g, err, it = _scale_log_plain(logK, a, b, tol, max_inner)
    return f, g, err, it


def _scale_log_plain(logK, a, b, tol, max_inner):
    f = np.zeros(logK.shape[0])
    g = np.zeros(logK.shape[1])
    la, lb = np.log(a), np.log(b)
    err = np.inf
    it = 0
    while True:
        lr = _lse(logK + g[None, :], axis=1)
        err = float(np.abs(np.exp(f + lr) - a).max())
        if err <= tol or it >= max_inner:
            break
        f = la - lr
        g = lb - _lse(logK + f[:, None], axis=0)
        it += 1
    return f, g, err, it


def sinkhorn_log(logw, a, b, cfg: SinkhornConfig = SinkhornConfig(), init=None) -> ScalingResult:
    """KL projection of ``exp(logw)`` onto ``M(a, b)``.

    ``logw`` is shifted by its maximum (the projection is scale invariant);
    if the shifted kernel has entries below ``1e-100`` the iteration runs on
    log-potentials, otherwise on plain scalings. ``init`` optionally gives
    starting log-scalings ``(log_u, log_v)`` of ``exp(logw)``, as returned in
    a previous result; it is used by the log-domain iteration only.
    """
    logw = np.asarray(logw, dtype=float)
    shift = float(np.max(logw))
    if not np.isfinite(shift):
        raise InputError("kernel has no finite entry")
    logK = np.maximum(logw - shift, np.log(cfg.underflow_floor))
    if init is None and logK.min() >= np.log(LOG_DOMAIN_THRESHOLD):
        K = np.exp(logK)
        u, v, err, it = _scale_standard(K, a, b, cfg.inner_tol, cfg.max_inner)
        gamma = u[:, None] * K * v[None, :]
        lu, lv = np.log(u), np.log(v)
        log_gamma = lu[:, None] + logK + lv[None, :]
        logdom = False
    else:
        f0 = g0 = None
        if init is not None:
            f0 = np.asarray(init[0], dtype=float) + shift
            g0 = np.asarray(init[1], dtype=float)
        lu, lv, err, it = _scale_log(logK, a, b, cfg.inner_tol, cfg.max_inner, f0, g0)
        log_gamma = logK + lu[:, None] + lv[None, :]
        gamma = np.exp(log_gamma)
        logdom = True
    ok = err <= cfg.inner_tol
    if not ok:
        warnings.warn(f"Sinkhorn stopped at residual {err:.3e} after {it} iterations",
                      NotCertifiedWarning, stacklevel=2)
    return ScalingResult(gamma, log_gamma, lu - shift, lv, err, it, ok, logdom)


def kl_project(w, mu: DiscreteMeasure, nu: DiscreteMeasure,
               cfg: SinkhornConfig = SinkhornConfig()) -> Coupling:
    """``argmin_{gamma in M(mu, nu)} KL(gamma || w)`` for a nonnegative matrix ``w``.

    Entries are floored at ``cfg.underflow_floor``; an all-zero row or column
    is an input error. The returned coupling carries the scalings ``(u, v)``
    with ``gamma = diag(u) w diag(v)`` (``w`` after flooring).
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (mu.size, nu.size):
        raise InputError(f"kernel shape {w.shape} != {(mu.size, nu.size)}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise InputError("kernel must be finite and nonnegative")
    if np.any(w.sum(axis=1) == 0) or np.any(w.sum(axis=0) == 0):
        raise InputError("kernel has an all-zero row or column")
    w = np.maximum(w, cfg.underflow_floor)
    a, b = mu.weights, nu.weights
    if w.min() >= LOG_DOMAIN_THRESHOLD:
        u, v, err, it = _scale_standard(w, a, b, cfg.inner_tol, cfg.max_inner)
        gamma = u[:, None] * w * v[None, :]
        scalings = (u, v)
        ok = err <= cfg.inner_tol
    else:
        res = sinkhorn_log(np.log(w), a, b, cfg)
        gamma, err, it, ok = res.gamma, res.residual, res.iterations, res.certified
        with np.errstate(over="ignore"):
            scalings = (np.exp(res.log_u), np.exp(res.log_v))
    if not ok:
        warnings.warn(f"kl_project not certified (residual {err:.3e})",
                      NotCertifiedWarning, stacklevel=2)
    return Coupling(gamma, marginal_tol=max(err, cfg.inner_tol), certified=ok,
                    scalings=scalings, iterations=it)


# -- submodular minimization for one concave-of-sum group -----------------------


class SFMSolution(NamedTuple):
    subset: np.ndarray
    value: float


def _require_concave(F):
    if not isinstance(F, ConcaveOfSum):
        raise InputError("a ConcaveOfSum component is required")


def sfm_concave_of_sum(F: ConcaveOfSum, m, lam: float = 0.0) -> SFMSolution:
    """Minimize ``g(sum_{S} w_i) + sum_{i in S} (m_i - lam)`` over ``S`` within the group.

    ``m`` is a flat vector over the whole ground set. Sorting by
    ``(lam - m_i) / w_i`` gives nested candidate sets; the best prefix (or
    the empty set) is exact for concave ``g``. O(k log k).
    """
    _require_concave(F)
    if np.any(F.edge_weights <= 0):
        raise InputError("sfm_concave_of_sum needs strictly positive edge weights")
    m = np.asarray(m, dtype=float).ravel()
    if m.shape != (F.n,):
        raise InputError(f"m must have length {F.n}")
    kind, param = F.g.code
    order, k, val = kernels.sfm_prefix(F.edge_weights, m[F.group], float(lam), 0.0, kind, param)
    return SFMSolution(np.sort(F.group[np.asarray(order)[:k]]), float(val))


@dataclass(frozen=True, eq=False)
class ParametricCurve:
    """Breakpoints ``y_j`` of the parametric minimizers of ``F + m - lam |S|``.

    ``{j : y_j < lam}`` and ``{j : y_j <= lam}`` are the smallest and largest
    minimizers at level ``lam``; ``y`` itself is the min-norm point of
    ``B_{F+m}`` restricted to the group.
    """

    elements: np.ndarray
    breakpoints: np.ndarray

    def level_set(self, lam: float = 0.0, strict: bool = False) -> np.ndarray:
        sel = self.breakpoints < lam if strict else self.breakpoints <= lam
        return self.elements[sel]


def parametric_curve(F: ConcaveOfSum, m) -> ParametricCurve:
    _require_concave(F)
    m = np.asarray(m, dtype=float).ravel()
    kind, param = F.g.code
    kz = kernels.project_one(F.edge_weights, -m[F.group], kind, param)
    return ParametricCurve(F.group.copy(), np.asarray(kz) + m[F.group])


# -- base polytope projections ---------------------------------------------------


def project_base_concave_of_sum(F: ConcaveOfSum, w) -> DualPoint:
    """``argmin_{kappa in B_F} ||kappa - w||`` for one concave-of-sum group.

    Decomposition algorithm on the shifted function ``F - w``: each step
    solves one parametric minimization with the prefix scan and splits the
    group into a restriction and a contraction.
    """
    _require_concave(F)
    w = np.ascontiguousarray(w, dtype=float).ravel()
    if w.shape != (F.n,):
        raise InputError(f"w must have length {F.n}")
    kappa = np.zeros(F.n)
    kind, param = F.g.code
    kappa[F.group] = kernels.project_one(F.edge_weights, w[F.group], kind, param)
    return DualPoint(kappa, "projection")


def _project_any(F: SubmodularCost, w, **kw) -> np.ndarray:
    if isinstance(F, Modular):
        return F.c.copy()
    if isinstance(F, ConcaveOfSum):
        return project_base_concave_of_sum(F, w).kappa.copy()
    if isinstance(F, Decomposable):
        return project_base_decomposable(F, w, **kw).kappa.copy()
    y = mnp_fujishige_wolfe(shifted(F, w), tol=kw.get("mnp_tol", 1e-12))
    return y.kappa + w


def project_base_decomposable(F: Decomposable, w, **kw) -> DualPoint:
    """Projection onto a product of base polytopes (disjoint supports).

    Overlapping decompositions are routed to :func:`project_base_overlapping`.
    Edges outside every support are loops of ``F`` and get zero.
    """
    if not isinstance(F, Decomposable):
        raise InputError("a Decomposable function is required")
    if F.support_flag == "overlapping":
        return project_base_overlapping(F, w, **kw)
    w = np.ascontiguousarray(w, dtype=float).ravel()
    if w.shape != (F.n,):
        raise InputError(f"w must have length {F.n}")
    kappa = F._modular.copy()
    for p in F._packs:
        kernels.group_project(w, p.idx, p.ptr, p.wts, p.kind, p.param, kappa)
    certified = True
    for c in F._others:
        sup = c.support()
        part = _project_any(c, w, **kw)
        kappa[sup] = part[sup]
    return DualPoint(kappa, "projection", certified)


class BaseProjector:
    """Reusable projector onto ``B_F`` that warm-starts overlapping decompositions.

    Calling it returns a :class:`DualPoint`. For disjoint or single-group
    functions it is stateless; for overlapping decompositions the block
    iterates of the previous call seed the next one.
    """

    def __init__(self, F: SubmodularCost, outer_tol: float = 1e-9, max_sweeps: int = 2000):
        self.F = F
        self.outer_tol = outer_tol
        self.max_sweeps = max_sweeps
        self.overlapping = isinstance(F, Decomposable) and F.support_flag == "overlapping"
        self._blocks = None
        if self.overlapping:
            self._plan = _BlockPlan(F)

    def __call__(self, w) -> DualPoint:
        if not self.overlapping:
            return project_base(self.F, w)
        dp = _cyclic_blocks(self.F, self._plan, w, self.outer_tol, self.max_sweeps,
                            self._blocks)
        self._blocks = dp.info["blocks"]
        return dp


class _BlockPlan:
    """Packed block layout of an overlapping decomposition.

    Concave-of-sum components become packed groups; components with the same
    support, weights and concave function are merged into one block with a
    multiplicity (``k`` copies of ``B_G`` sum to ``k B_G``). Modular
    components are a constant offset. Anything else is projected generically.
    """

    def __init__(self, F: Decomposable):
        self.n = F.n
        self.fixed = np.zeros(F.n)
        self.generic = []
        seen = {}
        groups, wts, kinds, params, mult = [], [], [], [], []
        for c in F.components:
            if isinstance(c, ConcaveOfSum):
                kind, param = c.g.code
                key = (c.group.tobytes(), c.edge_weights.tobytes(), kind, param)
                if key in seen:
                    mult[seen[key]] += 1.0
                    continue
                seen[key] = len(groups)
                groups.append(c.group)
                wts.append(c.edge_weights)
                kinds.append(kind)
                params.append(param)
                mult.append(1.0)
            elif isinstance(c, Modular):
                self.fixed += c.c
            else:
                self.generic.append((np.asarray(c.support(), dtype=np.int64), c))
        sizes = [gr.size for gr in groups]
        self.ptr = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        self.idx = (np.concatenate(groups).astype(np.int64) if groups
                    else np.zeros(0, dtype=np.int64))
        self.wts = np.concatenate(wts).astype(float) if wts else np.zeros(0)
        self.kinds = np.asarray(kinds, dtype=np.int64)
        self.params = np.asarray(params, dtype=float)
        self.mult = np.asarray(mult, dtype=float)

    def total(self, blocks, generic_blocks):
        out = self.fixed + np.bincount(self.idx, weights=blocks, minlength=self.n)
        for (sup, _), b in zip(self.generic, generic_blocks):
            out[sup] += b
        return out


def _cyclic_blocks(F, plan, w, outer_tol, max_sweeps, init):
    w = np.ascontiguousarray(w, dtype=float).ravel()
    if w.shape != (F.n,):
        raise InputError(f"w must have length {F.n}")
    if init is None:
        blocks = np.zeros(plan.idx.size)
        gen = [np.zeros(sup.size) for sup, _ in plan.generic]
    else:
        blocks = init[0].copy()
        gen = [b.copy() for b in init[1]]
    args = (plan.idx, plan.ptr, plan.wts, plan.kinds, plan.params, plan.mult)
    if not plan.generic:
        sweeps, change, converged = kernels.group_bcd(w, *args, plan.fixed, blocks,
                                                      outer_tol, max_sweeps)
    else:
        converged = False
        sweeps, change = 0, np.inf
        for sweeps in range(1, max_sweeps + 1):
            # one compiled sweep over the concave groups, generic blocks held fixed
            offset = plan.total(np.zeros_like(blocks), gen)
            _, change, _ = kernels.group_bcd(w, *args, offset, blocks, outer_tol, 1)
            total = plan.total(blocks, gen)
            for i, (sup, c) in enumerate(plan.generic):
                full = np.zeros(F.n)
                full[sup] = w[sup] - (total[sup] - gen[i])
                new = _project_any(c, full)[sup]
                d = new - gen[i]
                if d.size:
                    change = max(change, float(np.abs(d).max()))
                total[sup] += d
                gen[i] = new
            if change <= outer_tol:
                converged = True
                break
    if not converged:
        warnings.warn(f"block projection stopped after {sweeps} sweeps (change {change:.3e})",
                      NotCertifiedWarning, stacklevel=3)
    return DualPoint(plan.total(blocks, gen), "projection", bool(converged),
                     {"sweeps": sweeps, "last_change": change, "blocks": (blocks, gen)})


def project_base_overlapping(F: Decomposable, w, outer_tol: float = 1e-9,
                             max_sweeps: int = 2000, init_blocks=None) -> DualPoint:
    """Projection onto ``B_F`` for ``F = sum_i F_i`` with overlapping supports.

    Cyclic block-coordinate minimization of ``||sum_i kappa_i - w||^2`` over
    ``kappa_i in B_{F_i}``; stops when a full sweep changes no block entry by
    more than ``outer_tol``.
    """
    if not isinstance(F, Decomposable):
        raise InputError("a Decomposable function is required")
    return _cyclic_blocks(F, _BlockPlan(F), w, outer_tol, max_sweeps, init_blocks)


def project_base(F: SubmodularCost, w, **kw) -> DualPoint:
    """Euclidean projection of ``w`` onto ``B_F``, dispatching on the representation."""
    w = np.ascontiguousarray(w, dtype=float).ravel()
    if w.shape != (F.n,):
        raise InputError(f"w must have length {F.n}")
    if isinstance(F, Modular):
        return DualPoint(F.c, "projection")
    if isinstance(F, ConcaveOfSum):
        return project_base_concave_of_sum(F, w)
    if isinstance(F, Decomposable):
        return project_base_decomposable(F, w, **kw)
    y = mnp_fujishige_wolfe(shifted(F, w), tol=kw.get("mnp_tol", 1e-12))
    return DualPoint(y.kappa + w, "projection", y.certified, y.info)


# -- generic minimum-norm point --------------------------------------------------


def _affine_minimizer(S):
    """Barycentric coordinates of the min-norm point of the affine hull of rows of ``S``."""
    if S.shape[0] == 1:
        return np.ones(1)
    D = (S[1:] - S[0]).T
    beta, *_ = np.linalg.lstsq(D, -S[0], rcond=1e-12)
    return np.concatenate([[1.0 - beta.sum()], beta])


def mnp_fujishige_wolfe(F: SubmodularCost, tol: float = 1e-12,
                        max_iter: int = 10000) -> DualPoint:
    """Minimum-norm point of ``B_F`` by Wolfe's algorithm on greedy vertices.

    Stops when ``||y||^2 - <y, q> <= tol`` with ``q`` the greedy vertex for
    ``-y`` (the linear minimizer over ``B_F``), or when the new vertex is
    already in the active set.
    """
    n = F.n
    x = F.greedy(np.zeros(n))
    S = x[None, :].copy()
    lam = np.ones(1)
    calls = 1
    gap = np.inf
    certified = False
    minor_total = 0
    for it in range(1, max_iter + 1):
        q = F.greedy(-x)
        calls += 1
        xx = float(x @ x)
        gap = xx - float(x @ q)
        scale = max(xx, float(np.max(np.einsum("ij,ij->i", S, S))), float(q @ q))
        floor = 64 * _EPS * scale
        if gap <= max(tol, floor):
            certified = True
            break
        if np.any(np.abs(S - q).max(axis=1) < 1e-12):
            certified = gap <= max(tol, floor)
            break
        S = np.vstack([S, q])
        lam = np.append(lam, 0.0)
        while True:
            minor_total += 1
            alpha = _affine_minimizer(S)
            if np.all(alpha >= -1e-12):
                alpha = np.maximum(alpha, 0.0)
                lam = alpha / alpha.sum()
                x = lam @ S
                keep = lam > 0
                S, lam = S[keep], lam[keep]
                break
            neg = alpha < 0
            theta = float(np.min(lam[neg] / (lam[neg] - alpha[neg])))
            lam = theta * alpha + (1 - theta) * lam
            keep = lam > 1e-15
            S, lam = S[keep], lam[keep]
            lam = lam / lam.sum()
            x = lam @ S
    else:
        warnings.warn(f"MNP stopped after {max_iter} iterations (gap {gap:.3e})",
                      NotCertifiedWarning, stacklevel=2)
    return DualPoint(x, "projection", certified,
                     {"gap": gap, "oracle_calls": calls, "minor_cycles": minor_total,
                      "active": S.shape[0]})
