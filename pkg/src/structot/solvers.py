"""Outer solvers for transport with submodular edge costs, and the classical baselines.

The structured problem is ``min_{gamma in M(mu, nu)} f(gamma)`` with ``f`` the
Lovasz extension of a submodular edge cost ``F``. Equivalently it is the
bilinear saddle point ``min_gamma max_{kappa in B_F} <gamma, kappa>``.

Three first-order methods are provided, all with the entropy mirror map on
``gamma`` (so every ``gamma`` step is a KL projection, i.e. Sinkhorn) and the
Euclidean one on ``kappa`` (a projection onto ``B_F``):

* ``mda``  -- mirror descent on ``f`` using greedy subgradients;
* ``spmd`` -- simultaneous saddle-point mirror descent;
* ``spmp`` -- saddle-point mirror prox (extragradient).

Every result carries a duality-gap certificate
``f(gamma_hat) - min_{gamma in M} <gamma, kappa_hat>``, where the inner minimum is
an exact transport LP.
"""
from __future__ import annotations

import csv
import logging
import os
import time
import warnings
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .exceptions import InputError, NotCertifiedWarning
from .measures import Coupling, DiscreteMeasure, check_coupling, round_to_polytope, validate_pair
from .projections import BaseProjector, SinkhornConfig, sinkhorn_log
from .submodular import DualPoint, Modular, SubmodularCost, greedy_vertex, lovasz, membership_violation

# POT probes every array backend it knows on import; only numpy is used here.
for _name in ("PYTORCH", "JAX", "CUPY", "TENSORFLOW"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_name}", "1")
import ot  # noqa: E402

log = logging.getLogger(__name__)

ALGORITHMS = ("mda", "spmd", "spmp", "emd", "sinkhorn_ot")
STEP_RULES = ("inv_sqrt_t", "constant")
# bound on |eta * gradient| inside one multiplicative step
EXP_CLAMP = 700.0
GAP_FLOOR = 1e-8
# per-step Sinkhorn budget; warm starts carry unfinished scaling to the next step
INNER_CAP = 200


@dataclass(frozen=True)
class SolverConfig:
    """Settings for :func:`solve`.

    Parameters
    ----------
    algorithm : {"mda", "spmd", "spmp", "emd", "sinkhorn_ot"}
    eta0 : float, optional
        Initial step. Defaults to ``1 / (max greedy_vertex(F, C) + 1)``.
    step_rule : {"inv_sqrt_t", "constant"}, optional
        ``eta_t = eta0 / sqrt(t + 1)`` or ``eta_t = eta0``. Defaults to
        ``inv_sqrt_t`` for ``mda``/``spmd`` and ``constant`` for ``spmp``.
    tol : float
        Target for the stopping criterion (certified gap, or successive
        decrease of ``f`` for ``mda`` with ``stop_rule="decrease"``).
    max_iter, gap_every : int
        Iteration cap and cadence of gap certification.
    sinkhorn : SinkhornConfig
        Inner settings of every KL projection.
    entropic_lambda : float
        Inverse temperature of the ``sinkhorn_ot`` baseline.
    seed : int
        Seeds the sampled membership checks; the solvers are deterministic.
    averaging : {"leader", "corrector"}
        Which mirror-prox iterates enter the running average.
    dual_scale : float, optional
        Multiplier on the ``kappa`` step (equivalently a rescaled Euclidean
        mirror map). Defaults to the number of edges, which puts the
        ``kappa`` update ``kappa + eta * dual_scale * gamma`` on the scale of
        per-edge mass.
    stop_rule : {"auto", "gap", "decrease"}
        ``auto`` means ``decrease`` for ``mda`` and ``gap`` otherwise.
    """

    algorithm: str = "spmp"
    eta0: float | None = None
    step_rule: str | None = None
    tol: float = 1e-4
    max_iter: int = 5000
    gap_every: int = 25
    sinkhorn: SinkhornConfig = field(default_factory=lambda: SinkhornConfig(max_inner=INNER_CAP))
    entropic_lambda: float = 10.0
    seed: int = 0
    averaging: str = "leader"
    dual_scale: float | None = None
    stop_rule: str = "auto"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise InputError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if self.eta0 is not None and not self.eta0 > 0:
            raise InputError("eta0 must be positive")
        if self.step_rule is not None and self.step_rule not in STEP_RULES:
            raise InputError(f"step_rule must be one of {STEP_RULES}")
        if not self.tol > 0:
            raise InputError("tol must be positive")
        if self.max_iter < 1:
            raise InputError("max_iter must be >= 1")
        if self.gap_every < 1:
            raise InputError("gap_every must be >= 1")
        if not self.entropic_lambda > 0:
            raise InputError("entropic_lambda must be positive")
        if self.averaging not in ("leader", "corrector"):
            raise InputError("averaging must be 'leader' or 'corrector'")
        if self.dual_scale is not None and not self.dual_scale > 0:
            raise InputError("dual_scale must be positive")
        if self.stop_rule not in ("auto", "gap", "decrease"):
            raise InputError("stop_rule must be 'auto', 'gap' or 'decrease'")

    @property
    def resolved_step_rule(self) -> str:
        if self.step_rule is not None:
            return self.step_rule
        return "constant" if self.algorithm == "spmp" else "inv_sqrt_t"

    @property
    def resolved_stop_rule(self) -> str:
        if self.stop_rule != "auto":
            return self.stop_rule
        return "decrease" if self.algorithm == "mda" else "gap"

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("algorithm", "eta0", "step_rule", "tol", "max_iter",
                                           "gap_every", "entropic_lambda", "seed", "averaging",
                                           "dual_scale", "stop_rule")}
        d["sinkhorn"] = {"inner_tol": self.sinkhorn.inner_tol,
                         "max_inner": self.sinkhorn.max_inner,
                         "underflow_floor": self.sinkhorn.underflow_floor}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        d = dict(d)
        sk = d.pop("sinkhorn", None)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InputError(f"unknown solver fields {sorted(unknown)}")
        if sk is not None:
            d["sinkhorn"] = SinkhornConfig(**sk)
        return cls(**d)


class HistoryRecord(NamedTuple):
    iteration: int
    f_value: float
    gap: float
    wall_ms: float


@dataclass(frozen=True)
class SolveResult:
    """Outcome of a solve.

    ``coupling`` and ``dual`` form the reported pair with certified gap
    ``gap = primal_value - min_gamma <gamma, dual>``. ``history`` has one
    record per certification (values of the averaged iterates).
    """

    coupling: Coupling
    dual: DualPoint
    primal_value: float
    gap: float
    history: tuple
    certified: bool
    iterations: int
    algorithm: str = ""
    lower_bound: float = float("nan")
    timings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"algorithm": self.algorithm, "value": self.primal_value, "gap": self.gap,
                "lower_bound": self.lower_bound, "certified": self.certified,
                "iterations": self.iterations, "timings": dict(self.timings)}


# -- baselines ------------------------------------------------------------------


def _as_cost(C, mu, nu) -> np.ndarray:
    C = np.asarray(getattr(C, "entries", C), dtype=float)
    if C.ndim == 1:
        C = C.reshape(mu.size, nu.size)
    validate_pair(mu, nu, C.shape)
    if not np.all(np.isfinite(C)):
        raise InputError("cost matrix has non-finite entries")
    return C


def exact_ot_lp(C, mu: DiscreteMeasure, nu: DiscreteMeasure) -> tuple[Coupling, float]:
    """Exact transport plan and value ``min_{gamma in M(mu, nu)} <gamma, C>``.

    Solved by the network simplex of POT; the plan is a vertex of the
    transport polytope.
    """
    C = _as_cost(C, mu, nu)
    a, b = mu.weights, nu.weights
    if C.size == 1:
        gamma = np.ones((1, 1))
    else:
        gamma, info = ot.emd(a, b, np.ascontiguousarray(C), numItermax=10_000_000, log=True)
        if info.get("warning"):
            raise RuntimeError(f"network simplex failed: {info['warning']}")
    gamma = np.asarray(gamma, dtype=float)
    return Coupling(gamma, marginal_tol=1e-12), float(np.sum(gamma * C))


def entropic_ot(C, mu: DiscreteMeasure, nu: DiscreteMeasure, lam: float,
                cfg: SinkhornConfig = SinkhornConfig()) -> Coupling:
    """Entropy-smoothed transport plan for kernel ``exp(-lam * C)``.

    Minimizes ``<gamma, C> - H(gamma) / lam`` over ``M(mu, nu)``, so large
    ``lam`` approaches the exact plan. Switches to log-domain scaling when
    the kernel underflows.
    """
    if not lam > 0:
        raise InputError("lambda must be positive")
    C = _as_cost(C, mu, nu)
    res = sinkhorn_log(-lam * C, mu.weights, nu.weights, cfg)
    with np.errstate(over="ignore"):
        scal = (np.exp(res.log_u), np.exp(res.log_v))
    return Coupling(res.gamma, marginal_tol=max(res.residual, cfg.inner_tol),
                    certified=res.certified, scalings=scal, iterations=res.iterations)


# -- certificates ---------------------------------------------------------------


def _gamma_array(gamma):
    return np.asarray(getattr(gamma, "gamma", gamma), dtype=float)


def _lower_bound(kappa, mu, nu) -> float:
    return exact_ot_lp(np.asarray(kappa).reshape(mu.size, nu.size), mu, nu)[1]


def saddle_gap(gamma_hat, kappa_hat, F: SubmodularCost, mu: DiscreteMeasure,
               nu: DiscreteMeasure, feas_tol: float = 1e-6, dual_tol: float = 1e-6) -> float:
    """Duality gap ``f(gamma_hat) - min_{gamma in M} <gamma, kappa_hat>``.

    Both terms are exact (greedy for the Lovasz extension, network simplex for
    the transport LP), so the gap bounds the suboptimality of ``gamma_hat``.

    Raises
    ------
    InputError
        If ``gamma_hat`` is not a coupling of ``(mu, nu)`` to ``feas_tol`` or
        ``kappa_hat`` is outside ``B_F`` by more than ``dual_tol``.
    """
    g = _gamma_array(gamma_hat)
    validate_pair(mu, nu, g.shape)
    if F.n != g.size:
        raise InputError(f"F has ground set {F.n}, coupling has {g.size} edges")
    ok, worst = check_coupling(g, mu, nu, tol=feas_tol)
    if not ok:
        raise InputError(f"gamma_hat is not a coupling (violation {worst:.3e})")
    k = np.asarray(getattr(kappa_hat, "kappa", kappa_hat), dtype=float).ravel()
    if k.size != F.n:
        raise InputError(f"kappa_hat has {k.size} entries, expected {F.n}")
    viol = membership_violation(F, k)
    if viol > dual_tol:
        raise InputError(f"kappa_hat is outside the base polytope (violation {viol:.3e})")
    return lovasz(F, np.maximum(g.ravel(), 0.0)) - _lower_bound(k, mu, nu)


class _Certifier:
    """Tracks the best primal and dual candidates seen so far.

    Any coupling gives an upper bound ``f(gamma)`` and any point of ``B_F`` a
    lower bound ``min_gamma <gamma, kappa>``, so combining the best of each is
    still a valid certificate and the reported gap never increases.
    """

    def __init__(self, mu, nu, F):
        self.mu, self.nu, self.F = mu, nu, F
        self.best_f = np.inf
        self.best_lb = -np.inf
        self.gamma = None
        self.kappa = None
        self.calls = 0
        self.elapsed = 0.0

    def primal(self, gamma) -> float:
        t0 = time.perf_counter()
        gamma = round_to_polytope(gamma, self.mu.weights, self.nu.weights)
        fv = lovasz(self.F, np.maximum(gamma.ravel(), 0.0))
        if fv < self.best_f:
            self.best_f, self.gamma = fv, gamma.copy()
        self.elapsed += time.perf_counter() - t0
        return fv

    def dual(self, kappa) -> float:
        t0 = time.perf_counter()
        lb = _lower_bound(kappa, self.mu, self.nu)
        self.calls += 1
        if lb > self.best_lb:
            self.best_lb, self.kappa = lb, kappa.copy()
        self.elapsed += time.perf_counter() - t0
        return lb

    @property
    def gap(self) -> float:
        return self.best_f - self.best_lb


# -- shared machinery -----------------------------------------------------------


def default_eta0(F: SubmodularCost, C) -> float:
    """``1 / (max entry of greedy_vertex(F, C) + 1)``."""
    g = greedy_vertex(F, np.asarray(C, dtype=float).ravel()).kappa
    return 1.0 / (float(np.max(g)) + 1.0)


def _reference_cost(F: SubmodularCost, cost):
    if cost is not None:
        return np.asarray(getattr(cost, "entries", cost), dtype=float).ravel()
    if isinstance(F, Modular):
        return F.c
    return np.ones(F.n)


class _Run:
    """State common to the three iterative solvers."""

    def __init__(self, mu, nu, F, cfg, cost):
        if cfg.algorithm not in ("mda", "spmd", "spmp"):
            raise InputError(f"{cfg.algorithm!r} is not an iterative algorithm")
        validate_pair(mu, nu, (mu.size, nu.size))
        if F.n != mu.size * nu.size:
            raise InputError(f"F has ground set {F.n}, expected {mu.size * nu.size} edges")
        self.mu, self.nu, self.F, self.cfg = mu, nu, F, cfg
        self.shape = (mu.size, nu.size)
        self.C = _reference_cost(F, cost)
        self.eta0 = cfg.eta0 if cfg.eta0 is not None else default_eta0(F, self.C)
        self.rule = cfg.resolved_step_rule
        self.sigma = cfg.dual_scale if cfg.dual_scale is not None else float(F.n)
        self.cert = _Certifier(mu, nu, F)
        self.history = []
        self.t_start = time.perf_counter()
        self.proj_time = 0.0
        self.uncertified_steps = 0
        self.potentials = {}
        self.inner_iterations = 0
        self.log_prod = np.log(mu.weights)[:, None] + np.log(nu.weights)[None, :]

    def eta(self, t: int) -> float:
        return self.eta0 / np.sqrt(t + 1.0) if self.rule == "inv_sqrt_t" else self.eta0

    def kl_step(self, log_gamma, grad, eta, slot=0):
        """``log`` of ``kl_project(gamma * exp(-eta * grad))``.

        The scaling of the previous step in the same ``slot`` warm-starts
        the Sinkhorn iteration.
        """
        step = -eta * grad.reshape(self.shape)
        step -= step.max()
        np.maximum(step, -EXP_CLAMP, out=step)
        t0 = time.perf_counter()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NotCertifiedWarning)
            res = sinkhorn_log(log_gamma + step, self.mu.weights, self.nu.weights,
                               self.cfg.sinkhorn, init=self.potentials.get(slot))
        self.potentials[slot] = (res.log_u, res.log_v)
        self.inner_iterations += res.iterations
        self.proj_time += time.perf_counter() - t0
        if not res.certified:
            self.uncertified_steps += 1
        return res.log_gamma, res.gamma

    def base_step(self, proj, kappa, gamma, eta):
        t0 = time.perf_counter()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NotCertifiedWarning)
            dp = proj(kappa + eta * self.sigma * gamma.ravel())
        self.proj_time += time.perf_counter() - t0
        if not dp.certified:
            self.uncertified_steps += 1
        return dp.kappa

    def log(self, t, gamma_bar, kappa_bar, extra_primal=(), extra_dual=()):
        fv = self.cert.primal(gamma_bar)
        lb = self.cert.dual(kappa_bar)
        for g in extra_primal:
            self.cert.primal(g)
        for k in extra_dual:
            self.cert.dual(k)
        gap = fv - lb
        wall = 1e3 * (time.perf_counter() - self.t_start)
        self.history.append(HistoryRecord(t, fv, gap, wall))
        log.debug("%s it=%d f=%.10g gap=%.3e best=%.3e", self.cfg.algorithm, t, fv, gap, self.cert.gap)
        return fv

    def finish(self, iterations):
        cert = self.cert
        gamma = cert.gamma
        tol = self.cfg.sinkhorn.inner_tol
        ok_feas, worst = check_coupling(gamma, self.mu, self.nu, tol=max(1e-6, 10 * tol))
        gap = cert.gap
        certified = bool(gap <= self.cfg.tol and ok_feas)
        if not certified:
            warnings.warn(f"{self.cfg.algorithm}: gap {gap:.3e} after {iterations} iterations "
                          f"(tol {self.cfg.tol:g})", NotCertifiedWarning, stacklevel=3)
        timings = {"total_ms": 1e3 * (time.perf_counter() - self.t_start),
                   "projection_ms": 1e3 * self.proj_time,
                   "certificate_ms": 1e3 * cert.elapsed,
                   "lp_calls": cert.calls,
                   "sinkhorn_iterations": self.inner_iterations,
                   "uncertified_projections": self.uncertified_steps,
                   "eta0": self.eta0, "dual_scale": self.sigma}
        dual = DualPoint(cert.kappa, "average", certified)
        return SolveResult(Coupling(gamma, marginal_tol=worst, certified=ok_feas), dual,
                           float(cert.best_f), float(gap), tuple(self.history), certified,
                           iterations, self.cfg.algorithm, float(cert.best_lb), timings)

    def gap_reached(self) -> bool:
        return self.cert.gap <= self.cfg.tol


def _check_algorithm(cfg, name):
    if cfg.algorithm != name:
        cfg = replace(cfg, algorithm=name)
    return cfg


# -- the three solvers ----------------------------------------------------------


def solve_mda(mu: DiscreteMeasure, nu: DiscreteMeasure, F: SubmodularCost,
              cfg: SolverConfig = SolverConfig(algorithm="mda"), cost=None) -> SolveResult:
    """Entropic mirror descent on the Lovasz extension.

    Each step takes the greedy subgradient ``g_t`` at the current iterate,
    multiplies ``gamma_t`` by ``exp(-eta_t g_t)`` and KL-projects back onto the
    transport polytope. The output is the ``eta``-weighted average of the
    iterates; the same average of the subgradients lies in ``B_F`` and serves
    as the dual certificate.
    """
    cfg = _check_algorithm(cfg, "mda")
    run = _Run(mu, nu, F, cfg, cost)
    log_g = run.log_prod.copy()
    gamma = np.exp(log_g)
    g_sum = np.zeros(run.shape)
    k_sum = np.zeros(F.n)
    w_sum = 0.0
    stop = cfg.resolved_stop_rule
    prev_f = None
    t = 0
    for t in range(1, cfg.max_iter + 1):
        eta = run.eta(t - 1)
        grad = F.greedy(gamma.ravel())
        g_sum += eta * gamma
        k_sum += eta * grad
        w_sum += eta
        log_g, gamma = run.kl_step(log_g, grad, eta)
        g_bar = g_sum / w_sum
        if stop == "decrease":
            f_bar = lovasz(F, g_bar.ravel())
            done = prev_f is not None and abs(prev_f - f_bar) <= cfg.tol
            prev_f = f_bar
            if t % cfg.gap_every == 0 or done or t == cfg.max_iter:
                run.log(t, g_bar, k_sum / w_sum, extra_primal=(gamma,))
            if done:
                break
        elif t % cfg.gap_every == 0 or t == cfg.max_iter:
            run.log(t, g_bar, k_sum / w_sum, extra_primal=(gamma,))
            if run.gap_reached():
                break
    return run.finish(t)


def solve_spmd(mu: DiscreteMeasure, nu: DiscreteMeasure, F: SubmodularCost,
               cfg: SolverConfig = SolverConfig(algorithm="spmd"), cost=None) -> SolveResult:
    """Saddle-point mirror descent.

    Simultaneous steps ``gamma <- kl_project(gamma * exp(-eta kappa))`` and
    ``kappa <- project_base(kappa + eta gamma)`` from the same point, with
    ``eta``-weighted averaging of the pairs.
    """
    cfg = _check_algorithm(cfg, "spmd")
    run = _Run(mu, nu, F, cfg, cost)
    proj = BaseProjector(F)
    log_g = run.log_prod.copy()
    gamma = np.exp(log_g)
    kappa = proj(run.C).kappa
    g_sum = np.zeros(run.shape)
    k_sum = np.zeros(F.n)
    w_sum = 0.0
    t = 0
    for t in range(1, cfg.max_iter + 1):
        eta = run.eta(t - 1)
        g_sum += eta * gamma
        k_sum += eta * kappa
        w_sum += eta
        new_log_g, new_gamma = run.kl_step(log_g, kappa, eta)
        kappa = run.base_step(proj, kappa, gamma, eta)
        log_g, gamma = new_log_g, new_gamma
        if t % cfg.gap_every == 0 or t == cfg.max_iter:
            run.log(t, g_sum / w_sum, k_sum / w_sum, (gamma,), (kappa,))
            if run.gap_reached():
                break
    return run.finish(t)


def solve_spmp(mu: DiscreteMeasure, nu: DiscreteMeasure, F: SubmodularCost,
               cfg: SolverConfig = SolverConfig(algorithm="spmp"), cost=None) -> SolveResult:
    """Saddle-point mirror prox (extragradient).

    A leader step from ``(gamma_t, kappa_t)`` using the gradients there gives
    ``(u, v)``; the corrector step moves from ``(gamma_t, kappa_t)`` using the
    gradients at ``(u, v)``. The running average is over leader pairs by
    default (``averaging="corrector"`` averages the corrector pairs instead).
    """
    cfg = _check_algorithm(cfg, "spmp")
    run = _Run(mu, nu, F, cfg, cost)
    proj_lead = BaseProjector(F)
    proj_corr = BaseProjector(F)
    log_g = run.log_prod.copy()
    gamma = np.exp(log_g)
    kappa = proj_corr(run.C).kappa
    g_sum = np.zeros(run.shape)
    k_sum = np.zeros(F.n)
    w_sum = 0.0
    leader = cfg.averaging == "leader"
    t = 0
    for t in range(1, cfg.max_iter + 1):
        eta = run.eta(t - 1)
        log_u, u = run.kl_step(log_g, kappa, eta)
        v = run.base_step(proj_lead, kappa, gamma, eta)
        log_g, gamma_new = run.kl_step(log_g, v, eta, slot=1)
        kappa = run.base_step(proj_corr, kappa, u, eta)
        gamma = gamma_new
        if leader:
            g_sum += eta * u
            k_sum += eta * v
        else:
            g_sum += eta * gamma
            k_sum += eta * kappa
        w_sum += eta
        if t % cfg.gap_every == 0 or t == cfg.max_iter:
            run.log(t, g_sum / w_sum, k_sum / w_sum, (u, gamma), (v, kappa))
            if run.gap_reached():
                break
    return run.finish(t)


def _solve_baseline(mu, nu, F, cfg, cost):
    C = _reference_cost(F, cost) if cost is not None or isinstance(F, Modular) else None
    if C is None:
        raise InputError(f"{cfg.algorithm} needs a cost matrix for a non-modular F")
    C = C.reshape(mu.size, nu.size)
    t0 = time.perf_counter()
    if cfg.algorithm == "emd":
        coupling, _ = exact_ot_lp(C, mu, nu)
    else:
        coupling = entropic_ot(C, mu, nu, cfg.entropic_lambda, cfg.sinkhorn)
    gamma = coupling.gamma
    cert = _Certifier(mu, nu, F)
    # the baseline plan is reported as computed, so f is evaluated on it directly
    fv = lovasz(F, np.maximum(gamma.ravel(), 0.0))
    lb = cert.dual(F.greedy(np.maximum(gamma.ravel(), 0.0)))
    gap = fv - lb
    certified = bool(gap <= cfg.tol and coupling.certified)
    ms = 1e3 * (time.perf_counter() - t0)
    return SolveResult(coupling, DualPoint(cert.kappa, "greedy", certified), fv, gap,
                       (HistoryRecord(1, fv, gap, ms),), certified,
                       max(coupling.iterations, 1), cfg.algorithm, lb, {"total_ms": ms})


def solve(mu: DiscreteMeasure, nu: DiscreteMeasure, F: SubmodularCost,
          cfg: SolverConfig = SolverConfig(), cost=None) -> SolveResult:
    """Dispatch on ``cfg.algorithm``.

    ``cost`` is the ground cost matrix: it seeds ``kappa`` and ``eta0`` for
    the saddle-point methods and is required by the ``emd``/``sinkhorn_ot``
    baselines unless ``F`` is modular.
    """
    if cfg.algorithm == "mda":
        return solve_mda(mu, nu, F, cfg, cost)
    if cfg.algorithm == "spmd":
        return solve_spmd(mu, nu, F, cfg, cost)
    if cfg.algorithm == "spmp":
        return solve_spmp(mu, nu, F, cfg, cost)
    return _solve_baseline(mu, nu, F, cfg, cost)


def write_history_csv(history, path) -> None:
    """Write ``iteration,f_value,gap,wall_ms`` rows with round-trip floats."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HistoryRecord._fields)
        for r in history:
            w.writerow([int(r.iteration), repr(float(r.f_value)), repr(float(r.gap)),
                        repr(float(r.wall_ms))])
