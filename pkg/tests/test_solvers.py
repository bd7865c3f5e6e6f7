import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import linprog

from structot.exceptions import InputError, NotCertifiedWarning
from structot.harness import SyntheticSpec, class_groups, generate, structured_cost
from structot.measures import (DiscreteMeasure, build_cost, check_coupling, product_coupling,
                               uniform_measure)
from structot.solvers import (SolverConfig, default_eta0, entropic_ot, exact_ot_lp, saddle_gap,
                              solve, solve_mda, solve_spmd, solve_spmp, write_history_csv)
from structot.submodular import ConcaveFn, Modular, greedy_vertex, lovasz


def _measure(r, n):
    a = r.uniform(0.2, 1.0, n)
    return DiscreteMeasure(np.arange(n, dtype=float)[:, None], a / a.sum())


def _lp_reference(C, a, b):
    """Transport LP on the explicit constraint matrix (HiGHS dual simplex)."""
    n, m = C.shape
    A = np.vstack([np.kron(np.eye(n), np.ones(m)), np.kron(np.ones(n), np.eye(m))])
    res = linprog(C.ravel(), A_eq=A, b_eq=np.r_[a, b], bounds=(0, None), method="highs-ds")
    return res.fun


def _clustered(seed=0, clusters=2, per_cluster=10, alpha=0.1):
    src, tgt, _ = generate(SyntheticSpec(seed=seed, clusters=clusters, per_cluster=per_cluster,
                                         shift=(1.0, 0.0)))
    C = build_cost(src, tgt, "euclidean").entries
    F = structured_cost(class_groups(src.labels, tgt.labels), C, ConcaveFn.threshold_sqrt(alpha))
    return src, tgt, C, F


class TestExactLP:
    def test_zero_cost_matching(self):
        mu = uniform_measure([[0.0], [1.0]])
        coupling, val = exact_ot_lp(np.array([[0.0, 1.0], [1.0, 0.0]]), mu, mu)
        assert val == 0.0
        np.testing.assert_allclose(coupling.gamma, np.diag([0.5, 0.5]), atol=1e-15)

    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_permutation_oracle(self, rng, n):
        C = rng.uniform(size=(n, n))
        mu = uniform_measure(np.arange(n, dtype=float)[:, None])
        best = min(sum(C[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n))) / n
        assert exact_ot_lp(C, mu, mu)[1] == pytest.approx(best, abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_generic_lp_oracle(self, seed):
        r = np.random.default_rng(seed)
        mu, nu = _measure(r, 5), _measure(r, 7)
        C = r.uniform(size=(5, 7))
        coupling, val = exact_ot_lp(C, mu, nu)
        assert val == pytest.approx(_lp_reference(C, mu.weights, nu.weights), abs=1e-9)
        assert check_coupling(coupling, mu, nu, tol=1e-12)[0]

    def test_vertex_solution_sparse(self, rng):
        mu, nu = _measure(rng, 6), _measure(rng, 8)
        coupling, _ = exact_ot_lp(rng.uniform(size=(6, 8)), mu, nu)
        assert np.count_nonzero(coupling.gamma > 1e-14) <= 6 + 8 - 1


class TestEntropicOT:
    def test_approaches_lp(self, rng):
        mu, nu = _measure(rng, 6), _measure(rng, 6)
        C = rng.uniform(size=(6, 6))
        exact = exact_ot_lp(C, mu, nu)[1]
        vals = [float(np.sum(entropic_ot(C, mu, nu, lam).gamma * C)) for lam in (1, 10, 100)]
        assert vals[0] >= vals[1] >= vals[2] >= exact - 1e-9
        assert vals[2] - exact < 0.05 * exact

    def test_zero_cost_is_product(self, rng):
        mu, nu = _measure(rng, 4), _measure(rng, 3)
        g = entropic_ot(np.zeros((4, 3)), mu, nu, 5.0).gamma
        np.testing.assert_allclose(g, product_coupling(mu, nu).gamma, atol=1e-14)

    def test_one_by_one(self):
        mu = DiscreteMeasure([[0.0]])
        np.testing.assert_allclose(entropic_ot(np.array([[3.0]]), mu, mu, 1.0).gamma, [[1.0]])

    def test_large_lambda_log_domain(self, rng):
        mu, nu = _measure(rng, 8), _measure(rng, 8)
        C = rng.uniform(size=(8, 8))
        c = entropic_ot(C, mu, nu, 2000.0)
        assert check_coupling(c, mu, nu, tol=1e-8)[0]

    def test_bad_lambda(self, rng):
        mu = _measure(rng, 2)
        with pytest.raises(InputError):
            entropic_ot(np.ones((2, 2)), mu, mu, 0.0)


class TestSaddleGap:
    def test_modular_optimal_pair(self, rng):
        mu, nu = _measure(rng, 5), _measure(rng, 6)
        C = rng.uniform(size=(5, 6))
        coupling, _ = exact_ot_lp(C, mu, nu)
        F = Modular(C.ravel())
        assert abs(saddle_gap(coupling.gamma, C.ravel(), F, mu, nu)) <= 1e-8

    def test_product_coupling_positive(self, rng):
        src, tgt, C, F = _clustered()
        gamma = product_coupling(src, tgt).gamma
        kappa = greedy_vertex(F, C.ravel()).kappa
        gap = saddle_gap(gamma, kappa, F, src, tgt)
        lb = exact_ot_lp(kappa.reshape(C.shape), src, tgt)[1]
        assert gap == pytest.approx(lovasz(F, gamma.ravel()) - lb, abs=1e-12)
        assert gap > 0

    @given(st.integers(0, 2**31 - 1))
    def test_weak_duality(self, seed):
        r = np.random.default_rng(seed)
        mu, nu = _measure(r, 4), _measure(r, 4)
        C = r.uniform(0.1, 1.0, (4, 4))
        F = structured_cost(class_groups([0, 0, 1, 1], [0, 1, 0, 1]), C,
                            ConcaveFn.threshold_sqrt(r.uniform(0.1, 2.0)))
        kappa = F.greedy(r.normal(size=16))
        gamma = exact_ot_lp(r.uniform(size=(4, 4)), mu, nu)[0].gamma
        assert saddle_gap(gamma, kappa, F, mu, nu) >= -1e-8

    def test_infeasible_coupling(self, rng):
        mu = _measure(rng, 3)
        F = Modular(np.ones(9))
        with pytest.raises(InputError):
            saddle_gap(np.ones((3, 3)), np.ones(9), F, mu, mu)

    def test_dual_outside_polytope(self, rng):
        mu = _measure(rng, 3)
        F = Modular(np.ones(9))
        with pytest.raises(InputError):
            saddle_gap(product_coupling(mu, mu).gamma, np.zeros(9), F, mu, mu)


class TestConfig:
    def test_defaults(self):
        cfg = SolverConfig()
        assert cfg.tol == 1e-4 and cfg.max_iter == 5000 and cfg.gap_every == 25
        assert cfg.resolved_step_rule == "constant"
        assert SolverConfig(algorithm="mda").resolved_step_rule == "inv_sqrt_t"
        assert SolverConfig(algorithm="mda").resolved_stop_rule == "decrease"
        assert SolverConfig(algorithm="spmd").resolved_stop_rule == "gap"

    @pytest.mark.parametrize("kw", [{"eta0": 0.0}, {"tol": -1.0}, {"gap_every": 0},
                                    {"algorithm": "newton"}, {"max_iter": 0}])
    def test_invalid(self, kw):
        with pytest.raises(InputError):
            SolverConfig(**kw)

    def test_dict_round_trip(self):
        cfg = SolverConfig(algorithm="spmd", eta0=0.5, tol=1e-5, averaging="corrector")
        assert SolverConfig.from_dict(cfg.to_dict()) == cfg

    def test_default_eta0(self, rng):
        C = rng.uniform(size=(3, 3))
        assert default_eta0(Modular(C.ravel()), C) == pytest.approx(1 / (C.max() + 1))


ALGOS = ["mda", "spmd", "spmp"]
SOLVERS = {"mda": solve_mda, "spmd": solve_spmd, "spmp": solve_spmp}


class TestModularCollapse:
    @pytest.mark.parametrize("alg", ALGOS)
    def test_matches_exact_lp(self, alg):
        r = np.random.default_rng(3)
        mu, nu = _measure(r, 10), _measure(r, 8)
        C = r.uniform(size=(10, 8))
        cfg = SolverConfig(algorithm=alg, eta0=10.0, tol=1e-4, stop_rule="gap", max_iter=5000)
        res = SOLVERS[alg](mu, nu, Modular(C.ravel()), cfg, cost=C)
        exact = _lp_reference(C, mu.weights, nu.weights)
        assert res.primal_value == pytest.approx(exact, rel=1e-3)

    @pytest.mark.parametrize("alg", ALGOS)
    def test_singleton(self, alg):
        mu = DiscreteMeasure([[0.0]])
        F = Modular([2.5])
        res = solve(mu, mu, F, SolverConfig(algorithm=alg))
        np.testing.assert_allclose(res.coupling.gamma, [[1.0]])
        assert res.primal_value == pytest.approx(2.5)


class TestClusteredCertification:
    @pytest.mark.parametrize("alg,kw", [("mda", {"eta0": 3.0, "stop_rule": "gap"}),
                                        ("spmd", {"eta0": 0.3, "step_rule": "constant"}),
                                        ("spmp", {})])
    def test_certified(self, alg, kw):
        src, tgt, C, F = _clustered()
        cfg = SolverConfig(algorithm=alg, tol=1e-3, max_iter=10000, **kw)
        res = solve(src, tgt, F, cfg, cost=C)
        assert res.certified and res.gap <= 1e-3
        # the certificate is recomputed from the returned pair
        assert saddle_gap(res.coupling, res.dual, F, src, tgt) == pytest.approx(res.gap, abs=1e-9)

    def test_spmp_fewer_iterations_than_spmd(self):
        src, tgt, C, F = _clustered()
        runs = {}
        for alg in ("spmp", "spmd"):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", NotCertifiedWarning)
                runs[alg] = solve(src, tgt, F, SolverConfig(algorithm=alg, tol=1e-3,
                                                            max_iter=3000), cost=C)
        assert runs["spmp"].certified
        assert runs["spmp"].iterations <= runs["spmd"].iterations

    def test_large_alpha_matches_emd(self):
        src, tgt, C, _ = _clustered(per_cluster=6)
        _, _, _, F = _clustered(per_cluster=6, alpha=float(C.sum()))
        res = solve(src, tgt, F, SolverConfig(tol=1e-4, max_iter=20000), cost=C)
        assert res.certified
        assert res.primal_value == pytest.approx(exact_ot_lp(C, src, tgt)[1], rel=1e-3)

    def test_corrector_averaging(self):
        src, tgt, C, F = _clustered(per_cluster=5)
        res = solve(src, tgt, F, SolverConfig(tol=1e-3, averaging="corrector", max_iter=10000),
                    cost=C)
        assert res.certified


@pytest.fixture(scope="module")
def runs():
    src, tgt, C, F = _clustered(per_cluster=6)
    out = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NotCertifiedWarning)
        for alg in ALGOS:
            out[alg] = solve(src, tgt, F, SolverConfig(algorithm=alg, tol=1e-3,
                                                       max_iter=600, gap_every=20), cost=C)
    return src, tgt, C, F, out


class TestInvariants:

    @pytest.mark.parametrize("alg", ALGOS)
    def test_weak_duality_logged(self, runs, alg):
        *_, out = runs
        res = out[alg]
        assert all(h.gap >= -1e-8 for h in res.history)
        assert res.gap >= -1e-8
        assert res.primal_value >= res.lower_bound - 1e-8

    @pytest.mark.parametrize("alg", ALGOS)
    def test_returned_dual_bounds_primal(self, runs, alg):
        src, tgt, C, F, out = runs
        res = out[alg]
        lb = exact_ot_lp(res.dual.kappa.reshape(C.shape), src, tgt)[1]
        assert res.primal_value >= lb - 1e-8

    @pytest.mark.parametrize("alg", ALGOS)
    def test_certificate_no_worse_than_logged(self, runs, alg):
        *_, out = runs
        res = out[alg]
        assert res.gap <= min(h.gap for h in res.history) + 1e-12

    @pytest.mark.parametrize("alg", ALGOS)
    def test_coupling_feasible(self, runs, alg):
        src, tgt, C, F, out = runs
        assert check_coupling(out[alg].coupling, src, tgt, tol=1e-6)[0]

    @pytest.mark.parametrize("alg", ALGOS)
    def test_deterministic(self, runs, alg):
        src, tgt, C, F, out = runs
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NotCertifiedWarning)
            again = solve(src, tgt, F, SolverConfig(algorithm=alg, tol=1e-3, max_iter=600,
                                                    gap_every=20), cost=C)
        strip = lambda res: [(h.iteration, h.f_value, h.gap) for h in res.history]
        assert strip(again) == strip(out[alg])
        np.testing.assert_array_equal(again.coupling.gamma, out[alg].coupling.gamma)

    def test_max_iter_one_not_certified(self):
        src, tgt, C, F = _clustered(per_cluster=4)
        with pytest.warns(NotCertifiedWarning):
            res = solve(src, tgt, F, SolverConfig(max_iter=1), cost=C)
        assert not res.certified and res.iterations == 1


class TestBaselines:
    def test_emd_baseline(self, rng):
        mu, nu = _measure(rng, 5), _measure(rng, 4)
        C = rng.uniform(size=(5, 4))
        res = solve(mu, nu, Modular(C.ravel()), SolverConfig(algorithm="emd"))
        assert res.certified
        assert res.primal_value == pytest.approx(_lp_reference(C, mu.weights, nu.weights),
                                                 abs=1e-9)

    def test_structured_needs_cost(self):
        src, tgt, C, F = _clustered(per_cluster=3)
        with pytest.raises(InputError):
            solve(src, tgt, F, SolverConfig(algorithm="emd"))

    def test_sinkhorn_baseline_value(self, rng):
        mu, nu = _measure(rng, 5), _measure(rng, 5)
        C = rng.uniform(size=(5, 5))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NotCertifiedWarning)
            res = solve(mu, nu, Modular(C.ravel()),
                        SolverConfig(algorithm="sinkhorn_ot", entropic_lambda=5.0))
        ref = entropic_ot(C, mu, nu, 5.0).gamma
        assert res.primal_value == pytest.approx(float(np.sum(ref * C)), rel=1e-10)


class TestOutput:
    def test_history_csv(self, tmp_path):
        src, tgt, C, F = _clustered(per_cluster=3)
        res = solve(src, tgt, F, SolverConfig(tol=1e-3, max_iter=2000), cost=C)
        path = tmp_path / "h.csv"
        write_history_csv(res.history, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "iteration,f_value,gap,wall_ms"
        assert len(lines) == len(res.history) + 1
        last = lines[-1].split(",")
        assert float(last[2]) == res.history[-1].gap

    def test_result_dict(self):
        src, tgt, C, F = _clustered(per_cluster=3)
        d = solve(src, tgt, F, SolverConfig(tol=1e-3), cost=C).to_dict()
        for key in ("value", "gap", "certified", "iterations", "algorithm"):
            assert key in d
