import warnings

import numpy as np
import pytest
from scipy.spatial.distance import cdist

from structot.exceptions import InputError
from structot.harness import (MethodSpec, SyntheticSpec, adapt_and_score, barycentric_map,
                              block_mass_fraction, class_crossing_instance, class_groups,
                              cluster_centers, compare_methods, default_methods,
                              distance_hypotheses, generate, knn_groups, method_cost,
                              neighborhoods, ngram_groups, one_nn_predict, shifted_cluster_suite,
                              sot_distance, structured_cost)
from structot.measures import build_cost, product_coupling, uniform_measure
from structot.solvers import SolverConfig, exact_ot_lp
from structot.submodular import ConcaveFn, Modular


class TestGenerate:
    def test_deterministic(self):
        spec = SyntheticSpec(seed=7, shift=(0.5, 0.5))
        a, b = generate(spec), generate(spec)
        np.testing.assert_array_equal(a[0].points, b[0].points)
        np.testing.assert_array_equal(a[1].points, b[1].points)

    def test_sizes(self):
        src, tgt, lab = generate(SyntheticSpec(clusters=3, per_cluster=10, dim=2))
        assert src.size == tgt.size == 30 and lab.size == 30
        np.testing.assert_allclose(src.weights, 1 / 30)

    def test_zero_spread_zero_shift_coincide(self):
        src, tgt, lab = generate(SyntheticSpec(clusters=3, per_cluster=4, spread=0.0))
        a = sorted(map(tuple, np.round(src.points, 12)))
        b = sorted(map(tuple, np.round(tgt.points, 12)))
        assert a == b

    def test_shift_translates(self):
        s0 = generate(SyntheticSpec(seed=3))[1].points
        s1 = generate(SyntheticSpec(seed=3, shift=(2.0, -1.0)))[1].points
        np.testing.assert_allclose(s1 - s0, np.tile([2.0, -1.0], (30, 1)), atol=1e-14)

    def test_centers_separated(self):
        c = cluster_centers(5, 2, 2.0)
        d = cdist(c, c)
        np.testing.assert_allclose(np.sort(d, axis=1)[:, 1], 2.0, atol=1e-12)

    @pytest.mark.parametrize("kw", [{"clusters": 0}, {"per_cluster": 0},
                                    {"shape": "two_moons", "dim": 3},
                                    {"shape": "spiral"}, {"spread": -1.0}])
    def test_invalid(self, kw):
        with pytest.raises(InputError):
            SyntheticSpec(**kw)

    def test_swap_nearest(self):
        spec = SyntheticSpec(seed=0, clusters=3, spread=0.05, shift=(0.1, 0.0), swap_nearest=True)
        src, tgt, lab = generate(spec)
        # some target cluster sits at a different source cluster's center
        moved = [np.linalg.norm(tgt.points[lab == k].mean(0) - src.points[src.labels == k].mean(0))
                 for k in range(3)]
        assert max(moved) > 1.0


class TestClassGroups:
    def test_unlabeled_targets(self):
        gs = class_groups([0, 0, 1, 1, 1], n_targets=3)
        assert len(gs.groups) == 6 and gs.index.size == 15

    def test_single_class_one_group(self):
        gs = class_groups([4, 4, 4], [4, 4])
        assert len(gs.groups) == 1 and gs.groups[0].size == 6

    @pytest.mark.parametrize("seed", range(5))
    def test_partition(self, seed):
        r = np.random.default_rng(seed)
        gs = class_groups(r.integers(0, 3, 7), r.integers(0, 4, 5))
        counts = np.zeros(35, dtype=int)
        for g in gs.groups:
            for e in g:
                counts[e] += 1
        assert np.all(counts == 1)

    def test_missing_labels(self):
        with pytest.raises(InputError):
            class_groups(None, n_targets=3)
        with pytest.raises(InputError):
            class_groups([0, 1])


class TestNgramGroups:
    def test_unigram_is_singletons(self):
        gs = ngram_groups(3, 4, 1)
        assert len(gs.groups) == 12 and all(g.size == 1 for g in gs.groups)

    def test_bigrams(self):
        gs = ngram_groups(3, 3, 2)
        assert len(gs.groups) == 4 and all(g.size == 4 for g in gs.groups)
        assert gs.cover_type == "cover"

    def test_overlap_census(self):
        src_len, tgt_len, n = 5, 4, 3
        gs = ngram_groups(src_len, tgt_len, n)
        census = np.zeros((src_len, tgt_len), dtype=int)
        for s in range(src_len - n + 1):
            for t in range(tgt_len - n + 1):
                census[s:s + n, t:t + n] += 1
        np.testing.assert_array_equal(gs.coverage_counts().reshape(src_len, tgt_len), census)

    def test_too_long(self):
        with pytest.raises(InputError):
            ngram_groups(2, 5, 3)

    def test_unigram_structure_is_modular(self, rng):
        C = rng.uniform(0.1, 1.0, (3, 3))
        F = structured_cost(ngram_groups(3, 3, 1), C, ConcaveFn.identity())
        w = rng.uniform(size=9)
        np.testing.assert_allclose(F.greedy(w), C.ravel(), atol=1e-14)


class TestKnnGroups:
    def test_zero_neighbors_singletons(self, rng):
        gs = knn_groups(rng.normal(size=(4, 2)), rng.normal(size=(3, 2)), 0)
        assert len(gs.groups) == 12 and all(g.size == 1 for g in gs.groups)

    def test_cover_complete(self, rng):
        gs = knn_groups(rng.normal(size=(6, 2)), rng.normal(size=(5, 2)), 2)
        assert np.all(gs.coverage_counts(completed=False) >= 1)

    def test_two_moons_do_not_mix(self):
        spec = SyntheticSpec(seed=0, clusters=2, per_cluster=30, shape="two_moons", spread=0.03)
        src, _, _ = generate(spec)
        nb = neighborhoods(src, 3)
        radius = max(np.linalg.norm(src.points[g] - src.points[g[0]], axis=1).max() for g in nb)
        lab = src.labels
        gap = cdist(src.points[lab == 0], src.points[lab == 1]).min()
        assert gap > radius
        for g in nb:
            assert np.unique(lab[g]).size == 1


class TestBarycentric:
    def test_diagonal(self, rng):
        Y = rng.normal(size=(4, 2))
        np.testing.assert_allclose(barycentric_map(np.eye(4) / 4, Y), Y, atol=1e-15)

    def test_product(self, rng):
        mu = uniform_measure(rng.normal(size=(3, 2)))
        nu = uniform_measure(rng.normal(size=(5, 2)))
        out = barycentric_map(product_coupling(mu, nu), nu)
        np.testing.assert_allclose(out, np.tile(nu.weights @ nu.points, (3, 1)), atol=1e-14)

    def test_naive_loop(self, rng):
        G = rng.uniform(size=(4, 3))
        Y = rng.normal(size=(3, 2))
        ref = np.array([[sum(G[i, j] * Y[j, k] for j in range(3)) / sum(G[i]) for k in range(2)]
                        for i in range(4)])
        np.testing.assert_allclose(barycentric_map(G, Y), ref, atol=1e-14)

    def test_zero_row_named(self):
        with pytest.raises(InputError, match="row 1"):
            barycentric_map(np.array([[1.0, 0.0], [0.0, 0.0]]), np.eye(2))


class TestOneNN:
    def test_tie_lowest_label(self):
        pred = one_nn_predict([[-1.0], [1.0]], [5, 2], [[0.0]])
        assert pred[0] == 2

    def test_basic(self):
        pred = one_nn_predict([[0.0], [10.0]], [0, 1], [[1.0], [9.0]])
        np.testing.assert_array_equal(pred, [0, 1])


class TestDistance:
    def _symmetric(self, r, n=6):
        mu = uniform_measure(r.normal(size=(n, 2)), labels=r.integers(0, 2, n))
        return mu

    def test_identity(self, rng):
        mu = self._symmetric(rng)
        C = build_cost(mu, mu, "euclidean").entries
        F = structured_cost(class_groups(mu.labels, mu.labels), C, ConcaveFn.threshold_sqrt(0.5))
        cfg = SolverConfig(tol=1e-4, max_iter=20000)
        d = sot_distance(mu, mu, F, cfg, cost=C, metric_tag="euclidean")
        assert d.hypotheses_ok and d.certified
        assert 0.0 <= d.value <= cfg.tol

    def test_modular_is_w1(self, rng):
        mu = uniform_measure(rng.normal(size=(5, 2)))
        nu = uniform_measure(rng.normal(size=(5, 2)))
        C = build_cost(mu, nu, "euclidean").entries
        cfg = SolverConfig(tol=1e-6, eta0=10.0, max_iter=20000)
        d = sot_distance(mu, nu, Modular(C.ravel()), cfg, cost=C, metric_tag="euclidean")
        assert d.value == pytest.approx(exact_ot_lp(C, mu, nu)[1], rel=1e-3)

    def test_symmetry(self, rng):
        mu = self._symmetric(rng)
        nu = uniform_measure(rng.normal(size=(6, 2)), labels=rng.integers(0, 2, 6))
        cfg = SolverConfig(tol=1e-4, max_iter=20000)
        g = ConcaveFn.threshold_sqrt(0.5)
        C = build_cost(mu, nu, "euclidean").entries
        gs = class_groups(mu.labels, nu.labels)
        d1 = sot_distance(mu, nu, structured_cost(gs, C, g), cfg, cost=C)
        d2 = sot_distance(nu, mu, structured_cost(gs.transposed(), C.T, g), cfg, cost=C.T)
        assert abs(d1.value - d2.value) <= 2 * cfg.tol

    def test_hypothesis_failure_flagged(self, rng):
        mu = uniform_measure(rng.normal(size=(3, 2)))
        c = np.ones(9)
        c[0] = -0.1
        with pytest.warns(UserWarning):
            d = sot_distance(mu, mu, Modular(c), SolverConfig(tol=1e-3, max_iter=50))
        assert not d.hypotheses_ok and any("monotone" in s for s in d.issues)

    def test_hypotheses_clean(self, rng):
        C = rng.uniform(0.1, 1.0, (3, 3))
        assert distance_hypotheses(Modular(C.ravel()), C, "euclidean") == []
        assert distance_hypotheses(Modular(C.ravel()), C, "squared_euclidean")


class TestAdaptation:
    def test_zero_shift_zero_spread(self):
        src, tgt, _ = generate(SyntheticSpec(clusters=3, per_cluster=4, spread=0.0))
        C = build_cost(src, tgt, "euclidean").entries
        acc = adapt_and_score(src, tgt, tgt, Modular(C.ravel()), SolverConfig(algorithm="emd"),
                              cost=C)
        assert acc == 1.0

    def test_label_checks(self, rng):
        mu = uniform_measure(rng.normal(size=(3, 2)))
        with pytest.raises(InputError):
            adapt_and_score(mu, mu, mu, Modular(np.ones(9)), SolverConfig(algorithm="emd"))

    def test_class_crossing_instance(self):
        src, tgt = class_crossing_instance()
        C = build_cost(src, tgt, "euclidean").entries
        gamma = exact_ot_lp(C, src, tgt)[0].gamma
        assert 1 - block_mass_fraction(gamma, src.labels, tgt.labels) == pytest.approx(1 / 3)
        emd = adapt_and_score(src, tgt, tgt, Modular(C.ravel()), SolverConfig(algorithm="emd"),
                              cost=C)
        F = structured_cost(class_groups(src.labels, n_targets=tgt.size), C,
                            ConcaveFn.threshold_sqrt(0.1))
        sot = adapt_and_score(src, tgt, tgt, F, SolverConfig(tol=1e-5, max_iter=20000), cost=C)
        assert sot > emd

    def test_compare_methods_keys(self):
        src, tgt, _ = generate(SyntheticSpec(clusters=2, per_cluster=4, shift=(0.5, 0.0)))
        out = compare_methods(src, tgt, default_methods(tol=1e-2, max_iter=500))
        assert set(out) == {"emd", "entropic", "structured"}
        assert all(0.0 <= v <= 1.0 for v in out.values())

    def test_method_cost(self, rng):
        src, tgt, _ = generate(SyntheticSpec(clusters=2, per_cluster=3))
        C = build_cost(src, tgt, "euclidean").entries
        assert isinstance(method_cost(MethodSpec("m", SolverConfig()), src, tgt, C), Modular)
        with pytest.raises(InputError):
            method_cost(MethodSpec("m", SolverConfig(), "graph"), src, tgt, C)

    def test_suite(self):
        suite = shifted_cluster_suite(4)
        assert [s.seed for s in suite] == [0, 1, 2, 3]


class TestBlockMass:
    def test_fraction(self):
        G = np.array([[0.25, 0.25], [0.0, 0.5]])
        assert block_mass_fraction(G, [0, 1], [0, 1]) == pytest.approx(0.75)

    def test_alpha_monotone_objective(self, rng):
        src, tgt, _ = generate(SyntheticSpec(seed=1, clusters=2, per_cluster=5, shift=(1.0, 0.0)))
        C = build_cost(src, tgt, "euclidean").entries
        gs = class_groups(src.labels, tgt.labels)
        vals = []
        for alpha in (0.1, 1.0, float(C.sum())):
            F = structured_cost(gs, C, ConcaveFn.threshold_sqrt(alpha))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                vals.append(sot_distance(src, tgt, F, SolverConfig(tol=1e-6, max_iter=20000),
                                         cost=C).value)
        assert vals[0] <= vals[1] + 1e-5 <= vals[2] + 2e-5
        assert vals[2] == pytest.approx(exact_ot_lp(C, src, tgt)[1], rel=1e-3)
