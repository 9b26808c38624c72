import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from conftest import brute_marginals, make_structure, random_network
from markovnet import _kernels
from markovnet.errors import InvalidEvidenceError, StateSpaceTooLargeError
from markovnet.inference import (
    GibbsConfig,
    MeanFieldConfig,
    label_conditional,
    label_scores,
    marginals_exact,
    marginals_gibbs,
    marginals_meanfield,
    mean_field_elbo,
    predict_label,
    predicted_label,
)
from markovnet.model import MarkovNetwork

LN3 = math.log(3.0)


def attractive_pair(strength=LN3):
    s = make_structure([2, 2], [(0, 1)])
    return MarkovNetwork.from_tables(s, pairwise={(0, 1): [[strength, 0.0], [0.0, strength]]})


def star_network(seed, n_features=5, max_card=4):
    rng = np.random.default_rng(seed)
    cards = [2] + [int(rng.integers(2, max_card + 1)) for _ in range(n_features)]
    s = make_structure(cards, [(0, j) for j in range(1, n_features + 1)])
    return MarkovNetwork(s, rng.normal(size=s.n_params))


class TestExactMarginals:
    def test_uniform_potentials(self):
        net = MarkovNetwork(make_structure([2, 3, 4], [(0, 1), (1, 2)]))
        table = marginals_exact(net)
        for v, c in enumerate([2, 3, 4]):
            assert_allclose(table[v], np.full(c, 1.0 / c), atol=1e-15)

    def test_conditional_on_attractive_edge(self):
        table = marginals_exact(attractive_pair(), {0: 0})
        assert_allclose(table[1], [0.75, 0.25], atol=1e-12)
        assert_array_equal(table[0], [1.0, 0.0])

    def test_disconnected_evidence_leaves_marginal(self):
        s = make_structure([2, 2], [])
        net = MarkovNetwork.from_tables(s, unary=[[0.3, -0.2], [1.0, 0.0]])
        assert_allclose(marginals_exact(net, {0: 1})[1], marginals_exact(net)[1], atol=1e-15)

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_brute_force(self, seed):
        net = random_network(seed, max_card=3)
        ev = {1: 0} if seed % 2 else {}
        table = marginals_exact(net, ev)
        for got, want in zip(table.marginals, brute_marginals(net, ev)):
            assert_allclose(got, want, atol=1e-12)

    @pytest.mark.parametrize("evidence", [{0: 2}, {0: -1}, {7: 0}, {"a": 0}])
    def test_invalid_evidence(self, evidence):
        with pytest.raises(InvalidEvidenceError):
            marginals_exact(attractive_pair(), evidence)

    def test_limit(self):
        net = MarkovNetwork(make_structure([2] * 6, []))
        with pytest.raises(StateSpaceTooLargeError):
            marginals_exact(net, limit=16)
        # evidence shrinks the free space under the limit
        marginals_exact(net, {0: 0, 1: 1}, limit=16)


class TestGibbs:
    def test_single_uniform_variable(self):
        net = MarkovNetwork(make_structure([2], []))
        for seed in range(3):
            table, _ = marginals_gibbs(net, cfg=GibbsConfig(seed=seed, samples=5000))
            assert_allclose(table[0], [0.5, 0.5], atol=0.03)

    def test_deterministic_per_seed(self):
        net = random_network(4, n_vars=8, max_card=3)
        cfg = GibbsConfig(seed=9, burn_in=50, samples=3000)
        a, da = marginals_gibbs(net, cfg=cfg)
        b, db = marginals_gibbs(net, cfg=cfg)
        for x, y in zip(a.marginals, b.marginals):
            assert_array_equal(x, y)
        assert da.split_half_gap == db.split_half_gap
        c, _ = marginals_gibbs(net, cfg=GibbsConfig(seed=10, burn_in=50, samples=3000))
        assert a.max_abs_diff(c) > 0

    @pytest.mark.skipif("cython" not in _kernels.AVAILABLE, reason="compiled extension not built")
    @pytest.mark.parametrize("seed", range(5))
    def test_backends_identical(self, seed):
        net = random_network(seed, n_vars=7, max_card=4, scale=2.0)
        # spans several uniform chunks and a thinned, mid-chunk half boundary
        cfg = GibbsConfig(seed=seed, burn_in=37, samples=3001, thin=3)
        ev = {2: 1} if seed % 2 else {}
        a, _ = marginals_gibbs(net, ev, cfg, backend="cython")
        b, _ = marginals_gibbs(net, ev, cfg, backend="python")
        for x, y in zip(a.marginals, b.marginals):
            assert_array_equal(x, y)

    def test_unknown_backend(self):
        with pytest.raises(ValueError):
            marginals_gibbs(attractive_pair(), backend="fortran")

    def test_observed_point_mass_and_normalised(self):
        net = random_network(2, n_vars=5, max_card=3)
        table, diag = marginals_gibbs(net, {1: 1}, GibbsConfig(seed=1, burn_in=10, samples=500))
        assert table[1][1] == 1.0 and table[1].sum() == 1.0
        for m in table.marginals:
            assert m.sum() == pytest.approx(1.0, abs=1e-12)
        assert diag.method == "gibbs"
        assert diag.iterations == GibbsConfig(seed=1, burn_in=10, samples=500).total_sweeps

    def test_all_observed_rejected(self):
        with pytest.raises(InvalidEvidenceError):
            marginals_gibbs(attractive_pair(), {0: 0, 1: 1})

    @pytest.mark.parametrize("kwargs", [{"samples": 0}, {"thin": 0}, {"burn_in": -1}])
    def test_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            GibbsConfig(**kwargs)

    def test_close_to_exact(self):
        for seed in range(5):
            net = random_network(100 + seed, n_vars=10, scale=0.7)
            table, diag = marginals_gibbs(net, cfg=GibbsConfig(seed=seed, burn_in=1000, samples=20000))
            assert table.max_abs_diff(marginals_exact(net)) <= 0.02
            assert diag.converged

    def test_more_samples_do_not_hurt(self):
        for seed in range(20):
            net = random_network(200 + seed, n_vars=10, scale=0.7)
            exact = marginals_exact(net)
            err10, _ = marginals_gibbs(net, cfg=GibbsConfig(seed=seed, samples=10000))
            err20, _ = marginals_gibbs(net, cfg=GibbsConfig(seed=seed, samples=20000))
            assert err20.max_abs_diff(exact) <= err10.max_abs_diff(exact) + 0.01


class TestMeanField:
    def test_edgeless_is_exact(self):
        s = make_structure([2, 3, 4], [])
        net = MarkovNetwork(s, np.random.default_rng(0).normal(size=s.n_params))
        table, diag = marginals_meanfield(net)
        assert diag.converged
        assert table.max_abs_diff(marginals_exact(net)) <= 1e-9

    def test_uniform_converges_immediately(self):
        net = MarkovNetwork(make_structure([2, 3], [(0, 1)]))
        table, diag = marginals_meanfield(net)
        assert diag.converged and diag.iterations == 1
        assert_allclose(table[1], np.full(3, 1 / 3), atol=1e-15)

    def test_attractive_pair(self):
        net = MarkovNetwork.from_tables(make_structure([2, 2], [(0, 1)]), unary=[[0.2, 0.0], [0.0, 0.0]],
                                        pairwise={(0, 1): [[1.5, 0.0], [0.0, 1.5]]})
        table, diag = marginals_meanfield(net)
        trace = np.array(diag.elbo_trace)
        assert np.all(np.diff(trace) >= -1e-8)
        assert table.max_abs_diff(marginals_exact(net)) <= 0.15

    def test_elbo_is_lower_bound(self):
        from markovnet.model import log_partition_function_exact

        net = random_network(3, n_vars=6, max_card=3)
        _, diag = marginals_meanfield(net)
        assert max(diag.elbo_trace) <= log_partition_function_exact(net) + 1e-12

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31), damping=st.sampled_from([0.0, 0.3, 0.9]))
    def test_elbo_non_decreasing(self, seed, damping):
        net = random_network(seed, max_card=3, scale=2.0)
        ev = {0: 1} if seed % 3 == 0 else {}
        _, diag = marginals_meanfield(net, ev, MeanFieldConfig(damping=damping, max_iters=200))
        assert np.all(np.diff(diag.elbo_trace) >= -1e-8)

    def test_converged_flag_tracks_tolerance(self):
        net = random_network(5, n_vars=6, scale=2.0)
        _, short = marginals_meanfield(net, cfg=MeanFieldConfig(max_iters=1, tol=1e-12))
        assert not short.converged

    def test_elbo_of_point_masses_is_log_score(self):
        net = random_network(8, n_vars=4)
        q = [np.eye(int(c))[0] for c in net.structure.cardinalities]
        from markovnet.model import log_score

        assert mean_field_elbo(net, q) == pytest.approx(log_score(net, [0] * 4), abs=1e-12)

    @pytest.mark.parametrize("kwargs", [{"tol": 0}, {"max_iters": 0}, {"damping": 1.0}])
    def test_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            MeanFieldConfig(**kwargs)


class TestLabelPrediction:
    def test_zero_parameters_uniform(self):
        net = MarkovNetwork(make_structure([2, 3, 3], [(0, 1), (0, 2)]))
        for method in ("exact", "gibbs", "meanfield"):
            dist = predict_label(net, {1: 2}, method, GibbsConfig(seed=0, burn_in=10, samples=20000))
            assert_allclose(dist, [0.5, 0.5], atol=0.02 if method == "gibbs" else 1e-15)

    @pytest.mark.parametrize("seed", range(10))
    def test_closed_form_on_star(self, seed):
        net = star_network(seed)
        s = net.structure
        rng = np.random.default_rng(seed + 50)
        x = np.column_stack([rng.integers(0, s.cardinalities[v], size=20) for v in s.feature_ids])
        closed = label_conditional(net, x)
        for row, dist in zip(x, closed):
            ev = dict(zip(s.feature_ids, map(int, row)))
            assert_allclose(dist, marginals_exact(net, ev)[0], atol=1e-12)
            logits = net.unary(0) + sum(net.pairwise(0, v)[:, row[j]] for j, v in enumerate(s.feature_ids))
            assert_allclose(dist, np.exp(logits) / np.exp(logits).sum(), atol=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_missing_features_match_enumeration(self, seed):
        net = random_network(seed + 30, n_vars=7, max_card=3)
        s = net.structure
        rng = np.random.default_rng(seed)
        ev = {v: int(rng.integers(0, s.cardinalities[v])) for v in s.feature_ids if rng.random() < 0.5}
        dist = predict_label(net, ev, "exact")
        assert_allclose(dist, brute_marginals(net, ev)[0], atol=1e-9)

    def test_label_in_evidence_rejected(self):
        with pytest.raises(InvalidEvidenceError):
            predict_label(attractive_pair(), {0: 1})

    def test_ties_go_to_lower_label(self):
        assert predicted_label([0.5, 0.5]) == 0
        assert predicted_label(np.array([0.4, 0.6])) == 1

    def test_label_scores_with_missing_values(self):
        net = random_network(12, n_vars=5, max_card=3, edge_prob=0.6)
        s = net.structure
        x = np.array([[0, 1, -1, 0], [-1, -1, -1, -1], [1, 0, 1, 1]])
        x = np.minimum(x, np.asarray(s.cardinalities)[1:] - 1)
        scores = label_scores(net, x)
        for row, p in zip(x, scores):
            ev = {v: int(row[j]) for j, v in enumerate(s.feature_ids) if row[j] >= 0}
            assert p == pytest.approx(brute_marginals(net, ev)[0][1], abs=1e-9)
        assert label_scores(net, np.zeros((0, 4), dtype=int)).shape == (0,)

    def test_label_scores_methods_agree_on_star(self):
        net = star_network(3, n_features=4)
        s = net.structure
        x = np.array([[0, 1, 1, 0], [1, 0, 0, 1]])
        exact = label_scores(net, x, "exact")
        mf = label_scores(net, x, "meanfield", MeanFieldConfig())
        assert_allclose(mf, exact, atol=1e-12)  # only the label is free, so mean field is exact
        gibbs = label_scores(net, x, "gibbs", GibbsConfig(seed=1, burn_in=100, samples=20000))
        assert_allclose(gibbs, exact, atol=0.02)
        assert s.label_id == 0
