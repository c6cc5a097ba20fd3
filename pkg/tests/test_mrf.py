import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from carelabel.mrf import (
    DiscreteMRF,
    GraphStructure,
    SampleSet,
    StateSpaceTooLarge,
    build_grid_mrf,
    empirical_marginals,
    gibbs_sample,
    marginals_bruteforce,
    mrf_from_json,
    mrf_to_json,
    partition_function_bruteforce,
    samples_from_csv,
    samples_to_csv,
    unnormalized_log_score,
)
from conftest import chain_graph, enumerate_joint, max_table_gap, seeded_mrf


class TestGraphStructure:
    def test_rejects_self_loop(self):
        with pytest.raises(ValueError, match="self-loop"):
            GraphStructure([2, 2], [(0, 0)])

    def test_rejects_duplicate_edges_order_insensitive(self):
        with pytest.raises(ValueError, match="duplicate"):
            GraphStructure([2, 2, 2], [(0, 1), (1, 0)])

    def test_rejects_out_of_range_endpoint(self):
        with pytest.raises(ValueError):
            GraphStructure([2, 2], [(0, 2)])

    def test_rejects_cardinality_below_two(self):
        with pytest.raises(ValueError):
            GraphStructure([2, 1], [])

    def test_derived_quantities(self):
        g = GraphStructure([2, 3, 4], [(0, 1), (1, 2)])
        assert g.vertex_count == 3
        assert g.edge_count == 2
        assert g.max_cardinality == 4
        assert g.max_degree == 2
        assert g.state_space_size() == 24


class TestBuildGrid:
    def test_2x2_zeros(self):
        m = build_grid_mrf(2, 2, 2, init="zeros")
        assert m.graph.vertex_count == 4
        assert m.graph.edge_count == 4
        assert all(np.all(w == 0) for w in m.vertex_weights)
        assert all(np.all(w == 0) for w in m.edge_weights)

    def test_14x14_edge_count_against_adjacency_enumeration(self):
        m = build_grid_mrf(14, 14, 2)
        assert m.graph.vertex_count == 196
        assert m.graph.edge_count == 364  # 2 * 14 * 13
        # independent oracle: enumerate neighboring cell pairs directly
        expected = set()
        for r in range(14):
            for c in range(14):
                v = r * 14 + c
                for (r2, c2) in ((r, c + 1), (r + 1, c)):
                    if r2 < 14 and c2 < 14:
                        w = r2 * 14 + c2
                        expected.add((min(v, w), max(v, w)))
        assert set(m.graph.edges) == expected

    def test_degenerate_1x1(self):
        m = build_grid_mrf(1, 1, 3)
        assert m.graph.vertex_count == 1
        assert m.graph.edge_count == 0

    def test_rejects_bad_sizes(self):
        with pytest.raises(ValueError):
            build_grid_mrf(0, 2, 2)
        with pytest.raises(ValueError):
            build_grid_mrf(2, 0, 2)
        with pytest.raises(ValueError):
            build_grid_mrf(2, 2, 1)

    def test_seeded_init_deterministic(self):
        a = build_grid_mrf(3, 3, 2, init="uniform", seed=5)
        b = build_grid_mrf(3, 3, 2, init="uniform", seed=5)
        assert max_table_gap(a.vertex_weights, b.vertex_weights) == 0.0
        assert max_table_gap(a.edge_weights, b.edge_weights) == 0.0


class TestLogScore:
    def test_zero_weights_scores_zero(self):
        m = build_grid_mrf(2, 3, 2)
        assert unnormalized_log_score(m, [0, 1, 0, 1, 1, 0]) == 0.0

    def test_single_vertex_table_lookup(self):
        g = GraphStructure([2], [])
        m = DiscreteMRF(g, [np.log([2.0, 3.0])], [])
        assert unnormalized_log_score(m, [1]) == pytest.approx(math.log(3.0))

    def test_matches_independent_resummation(self):
        m = seeded_mrf(chain_graph(2), seed=3)
        x = [1, 0]
        expected = (float(m.vertex_weights[0][1]) + float(m.vertex_weights[1][0])
                    + float(m.edge_weights[0][1, 0]))
        assert unnormalized_log_score(m, x) == pytest.approx(expected, abs=1e-14)

    def test_rejects_out_of_range_state(self):
        m = build_grid_mrf(2, 2, 2)
        with pytest.raises(ValueError):
            unnormalized_log_score(m, [0, 0, 0, 2])


class TestPartitionFunction:
    def test_zero_weights_binary(self):
        for d in (1, 3, 6):
            m = build_grid_mrf(1, d, 2)
            assert partition_function_bruteforce(m) == pytest.approx(d * math.log(2))

    def test_single_vertex(self):
        g = GraphStructure([2], [])
        m = DiscreteMRF(g, [np.array([0.0, math.log(3.0)])], [])
        assert partition_function_bruteforce(m) == pytest.approx(math.log(4.0))

    def test_3x3_matches_independent_enumeration(self):
        m = build_grid_mrf(3, 3, 2, init="uniform", seed=17)
        z = math.fsum(p for _, p in enumerate_joint(m))
        assert partition_function_bruteforce(m) == pytest.approx(math.log(z), abs=1e-10)

    def test_cap_exceeded(self):
        m = build_grid_mrf(3, 3, 2)
        with pytest.raises(StateSpaceTooLarge):
            partition_function_bruteforce(m, cap=2 ** 8)


class TestMarginalsBruteforce:
    def test_zero_weights_uniform(self):
        m = build_grid_mrf(2, 2, 3)
        marg = marginals_bruteforce(m)
        for tab in marg.vertex_marginals:
            assert np.allclose(tab, 1.0 / 3.0, atol=1e-12)
        for tab in marg.edge_marginals:
            assert np.allclose(tab, 1.0 / 9.0, atol=1e-12)

    def test_two_vertex_agreement_probability(self):
        c = 1.3
        g = chain_graph(2)
        tab = np.zeros((2, 2))
        tab[0, 0] = tab[1, 1] = c
        m = DiscreteMRF(g, [np.zeros(2), np.zeros(2)], [tab])
        marg = marginals_bruteforce(m)
        agree = marg.edge_marginals[0][0, 0] + marg.edge_marginals[0][1, 1]
        assert agree == pytest.approx(math.exp(c) / (math.exp(c) + 1.0), abs=1e-12)

    def test_relabeling_symmetry(self):
        # palindromic chain: edge (1,2) mirrors edge (0,1), endpoints share weights
        g = chain_graph(3)
        vw = [np.array([0.2, -0.1]), np.array([0.4, 0.0]), np.array([0.2, -0.1])]
        tab = np.array([[0.3, -0.2], [0.1, 0.5]])
        m = DiscreteMRF(g, vw, [tab, tab.T])
        marg = marginals_bruteforce(m)
        assert np.allclose(marg.vertex_marginals[0], marg.vertex_marginals[2], atol=1e-12)

    def test_edge_vertex_consistency(self):
        m = build_grid_mrf(2, 3, 2, init="uniform", seed=8)
        marg = marginals_bruteforce(m)
        assert marg.max_consistency_gap(m.graph) < 1e-12

    def test_probabilities_sum_to_one(self):
        m = seeded_mrf(chain_graph(4, 3), seed=2)
        ln_z = partition_function_bruteforce(m)
        total = math.fsum(p for _, p in enumerate_joint(m)) / math.exp(ln_z)
        assert total == pytest.approx(1.0, abs=1e-9)


class TestShiftInvariance:
    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10 ** 6), st.floats(-3, 3, allow_nan=False))
    def test_vertex_table_shift(self, seed, c):
        m = seeded_mrf(chain_graph(3), seed=seed)
        vw = [w.copy() for w in m.vertex_weights]
        vw[1] = vw[1] + c
        shifted = DiscreteMRF(m.graph, vw, m.edge_weights)
        base = marginals_bruteforce(m)
        moved = marginals_bruteforce(shifted)
        assert max_table_gap(base.vertex_marginals, moved.vertex_marginals) < 1e-12
        assert max_table_gap(base.edge_marginals, moved.edge_marginals) < 1e-12
        assert moved.log_partition - base.log_partition == pytest.approx(c, abs=1e-9)


class TestGibbs:
    def test_zero_weight_marginals_concentrate(self):
        m = build_grid_mrf(2, 2, 2)
        n = 10000
        s = gibbs_sample(m, n, burn_in=50, seed=123)
        emp = empirical_marginals(s)
        bound = 4.0 * math.sqrt(0.25 / n)
        for tab in emp.vertex_marginals:
            assert abs(tab[0] - 0.5) < bound

    def test_determinism(self):
        m = build_grid_mrf(2, 3, 2, init="uniform", seed=4)
        a = gibbs_sample(m, 50, burn_in=20, thinning=2, seed=99)
        b = gibbs_sample(m, 50, burn_in=20, thinning=2, seed=99)
        assert np.array_equal(a.rows, b.rows)

    def test_strong_coupling_agreement_matches_bruteforce(self):
        g = build_grid_mrf(2, 2, 2).graph
        ew = []
        for _ in g.edges:
            tab = np.zeros((2, 2))
            tab[0, 0] = tab[1, 1] = 2.0
            ew.append(tab)
        m = DiscreteMRF(g, [np.zeros(2)] * 4, ew)
        s = gibbs_sample(m, 20000, burn_in=500, seed=7)
        emp = empirical_marginals(s)
        exact = marginals_bruteforce(m)
        for k in range(g.edge_count):
            emp_agree = emp.edge_marginals[k][0, 0] + emp.edge_marginals[k][1, 1]
            true_agree = exact.edge_marginals[k][0, 0] + exact.edge_marginals[k][1, 1]
            assert abs(emp_agree - true_agree) < 0.03

    def test_input_validation(self):
        m = build_grid_mrf(2, 2, 2)
        with pytest.raises(ValueError):
            gibbs_sample(m, 0)
        with pytest.raises(ValueError):
            gibbs_sample(m, 5, thinning=0)


class TestEmpiricalMarginals:
    def test_single_sample(self):
        g = chain_graph(2)
        s = SampleSet(np.array([[0, 1]]), g)
        emp = empirical_marginals(s)
        assert np.array_equal(emp.vertex_marginals[0], [1.0, 0.0])
        assert np.array_equal(emp.vertex_marginals[1], [0.0, 1.0])
        assert emp.log_partition is None

    def test_identical_samples_one_hot(self):
        g = chain_graph(3)
        s = SampleSet(np.tile([1, 0, 1], (8, 1)), g)
        emp = empirical_marginals(s)
        assert np.array_equal(emp.vertex_marginals[0], [0.0, 1.0])
        assert np.array_equal(emp.edge_marginals[0], [[0.0, 0.0], [1.0, 0.0]])

    def test_balanced_states(self):
        g = GraphStructure([2], [])
        s = SampleSet(np.array([[0], [1], [0], [1]]), g)
        emp = empirical_marginals(s)
        assert np.array_equal(emp.vertex_marginals[0], [0.5, 0.5])

    def test_rejects_out_of_range(self):
        g = chain_graph(2)
        with pytest.raises(ValueError):
            SampleSet(np.array([[0, 2]]), g)


class TestSerialization:
    def test_model_json_round_trip(self):
        m = build_grid_mrf(2, 3, 2, init="uniform", seed=21)
        text = mrf_to_json(m)
        back = mrf_from_json(text)
        assert back.graph.edges == m.graph.edges
        assert max_table_gap(back.vertex_weights, m.vertex_weights) == 0.0
        assert mrf_to_json(back) == text

    def test_samples_csv_round_trip(self):
        m = build_grid_mrf(2, 2, 2, init="uniform", seed=1)
        s = gibbs_sample(m, 20, burn_in=10, seed=2)
        text = samples_to_csv(s)
        assert text.splitlines()[0] == "v0,v1,v2,v3"
        back = samples_from_csv(text, m.graph)
        assert np.array_equal(back.rows, s.rows)
