import math

import numpy as np
import pytest

from carelabel.mrf import (
    DiscreteMRF,
    SampleSet,
    build_grid_mrf,
    gibbs_sample,
    partition_function_bruteforce,
)
from carelabel.training import (
    FitTrace,
    GradientVector,
    InferenceBackend,
    gradient_descent_fit,
    negative_avg_log_likelihood,
    nll_gradient,
)
from conftest import chain_graph, seeded_mrf


def finite_difference_gradient(mrf, samples, backend, h=1e-5):
    """Central differences of the NLL, one coordinate at a time."""
    vt, et = [], []
    for v, w in enumerate(mrf.vertex_weights):
        g = np.zeros_like(w)
        for k in range(w.size):
            for sign in (1, -1):
                vw = [x.copy() for x in mrf.vertex_weights]
                vw[v][k] += sign * h
                val = negative_avg_log_likelihood(
                    DiscreteMRF(mrf.graph, vw, mrf.edge_weights), samples, backend)
                g[k] += sign * val
        vt.append(g / (2 * h))
    for e, w in enumerate(mrf.edge_weights):
        g = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            up_w = [x.copy() for x in mrf.edge_weights]
            up_w[e][idx] += h
            up = negative_avg_log_likelihood(
                DiscreteMRF(mrf.graph, mrf.vertex_weights, up_w), samples, backend)
            dn_w = [x.copy() for x in mrf.edge_weights]
            dn_w[e][idx] -= h
            dn = negative_avg_log_likelihood(
                DiscreteMRF(mrf.graph, mrf.vertex_weights, dn_w), samples, backend)
            g[idx] = (up - dn) / (2 * h)
        et.append(g)
    return GradientVector(tuple(vt), tuple(et))


def max_relative_error(analytic: GradientVector, numeric: GradientVector) -> float:
    worst = 0.0
    for a, b in zip((*analytic.vertex_tables, *analytic.edge_tables),
                    (*numeric.vertex_tables, *numeric.edge_tables)):
        denom = np.maximum(np.abs(b), 1e-8)
        worst = max(worst, float(np.max(np.abs(a - b) / denom)))
    return worst


class TestNLL:
    def test_zero_weights_binary(self):
        m = build_grid_mrf(2, 3, 2)
        samples = gibbs_sample(m, 50, burn_in=10, seed=1)
        assert negative_avg_log_likelihood(m, samples, "jt") == pytest.approx(
            6 * math.log(2))

    def test_matches_bruteforce_partition(self):
        m = seeded_mrf(chain_graph(4), seed=3)
        samples = gibbs_sample(m, 100, burn_in=50, seed=4)
        got = negative_avg_log_likelihood(m, samples, "jt")
        rows = samples.rows
        mean_score = 0.0
        for row in rows:
            s = sum(float(m.vertex_weights[v][row[v]]) for v in range(4))
            s += sum(float(m.edge_weights[k][row[a], row[b]])
                     for k, (a, b) in enumerate(m.graph.edges))
            mean_score += s
        mean_score /= len(rows)
        expected = partition_function_bruteforce(m) - mean_score
        assert got == pytest.approx(expected, abs=1e-8)

    def test_lbp_matches_jt_on_tree(self):
        m = seeded_mrf(chain_graph(5), seed=5)
        samples = gibbs_sample(m, 200, burn_in=50, seed=6)
        a = negative_avg_log_likelihood(m, samples, "jt")
        b = negative_avg_log_likelihood(m, samples, "lbp")
        assert a == pytest.approx(b, abs=1e-6)

    def test_rejects_mismatched_samples(self):
        m = build_grid_mrf(2, 2, 2)
        other = build_grid_mrf(2, 3, 2)
        samples = gibbs_sample(other, 10, burn_in=5, seed=1)
        with pytest.raises(ValueError):
            negative_avg_log_likelihood(m, samples, "jt")


class TestGradient:
    def test_stationary_at_matching_marginals(self):
        # uniform model, perfectly balanced empirical distribution
        g = chain_graph(2)
        m = DiscreteMRF(g, [np.zeros(2)] * 2, [np.zeros((2, 2))])
        rows = np.array([[a, b] for a in range(2) for b in range(2)])
        samples = SampleSet(rows, g)
        grad = nll_gradient(m, samples, "jt")
        assert grad.l2_norm() < 1e-12

    def test_matches_finite_differences(self):
        for seed in (21, 22, 23):
            m = seeded_mrf(build_grid_mrf(2, 2, 2).graph, seed=seed)
            samples = gibbs_sample(m, 300, burn_in=100, seed=seed + 100)
            analytic = nll_gradient(m, samples, "jt")
            numeric = finite_difference_gradient(m, samples, "jt")
            assert max_relative_error(analytic, numeric) < 1e-4

    def test_one_hot_data_zero_weight_model(self):
        g = chain_graph(3)
        m = DiscreteMRF(g, [np.zeros(2)] * 3, [np.zeros((2, 2))] * 2)
        a = [1, 0, 1]
        samples = SampleSet(np.tile(a, (10, 1)), g)
        grad = nll_gradient(m, samples, "jt")
        for v in range(3):
            assert grad.vertex_tables[v][a[v]] == pytest.approx(0.5 - 1.0)
            assert grad.vertex_tables[v][1 - a[v]] == pytest.approx(0.5)


class TestFit:
    def test_stationary_start_returns_immediately(self):
        g = chain_graph(2)
        m = DiscreteMRF(g, [np.zeros(2)] * 2, [np.zeros((2, 2))])
        rows = np.array([[a, b] for a in range(2) for b in range(2)])
        samples = SampleSet(rows, g)
        fitted, trace = gradient_descent_fit(m, samples, grad_tolerance=1e-6)
        assert len(trace) == 1
        assert fitted.vertex_weights[0] is m.vertex_weights[0]

    def test_converges_on_grid_data(self):
        true = build_grid_mrf(3, 3, 2, init="uniform", seed=31)
        data = gibbs_sample(true, 2000, burn_in=500, seed=32)
        init = build_grid_mrf(3, 3, 2)
        fitted, trace = gradient_descent_fit(init, data, step=0.5,
                                             max_iterations=500,
                                             grad_tolerance=1e-2, backend="jt")
        assert trace.records[-1][1] < 1e-2
        assert len(trace) <= 501

    def test_nll_monotone_at_small_step(self):
        true = build_grid_mrf(2, 3, 2, init="uniform", seed=33)
        data = gibbs_sample(true, 1000, burn_in=200, seed=34)
        init = build_grid_mrf(2, 3, 2)
        _, trace = gradient_descent_fit(init, data, step=0.1,
                                        max_iterations=120,
                                        grad_tolerance=1e-4, backend="jt")
        nlls = trace.nll
        for a, b in zip(nlls, nlls[1:]):
            assert b <= a + 1e-10

    def test_budget_zero_returns_initial_point(self):
        true = build_grid_mrf(2, 2, 2, init="uniform", seed=35)
        data = gibbs_sample(true, 200, burn_in=50, seed=36)
        init = build_grid_mrf(2, 2, 2)
        _, trace = gradient_descent_fit(init, data, max_iterations=0,
                                        grad_tolerance=1e-4)
        assert len(trace) == 1
        assert trace.records[0][1] > 1e-4

    def test_validation(self):
        m = build_grid_mrf(2, 2, 2)
        data = gibbs_sample(m, 10, burn_in=5, seed=1)
        with pytest.raises(ValueError):
            gradient_descent_fit(m, data, step=0.0)
        with pytest.raises(ValueError):
            gradient_descent_fit(m, data, grad_tolerance=0.0)

    def test_trace_csv(self):
        trace = FitTrace(((2.5, 0.3, 0.5), (2.1, 0.05, 0.5)))
        text = trace.to_csv()
        lines = text.strip().splitlines()
        assert lines[0] == "iteration,nll,grad_norm,step"
        assert lines[1].startswith("0,2.5,")
        assert len(lines) == 3


class TestConvexityAndShift:
    def test_nll_convex_in_weights(self):
        g = chain_graph(3)
        samples = gibbs_sample(seeded_mrf(g, seed=41), 300, burn_in=100, seed=42)
        m1 = seeded_mrf(g, seed=43)
        m2 = seeded_mrf(g, seed=44)
        f1 = negative_avg_log_likelihood(m1, samples, "jt")
        f2 = negative_avg_log_likelihood(m2, samples, "jt")
        for t in (0.25, 0.5, 0.75):
            vw = [t * a + (1 - t) * b for a, b in zip(m1.vertex_weights, m2.vertex_weights)]
            ew = [t * a + (1 - t) * b for a, b in zip(m1.edge_weights, m2.edge_weights)]
            mix = DiscreteMRF(g, vw, ew)
            val = negative_avg_log_likelihood(mix, samples, "jt")
            assert val <= t * f1 + (1 - t) * f2 + 1e-9

    def test_shift_invariance(self):
        g = chain_graph(3)
        m = seeded_mrf(g, seed=45)
        samples = gibbs_sample(m, 200, burn_in=50, seed=46)
        vw = [w.copy() for w in m.vertex_weights]
        vw[1] = vw[1] + 0.9
        shifted = DiscreteMRF(g, vw, m.edge_weights)
        a = negative_avg_log_likelihood(m, samples, "jt")
        b = negative_avg_log_likelihood(shifted, samples, "jt")
        assert a == pytest.approx(b, abs=1e-9)
        ga = nll_gradient(m, samples, "jt")
        gb = nll_gradient(shifted, samples, "jt")
        for x, y in zip((*ga.vertex_tables, *ga.edge_tables),
                        (*gb.vertex_tables, *gb.edge_tables)):
            assert np.allclose(x, y, atol=1e-9)


class TestBackend:
    def test_unknown_backend_rejected(self):
        m = build_grid_mrf(2, 2, 2)
        with pytest.raises(ValueError, match="unknown backend"):
            InferenceBackend("gibbs", m.graph)

    def test_backend_object_reusable(self):
        m = seeded_mrf(chain_graph(3), seed=47)
        be = InferenceBackend("jt", m.graph)
        marg1, ln_z1, rep1 = be.infer(m)
        marg2, ln_z2, rep2 = be.infer(m)
        assert ln_z1 == ln_z2
        assert rep1.exact and rep2.exact
