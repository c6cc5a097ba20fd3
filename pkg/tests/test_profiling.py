import time

import numpy as np
import pytest

from carelabel.inference import CliqueTableTooLarge
from carelabel.profiling import (
    ModelBasedMeter,
    RaplMeter,
    backend_task,
    generate_profiling_suite,
    measure_task,
    measurements_to_csv,
    resolve_meter,
    run_scaling_experiment,
)
from conftest import max_table_gap, seeded_mrf, chain_graph


class TestMeters:
    def test_model_meter_identity(self):
        meter = ModelBasedMeter(power_watts=30.0)
        assert meter.energy_of_runtime(2.0) == 60.0

    def test_model_meter_rejects_nonpositive_power(self):
        with pytest.raises(ValueError):
            ModelBasedMeter(power_watts=0.0)

    def test_resolve_explicit_model(self):
        meter, fallback = resolve_meter("model", power_watts=25.0)
        assert meter.kind == "model" and meter.power_watts == 25.0
        assert not fallback

    def test_resolve_rapl_falls_back_when_unavailable(self):
        if RaplMeter.available():
            meter, fallback = resolve_meter("rapl")
            assert meter.kind == "rapl" and not fallback
        else:
            meter, fallback = resolve_meter("rapl")
            assert meter.kind == "model" and fallback

    def test_resolve_rejects_unknown(self):
        with pytest.raises(ValueError):
            resolve_meter("solar")


class TestMeasureTask:
    def test_busy_loop_runtime_lower_bound(self):
        def spin():
            t0 = time.perf_counter()
            while time.perf_counter() - t0 < 0.055:
                pass

        m = measure_task(spin, repeats=3, meter="model")
        assert m.runtime_seconds >= 0.05
        assert m.repeats == 3
        assert len(m.repeat_runtimes) == 3

    def test_energy_identity_model_meter(self):
        m = measure_task(lambda: sum(range(2000)), repeats=5, meter="model",
                         power_watts=30.0)
        assert abs(m.energy_ws - 30.0 * m.runtime_seconds) < 1e-9
        for rt, e in zip(m.repeat_runtimes, m.repeat_energies):
            assert abs(e - 30.0 * rt) < 1e-9

    def test_jt_chain_reports_cells(self):
        mrf = seeded_mrf(chain_graph(3), seed=1)
        m = measure_task(backend_task(mrf, "jt"), repeats=2, meter="model")
        assert m.analytic_table_cells == 8

    def test_rejects_zero_repeats(self):
        with pytest.raises(ValueError):
            measure_task(lambda: None, repeats=0)


class TestSuite:
    def test_sides_and_counts(self):
        suite = generate_profiling_suite(7, max_side=5, samples_per_size=30,
                                         coupling_range=(-0.5, 0.5), burn_in=20)
        assert [e.side for e in suite.entries] == [2, 3, 4, 5]
        for e in suite.entries:
            assert e.samples.size == 30
            assert e.mrf.graph.vertex_count == e.side ** 2

    def test_determinism(self):
        a = generate_profiling_suite(9, max_side=4, samples_per_size=25, burn_in=20)
        b = generate_profiling_suite(9, max_side=4, samples_per_size=25, burn_in=20)
        for ea, eb in zip(a.entries, b.entries):
            assert max_table_gap(ea.mrf.vertex_weights, eb.mrf.vertex_weights) == 0.0
            assert np.array_equal(ea.samples.rows, eb.samples.rows)

    def test_distinct_seeds_differ(self):
        a = generate_profiling_suite(1, max_side=3, samples_per_size=10, burn_in=5)
        b = generate_profiling_suite(2, max_side=3, samples_per_size=10, burn_in=5)
        assert max_table_gap(a.entries[0].mrf.vertex_weights,
                             b.entries[0].mrf.vertex_weights) > 0.0

    def test_validation(self):
        with pytest.raises(ValueError):
            generate_profiling_suite(0, max_side=1)
        with pytest.raises(ValueError):
            generate_profiling_suite(0, max_side=3, samples_per_size=0)
        with pytest.raises(ValueError):
            generate_profiling_suite(0, max_side=3, coupling_range=(1.0, -1.0))


class TestScalingExperiment:
    def test_lbp_all_sizes_finite(self):
        suite = generate_profiling_suite(7, max_side=5, samples_per_size=5, burn_in=5)
        results = run_scaling_experiment(suite, "lbp", repeats=2, meter="model")
        assert len(results) == 4
        for r in results:
            assert r.feasible
            assert r.measurement.runtime_seconds > 0
            assert np.isfinite(r.measurement.runtime_seconds)

    def test_jt_infeasible_sizes_skipped(self):
        suite = generate_profiling_suite(7, max_side=5, samples_per_size=5, burn_in=5)
        results = run_scaling_experiment(suite, "jt", repeats=1, meter="model",
                                         cell_cap=2 ** 4)
        feas = [r.side for r in results if r.feasible]
        infeas = [r.side for r in results if not r.feasible]
        assert 2 in feas
        assert infeas and max(feas) < min(infeas)

    def test_all_infeasible_raises(self):
        suite = generate_profiling_suite(7, max_side=3, samples_per_size=5, burn_in=5)
        with pytest.raises(CliqueTableTooLarge):
            run_scaling_experiment(suite, "jt", repeats=1, meter="model", cell_cap=1)

    def test_csv_export_shape(self):
        suite = generate_profiling_suite(7, max_side=4, samples_per_size=5, burn_in=5)
        results = run_scaling_experiment(suite, "lbp", repeats=3, meter="model")
        text = measurements_to_csv(results)
        lines = text.strip().splitlines()
        assert lines[0] == "side,repeat,runtime_s,peak_rss_mb,table_cells,energy_ws,meter"
        assert len(lines) == 1 + 3 * 3  # three sides, three repeats each
        first = lines[1].split(",")
        assert first[0] == "2" and first[1] == "0" and first[6] == "model"

    def test_infeasible_rows_marked(self):
        suite = generate_profiling_suite(7, max_side=5, samples_per_size=5, burn_in=5)
        results = run_scaling_experiment(suite, "jt", repeats=1, meter="model",
                                         cell_cap=2 ** 4)
        text = measurements_to_csv(results)
        assert "infeasible" in text
