"""Synthetic grid suites, timed/measured runs, and energy accounting.

Measurements are taken strictly serially: one task at a time, no suite-owned
threads, so the complexity fits downstream see clean numbers.  Energy comes
from a pluggable meter; the hardware (RAPL sysfs) meter is used only where
the platform exposes it, otherwise a model-based meter multiplies a
configured average power by the runtime.
"""
from __future__ import annotations

import glob
import os
import statistics
import time
import tracemalloc
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .inference import (
    CliqueTableTooLarge,
    DEFAULT_CLIQUE_CELL_CAP,
    InferenceReport,
    LBPConfig,
    build_junction_tree,
    jt_infer,
    lbp_infer,
)
from .mrf import DiscreteMRF, SampleSet, build_grid_mrf, gibbs_sample

DEFAULT_POWER_WATTS = 30.0
# wide enough that loopy BP visibly misestimates marginals on the small
# grids, which is the contrast the reliability checks exist to surface
DEFAULT_COUPLING_RANGE = (-1.2, 1.2)
RAPL_GLOB = "/sys/class/powercap/intel-rapl:*"


class ModelBasedMeter:
    """Energy as configured average power times runtime (Watt-seconds)."""

    kind = "model"

    def __init__(self, power_watts: float = DEFAULT_POWER_WATTS):
        if power_watts <= 0:
            raise ValueError("power_watts must be > 0")
        self.power_watts = float(power_watts)

    def energy_of_runtime(self, runtime_seconds: float) -> float:
        return self.power_watts * runtime_seconds


class RaplMeter:
    """CPU package energy from the Linux powercap (RAPL) sysfs counters."""

    kind = "rapl"

    def __init__(self, zone_paths: Sequence[str] | None = None):
        self.zones = list(zone_paths) if zone_paths is not None else self._find_zones()
        if not self.zones:
            raise RuntimeError("no readable RAPL energy counters on this platform")
        self._ranges = []
        for z in self.zones:
            try:
                with open(os.path.join(z, "max_energy_range_uj")) as fh:
                    self._ranges.append(int(fh.read().strip()))
            except OSError:
                self._ranges.append(None)

    @staticmethod
    def _find_zones() -> list[str]:
        zones = []
        for path in sorted(glob.glob(RAPL_GLOB)):
            counter = os.path.join(path, "energy_uj")
            try:
                with open(counter) as fh:
                    fh.read()
                zones.append(path)
            except OSError:
                continue
        return zones

    @classmethod
    def available(cls) -> bool:
        return bool(cls._find_zones())

    def _read_uj(self) -> list[int]:
        vals = []
        for z in self.zones:
            with open(os.path.join(z, "energy_uj")) as fh:
                vals.append(int(fh.read().strip()))
        return vals

    def energy_between(self, before: list[int], after: list[int]) -> float:
        total_uj = 0
        for b, a, rng in zip(before, after, self._ranges):
            d = a - b
            if d < 0 and rng:  # counter wrapped
                d += rng
            total_uj += max(d, 0)
        return total_uj * 1e-6

    def start(self) -> list[int]:
        return self._read_uj()


def resolve_meter(spec=None, power_watts: float = DEFAULT_POWER_WATTS):
    """Turn a meter spec into a meter instance plus a fallback flag.

    ``spec`` may be a meter object, ``"model"``, ``"rapl"``, or None (pick
    RAPL when available, else the model meter).  Asking for RAPL on a
    platform without counters falls back to the model meter and flags it.
    """
    if spec is None:
        if RaplMeter.available():
            return RaplMeter(), False
        return ModelBasedMeter(power_watts), False
    if isinstance(spec, (ModelBasedMeter, RaplMeter)):
        return spec, False
    if spec == "model":
        return ModelBasedMeter(power_watts), False
    if spec == "rapl":
        if RaplMeter.available():
            return RaplMeter(), False
        return ModelBasedMeter(power_watts), True
    raise ValueError(f"unknown meter spec {spec!r}")


@dataclass(frozen=True)
class Measurement:
    """Resource usage of one task: median runtime, memory, cells, energy."""

    runtime_seconds: float
    peak_memory_mb: float
    analytic_table_cells: int
    energy_ws: float
    repeats: int
    runtime_stddev: float
    meter_kind: str
    meter_fallback: bool = False
    repeat_runtimes: tuple[float, ...] = ()
    repeat_energies: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "runtime_seconds": self.runtime_seconds,
            "peak_memory_mb": self.peak_memory_mb,
            "analytic_table_cells": self.analytic_table_cells,
            "energy_ws": self.energy_ws,
            "repeats": self.repeats,
            "runtime_stddev": self.runtime_stddev,
            "meter_kind": self.meter_kind,
            "meter_fallback": self.meter_fallback,
        }


def measure_task(task: Callable[[], object], repeats: int = 10,
                 meter=None, power_watts: float = DEFAULT_POWER_WATTS) -> Measurement:
    """Run a task ``repeats`` times; report median wall-clock and energy.

    The caller must keep the process otherwise idle (exclusive-machine
    assumption) and the task deterministic.  Peak memory is sampled with
    ``tracemalloc`` on one extra, untimed run so the timed repeats stay
    undisturbed.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    meter, fallback = resolve_meter(meter, power_watts)
    runtimes = []
    energies = []
    result = None
    for _ in range(repeats):
        if meter.kind == "rapl":
            before = meter.start()
        t0 = time.perf_counter()
        result = task()
        dt = time.perf_counter() - t0
        runtimes.append(dt)
        if meter.kind == "rapl":
            energies.append(meter.energy_between(before, meter.start()))
        else:
            energies.append(meter.energy_of_runtime(dt))
    tracemalloc.start()
    task()
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    median_rt = statistics.median(runtimes)
    if meter.kind == "rapl":
        energy = statistics.median(energies)
    else:
        energy = meter.energy_of_runtime(median_rt)
    cells = result.analytic_table_cells if isinstance(result, InferenceReport) else 0
    return Measurement(
        runtime_seconds=median_rt,
        peak_memory_mb=peak / (1024.0 * 1024.0),
        analytic_table_cells=cells,
        energy_ws=energy,
        repeats=repeats,
        runtime_stddev=statistics.stdev(runtimes) if repeats > 1 else 0.0,
        meter_kind=meter.kind,
        meter_fallback=fallback,
        repeat_runtimes=tuple(runtimes),
        repeat_energies=tuple(energies),
    )


@dataclass(frozen=True)
class SuiteEntry:
    side: int
    mrf: DiscreteMRF
    samples: SampleSet


@dataclass(frozen=True)
class ProfilingSuite:
    """Grid models of strictly increasing side, each with Gibbs samples."""

    entries: tuple[SuiteEntry, ...]
    seed: int
    cardinality: int
    coupling_range: tuple[float, float]

    def __post_init__(self):
        sides = [e.side for e in self.entries]
        if sides != sorted(set(sides)):
            raise ValueError("suite sides must be strictly increasing")


def _derived_seed(seed: int, side: int, stream: int) -> int:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(side, stream))
    return int(ss.generate_state(1)[0])


def generate_profiling_suite(seed: int, max_side: int = 8,
                             samples_per_size: int = 1000,
                             coupling_range: tuple[float, float] = DEFAULT_COUPLING_RANGE,
                             cardinality: int = 2,
                             burn_in: int = 1000) -> ProfilingSuite:
    """Seeded grid models for sides 2..max_side plus Gibbs samples of each.

    All weights (vertex and edge) are drawn uniformly from the coupling
    range; per-side seeds are derived from the master seed, so the suite is
    a pure function of its arguments.
    """
    if max_side < 2:
        raise ValueError("max_side must be >= 2")
    if samples_per_size < 1:
        raise ValueError("samples_per_size must be >= 1")
    lo, hi = coupling_range
    if not (lo < hi):
        raise ValueError("coupling_range must be (lo, hi) with lo < hi")
    entries = []
    for side in range(2, max_side + 1):
        mrf = build_grid_mrf(side, side, cardinality, init="uniform",
                             low=lo, high=hi, seed=_derived_seed(seed, side, 0))
        samples = gibbs_sample(mrf, samples_per_size, burn_in=burn_in,
                               seed=_derived_seed(seed, side, 1))
        entries.append(SuiteEntry(side, mrf, samples))
    return ProfilingSuite(tuple(entries), seed, cardinality, (float(lo), float(hi)))


@dataclass(frozen=True)
class SizeMeasurement:
    side: int
    feasible: bool
    measurement: Measurement | None


def backend_task(mrf: DiscreteMRF, backend: str,
                 lbp_config: LBPConfig | None = None,
                 cell_cap: int = DEFAULT_CLIQUE_CELL_CAP,
                 lbp_fixed_budget: bool = False) -> Callable[[], InferenceReport]:
    """The unit of measured work: one full inference run on the model.

    For the junction-tree backend that includes deriving the tree itself,
    since the auxiliary structure is part of running the method.  With
    ``lbp_fixed_budget`` the LBP task always runs its full iteration budget,
    which is the regime the linear-in-edges runtime bound is stated for
    (iteration counts at convergence are instance properties, not bounded by
    the theory).
    """
    if backend == "jt":
        return lambda: jt_infer(mrf, None, cell_cap=cell_cap)
    if backend == "lbp":
        cfg = lbp_config or LBPConfig()
        return lambda: lbp_infer(mrf, cfg, early_stop=not lbp_fixed_budget)
    raise ValueError(f"unknown backend {backend!r}")


def run_scaling_experiment(suite: ProfilingSuite, backend: str,
                           repeats: int = 10, meter=None,
                           power_watts: float = DEFAULT_POWER_WATTS,
                           lbp_config: LBPConfig | None = None,
                           cell_cap: int = DEFAULT_CLIQUE_CELL_CAP,
                           lbp_fixed_budget: bool = False,
                           ) -> list[SizeMeasurement]:
    """One Measurement per suite entry; JT entries over the cap are recorded
    as infeasible rather than raising (unless every size is infeasible)."""
    results = []
    for entry in suite.entries:
        if backend == "jt":
            jt = build_junction_tree(entry.mrf.graph)
            biggest = max(
                int(np.prod([entry.mrf.graph.cardinalities[v] for v in cl], dtype=np.int64))
                for cl in jt.cliques)
            if biggest > cell_cap:
                results.append(SizeMeasurement(entry.side, False, None))
                continue
        task = backend_task(entry.mrf, backend, lbp_config, cell_cap, lbp_fixed_budget)
        m = measure_task(task, repeats=repeats, meter=meter, power_watts=power_watts)
        results.append(SizeMeasurement(entry.side, True, m))
    if not any(r.feasible for r in results):
        raise CliqueTableTooLarge("every suite size exceeds the clique cell cap")
    return results


def measurements_to_csv(results: Sequence[SizeMeasurement]) -> str:
    """Raw per-repeat rows: side,repeat,runtime_s,peak_rss_mb,table_cells,energy_ws,meter."""
    lines = ["side,repeat,runtime_s,peak_rss_mb,table_cells,energy_ws,meter"]
    for r in results:
        if not r.feasible or r.measurement is None:
            lines.append(f"{r.side},-1,,,,,infeasible")
            continue
        m = r.measurement
        for i, (rt, e) in enumerate(zip(m.repeat_runtimes, m.repeat_energies)):
            lines.append(
                f"{r.side},{i},{rt!r},{m.peak_memory_mb!r},"
                f"{m.analytic_table_cells},{e!r},{m.meter_kind}")
    return "\n".join(lines) + "\n"
