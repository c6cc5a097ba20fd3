"""Care-label assembly: the end-to-end certification pipeline.

A care label has two segments.  The theory segment carries the expert
ratings and badges of the chosen method configuration; the implementation
segment carries the bound-check checkmarks and measured resource use of this
package's backends on this machine.  Everything that influenced a pass/fail
decision lands in the audit section.
"""
from __future__ import annotations

import platform
from dataclasses import dataclass
from typing import Mapping

from . import __version__
from .checks import (
    CheckConfig,
    CheckResult,
    distribution_recovery_check,
    convergence_check,
    merge_check_results,
    performance_bound_check,
)
from .inference import DEFAULT_CLIQUE_CELL_CAP
from .knowledge import (
    CATEGORIES,
    KnowledgeDB,
    MethodConfiguration,
    Rating,
    collect_badges,
    combine_ratings,
    measurement_badge,
)
from .mrf import DEFAULT_ENUMERATION_CAP
from .profiling import (
    DEFAULT_COUPLING_RANGE,
    DEFAULT_POWER_WATTS,
    Measurement,
    SizeMeasurement,
    backend_task,
    generate_profiling_suite,
    measure_task,
    resolve_meter,
    run_scaling_experiment,
)

IMPLEMENTATION_NAME = "carelabel"
ERROR_METRIC = -1.0  # stands in for "check errored before producing a metric"


@dataclass(frozen=True)
class SuiteParams:
    """Arguments of the synthetic profiling suite, echoed into the audit."""

    seed: int = 7
    max_side: int = 8
    samples_per_size: int = 1000
    coupling_range: tuple[float, float] = DEFAULT_COUPLING_RANGE
    cardinality: int = 2
    burn_in: int = 1000
    repeats: int = 10

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "max_side": self.max_side,
            "samples_per_size": self.samples_per_size,
            "coupling_range": list(self.coupling_range),
            "cardinality": self.cardinality,
            "burn_in": self.burn_in,
            "repeats": self.repeats,
        }


@dataclass(frozen=True)
class CareLabel:
    """Two label segments plus the audit trail, JSON-serializable."""

    theory: dict
    implementation: dict
    audit: dict

    def to_dict(self) -> dict:
        return {
            "schema": "care-label/1",
            "theory_segment": self.theory,
            "implementation_segment": self.implementation,
            "audit": self.audit,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "CareLabel":
        if doc.get("schema") != "care-label/1":
            raise ValueError(f"unsupported label schema {doc.get('schema')!r}")
        return cls(theory=dict(doc["theory_segment"]),
                   implementation=dict(doc["implementation_segment"]),
                   audit=dict(doc["audit"]))


def _environment(meter_kind: str) -> dict:
    cpu = ""
    try:
        with open("/proc/cpuinfo") as fh:
            for line in fh:
                if line.lower().startswith("model name"):
                    cpu = line.split(":", 1)[1].strip()
                    break
    except OSError:
        pass
    if not cpu:
        cpu = platform.processor() or platform.machine()
    return {"cpu": cpu, "os": platform.platform(), "meter": meter_kind}


def _error_check(check_id: str, reason: str) -> CheckResult:
    return CheckResult(check_id=check_id, passed=False, metric=ERROR_METRIC,
                       threshold_or_expected=ERROR_METRIC,
                       per_dataset=(("pipeline", False, ERROR_METRIC),),
                       note=f"stage error: {reason}")


def certify(configuration: MethodConfiguration, db: KnowledgeDB,
            suite_params: SuiteParams | None = None,
            check_config: CheckConfig | None = None,
            meter=None, power_watts: float = DEFAULT_POWER_WATTS,
            enumeration_cap: int = DEFAULT_ENUMERATION_CAP,
            cell_cap: int = DEFAULT_CLIQUE_CELL_CAP,
            timestamp: str | None = None) -> CareLabel:
    """Run the whole certification pipeline and assemble the label.

    Configuration resolution errors abort; any later stage error turns into
    a failed check on the label instead, because the label reports rather
    than gates.  Deterministic per seed except for wall-clock readings.
    """
    label, _ = certify_with_artifacts(
        configuration, db, suite_params, check_config, meter, power_watts,
        enumeration_cap, cell_cap, timestamp)
    return label


def certify_with_artifacts(configuration: MethodConfiguration, db: KnowledgeDB,
                           suite_params: SuiteParams | None = None,
                           check_config: CheckConfig | None = None,
                           meter=None, power_watts: float = DEFAULT_POWER_WATTS,
                           enumeration_cap: int = DEFAULT_ENUMERATION_CAP,
                           cell_cap: int = DEFAULT_CLIQUE_CELL_CAP,
                           timestamp: str | None = None,
                           ) -> tuple[CareLabel, list[SizeMeasurement]]:
    """Like :func:`certify` but also returns the raw scaling measurements
    (per-repeat rows) for CSV export."""
    suite_params = suite_params or SuiteParams()
    check_config = check_config or CheckConfig()
    method, loss, optimizer, inference = db.resolve(configuration)
    ratings = combine_ratings(configuration, db)
    badges = collect_badges(configuration, db)
    backend = inference.id  # "jt" | "lbp" in the bundled database
    meter_obj, meter_fallback = resolve_meter(meter, power_watts)

    guarantees = []
    for comp in (method, loss, optimizer, inference):
        for g in comp.reliability_guarantees:
            if g not in guarantees:
                guarantees.append(g)

    suite = None
    checks: list[CheckResult] = []
    try:
        suite = generate_profiling_suite(
            seed=suite_params.seed, max_side=suite_params.max_side,
            samples_per_size=suite_params.samples_per_size,
            coupling_range=suite_params.coupling_range,
            cardinality=suite_params.cardinality, burn_in=suite_params.burn_in)
    except Exception as exc:  # noqa: BLE001 - reported on the label
        for g in guarantees:
            checks.append(_error_check(g, f"suite generation failed: {exc}"))

    if suite is not None:
        if "distribution_recovery" in guarantees:
            results = []
            for entry in suite.entries:
                if entry.mrf.graph.state_space_size() > enumeration_cap:
                    continue  # exact reference marginals are not computable
                try:
                    results.append(distribution_recovery_check(
                        entry.mrf, backend, check_config,
                        dataset_id=f"grid-{entry.side}x{entry.side}",
                        enumeration_cap=enumeration_cap))
                except Exception as exc:  # noqa: BLE001
                    results.append(_error_check("distribution_recovery", str(exc)))
            if results:
                checks.append(merge_check_results("distribution_recovery", results))
            else:
                checks.append(_error_check(
                    "distribution_recovery",
                    "no suite entry under the enumeration cap"))
        if "convergence" in guarantees:
            results = []
            for entry in suite.entries:
                try:
                    results.append(convergence_check(
                        backend, entry.mrf.graph, entry.samples, check_config,
                        dataset_id=f"grid-{entry.side}x{entry.side}"))
                except Exception as exc:  # noqa: BLE001
                    results.append(_error_check("convergence", str(exc)))
            checks.append(merge_check_results("convergence", results))

    scaling: list[SizeMeasurement] = []
    runtime_check = memory_check = None
    if suite is not None:
        try:
            scaling = run_scaling_experiment(
                suite, backend, repeats=suite_params.repeats, meter=meter_obj,
                power_watts=power_watts, cell_cap=cell_cap,
                lbp_fixed_budget=(backend == "lbp"))
        except Exception as exc:  # noqa: BLE001
            runtime_check = _error_check("runtime_bound", str(exc))
            memory_check = _error_check("memory_bound", str(exc))

    def axis_value(side: int) -> float:
        if inference.complexity_axis == "edges":
            return float(2 * side * (side - 1))
        return float(side)

    if scaling:
        feasible = [r for r in scaling if r.feasible and r.measurement is not None]
        runtime_points = [(axis_value(r.side), r.measurement.runtime_seconds)
                          for r in feasible]
        memory_points = [(axis_value(r.side), float(r.measurement.analytic_table_cells))
                         for r in feasible]
        try:
            runtime_check = performance_bound_check(
                runtime_points, inference.expected_runtime_class, "runtime", check_config)
        except Exception as exc:  # noqa: BLE001
            runtime_check = _error_check("runtime_bound", str(exc))
        try:
            memory_check = performance_bound_check(
                memory_points, inference.expected_memory_class, "memory", check_config)
        except Exception as exc:  # noqa: BLE001
            memory_check = _error_check("memory_bound", str(exc))
    if runtime_check is None:
        runtime_check = _error_check("runtime_bound", "no scaling measurements")
    if memory_check is None:
        memory_check = _error_check("memory_bound", "no scaling measurements")
    checks.extend([runtime_check, memory_check])

    reference: Measurement | None = None
    reference_side = None
    if scaling:
        feasible = [r for r in scaling if r.feasible and r.measurement is not None]
        if feasible:
            largest = feasible[-1]
            reference_side = largest.side
            entry = next(e for e in suite.entries if e.side == largest.side)
            try:
                reference = measure_task(
                    backend_task(entry.mrf, backend, cell_cap=cell_cap),
                    repeats=suite_params.repeats, meter=meter_obj,
                    power_watts=power_watts)
            except Exception as exc:  # noqa: BLE001
                checks.append(_error_check("runtime_bound",
                                           f"reference measurement failed: {exc}"))

    reliability_results = [c for c in checks
                           if c.check_id in ("distribution_recovery", "convergence")]
    reliability_pass = bool(reliability_results) and all(c.passed for c in reliability_results)
    checkmarks = {
        "reliability": "pass" if reliability_pass else "fail",
        "runtime": "pass" if runtime_check.passed else "fail",
        "memory": "pass" if memory_check.passed else "fail",
    }

    if reference is not None:
        raw = {
            "runtime_s": reference.runtime_seconds,
            "memory_mb": reference.peak_memory_mb,
            "energy_ws": reference.energy_ws,
        }
    else:
        raw = {"runtime_s": ERROR_METRIC, "memory_mb": ERROR_METRIC,
               "energy_ws": ERROR_METRIC}
    meas_badges = {
        "runtime_s": measurement_badge(max(raw["runtime_s"], 0.0),
                                       db.badge_scales["runtime"]).value,
        "memory_mb": measurement_badge(max(raw["memory_mb"], 0.0),
                                       db.badge_scales["memory"]).value,
        "energy_ws": measurement_badge(max(raw["energy_ws"], 0.0),
                                       db.badge_scales["energy"]).value,
    }

    theory = {
        "method_name": f"{method.name} + {inference.name}",
        "description": method.description,
        "components": {
            "method": method.id, "loss": loss.id,
            "optimizer": optimizer.id, "inference": inference.id,
        },
        "ratings": {cat: ratings[cat].value for cat in CATEGORIES},
        "badges": badges,
    }
    implementation = {
        "implementation": IMPLEMENTATION_NAME,
        "version": __version__,
        "environment": _environment(meter_obj.kind),
        "checkmarks": checkmarks,
        "measurements": {
            key: {"value": raw[key], "badge": meas_badges[key]} for key in raw
        },
        "reference_dataset": (f"grid-{reference_side}x{reference_side}"
                              if reference_side else "unavailable"),
        "measurement_repeats": suite_params.repeats,
        "runtime_stddev_s": reference.runtime_stddev if reference else ERROR_METRIC,
        "meter_fallback": meter_fallback or (reference.meter_fallback if reference else False),
    }
    audit = {
        "configuration": {
            "method": configuration.method, "loss": configuration.loss,
            "optimizer": configuration.optimizer,
            "inference": configuration.inference,
            "rating_overrides": {k: Rating(v).value for k, v in
                                 configuration.rating_overrides.items()},
        },
        "db_schema_version": db.schema_version,
        "seed": suite_params.seed,
        "suite": suite_params.to_dict(),
        "thresholds": {
            "kl_threshold": check_config.kl_threshold,
            "grad_norm_threshold": check_config.grad_norm_threshold,
            "fit_budget": check_config.fit_budget,
            "fit_step": check_config.fit_step,
            "decisiveness_margin": check_config.decisiveness_margin,
            "enumeration_cap": enumeration_cap,
            "clique_cell_cap": cell_cap,
            "badge_scales": {k: list(v) for k, v in db.badge_scales.items()},
        },
        "expected_classes": {
            "runtime": inference.expected_runtime_class.name,
            "memory": inference.expected_memory_class.name,
            "axis": inference.complexity_axis,
        },
        "power_watts": power_watts,
        "lbp_runtime_measured_at_fixed_budget": backend == "lbp",
        "checks": [c.to_dict() for c in checks],
        "scaling": [
            {
                "side": r.side,
                "feasible": r.feasible,
                "runtime_s": r.measurement.runtime_seconds if r.measurement else None,
                "runtime_stddev_s": r.measurement.runtime_stddev if r.measurement else None,
                "table_cells": r.measurement.analytic_table_cells if r.measurement else None,
                "energy_ws": r.measurement.energy_ws if r.measurement else None,
                "peak_memory_mb": r.measurement.peak_memory_mb if r.measurement else None,
            }
            for r in scaling
        ],
    }
    if timestamp is not None:
        audit["timestamp"] = timestamp
    label = CareLabel(theory=theory, implementation=implementation, audit=audit)
    return label, scaling
