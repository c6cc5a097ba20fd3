"""Bound checks: distribution recovery, fit convergence, and complexity fits.

A check compares an implementation against something theory promises -- that
exact inference reproduces the true marginals, that the convex likelihood fit
reaches a small gradient norm, and that measured runtime/memory follow the
expected asymptotic class.  Every check returns a :class:`CheckResult` whose
``passed`` bit aggregates over all datasets it saw.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .inference import LBPConfig, jt_infer, lbp_infer
from .mrf import DiscreteMRF, GraphStructure, SampleSet, marginals_bruteforce
from .training import gradient_descent_fit

KL_FLOOR = 1e-300


@dataclass(frozen=True)
class CheckConfig:
    """Thresholds for the bound checks; all of them end up on the label."""

    kl_threshold: float = 1e-3
    grad_norm_threshold: float = 1e-2
    fit_budget: int = 500
    decisiveness_margin: float = 0.8
    fit_step: float = 0.5

    def __post_init__(self):
        if not (self.kl_threshold > 0):
            raise ValueError("kl_threshold must be > 0")
        if not (self.grad_norm_threshold > 0):
            raise ValueError("grad_norm_threshold must be > 0")
        if self.fit_budget < 0:
            raise ValueError("fit_budget must be >= 0")
        if not (0 < self.decisiveness_margin <= 1):
            raise ValueError("decisiveness_margin must be in (0, 1]")


@dataclass(frozen=True)
class ComplexityClass:
    """A named asymptotic class with its feature map f(n)."""

    name: str
    feature: Callable[[np.ndarray], np.ndarray] = field(compare=False)

    def __repr__(self):
        return f"ComplexityClass({self.name!r})"


CONSTANT = ComplexityClass("constant", lambda n: np.ones_like(n))
LINEAR = ComplexityClass("linear", lambda n: n)
LINEARITHMIC = ComplexityClass("linearithmic", lambda n: n * np.log(n))
QUADRATIC = ComplexityClass("quadratic", lambda n: n ** 2)
CUBIC = ComplexityClass("cubic", lambda n: n ** 3)
EXPONENTIAL = ComplexityClass("exponential", lambda n: 2.0 ** n)

CANDIDATE_CLASSES = (CONSTANT, LINEAR, LINEARITHMIC, QUADRATIC, CUBIC, EXPONENTIAL)
_BY_NAME = {c.name: c for c in CANDIDATE_CLASSES}


def complexity_class(name: str) -> ComplexityClass:
    try:
        return _BY_NAME[name]
    except KeyError:
        raise ValueError(f"unknown complexity class {name!r}") from None


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one bound check, with per-dataset detail.

    ``passed`` holds only if every per-dataset entry passed.
    """

    check_id: str
    passed: bool
    metric: float
    threshold_or_expected: float | str
    per_dataset: tuple[tuple[str, bool, float], ...]
    note: str = ""

    def __post_init__(self):
        if self.per_dataset:
            agg = all(ok for _, ok, _ in self.per_dataset)
            if agg != self.passed:
                raise ValueError("passed bit must equal the all-datasets aggregate")

    def to_dict(self) -> dict:
        return {
            "check_id": self.check_id,
            "passed": self.passed,
            "metric": self.metric,
            "threshold_or_expected": self.threshold_or_expected,
            "per_dataset": [
                {"dataset": d, "passed": ok, "metric": m}
                for d, ok, m in self.per_dataset
            ],
            "note": self.note,
        }


def merge_check_results(check_id: str, results: Sequence[CheckResult]) -> CheckResult:
    """Fold per-dataset results of the same check into one aggregate result."""
    if not results:
        raise ValueError("nothing to merge")
    per = tuple(row for r in results for row in r.per_dataset)
    threshold = results[0].threshold_or_expected
    notes = "; ".join(r.note for r in results if r.note)
    return CheckResult(
        check_id=check_id,
        passed=all(ok for _, ok, _ in per),
        metric=max(m for _, _, m in per),
        threshold_or_expected=threshold,
        per_dataset=per,
        note=notes,
    )


def table_kl(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || q) over one probability table; zero-mass p entries contribute 0."""
    p = np.asarray(p, float).ravel()
    q = np.maximum(np.asarray(q, float).ravel(), KL_FLOOR)
    nz = p > 0
    return float(np.sum(p[nz] * (np.log(p[nz]) - np.log(q[nz]))))


def distribution_recovery_check(true_mrf: DiscreteMRF, backend: str,
                                config: CheckConfig | None = None,
                                dataset_id: str = "dataset0",
                                enumeration_cap: int | None = None,
                                lbp_config: LBPConfig | None = None) -> CheckResult:
    """Max KL between brute-force marginals and backend marginals at the true
    parameters, over every vertex and edge table."""
    config = config or CheckConfig()
    kwargs = {} if enumeration_cap is None else {"cap": enumeration_cap}
    truth = marginals_bruteforce(true_mrf, **kwargs)
    if backend == "jt":
        approx = jt_infer(true_mrf).marginals
    elif backend == "lbp":
        approx = lbp_infer(true_mrf, lbp_config or LBPConfig()).marginals
    else:
        raise ValueError(f"unknown backend {backend!r}")
    worst = 0.0
    for p, q in zip(truth.vertex_marginals, approx.vertex_marginals):
        worst = max(worst, table_kl(p, q))
    for p, q in zip(truth.edge_marginals, approx.edge_marginals):
        worst = max(worst, table_kl(p, q))
    ok = worst < config.kl_threshold
    return CheckResult(
        check_id="distribution_recovery",
        passed=ok,
        metric=worst,
        threshold_or_expected=config.kl_threshold,
        per_dataset=((dataset_id, ok, worst),),
    )


def convergence_check(backend: str, true_graph: GraphStructure,
                      samples: SampleSet, config: CheckConfig | None = None,
                      dataset_id: str = "dataset0") -> CheckResult:
    """Fit from zero weights on the true structure; the final gradient norm
    must fall under the threshold within the iteration budget."""
    config = config or CheckConfig()
    init = DiscreteMRF(
        true_graph,
        [np.zeros(c) for c in true_graph.cardinalities],
        [np.zeros((true_graph.cardinalities[s], true_graph.cardinalities[t]))
         for s, t in true_graph.edges])
    _, trace = gradient_descent_fit(
        init, samples, step=config.fit_step, max_iterations=config.fit_budget,
        grad_tolerance=config.grad_norm_threshold, backend=backend)
    final = trace.records[-1][1]
    ok = final < config.grad_norm_threshold
    return CheckResult(
        check_id="convergence",
        passed=ok,
        metric=final,
        threshold_or_expected=config.grad_norm_threshold,
        per_dataset=((dataset_id, ok, final),),
    )


def _loo_score(f: np.ndarray, y: np.ndarray) -> float:
    """Leave-one-out RMSE of y ~ a*f + b with a clamped to >= 0, over mean(y)."""
    n = len(y)
    errs = np.empty(n)
    idx = np.arange(n)
    for i in range(n):
        mask = idx != i
        fi, yi = f[mask], y[mask]
        a_mat = np.column_stack([fi, np.ones(n - 1)])
        coef, *_ = np.linalg.lstsq(a_mat, yi, rcond=None)
        a, b = float(coef[0]), float(coef[1])
        if a < 0.0:
            a, b = 0.0, float(yi.mean())
        errs[i] = (a * f[i] + b) - y[i]
    return float(np.sqrt(np.mean(np.square(errs))) / np.mean(y))


def fit_complexity_class(points: Sequence[tuple[float, float]],
                         candidates: Sequence[ComplexityClass] = CANDIDATE_CLASSES,
                         margin: float = 0.8,
                         ) -> tuple[ComplexityClass, bool, dict[str, float]]:
    """Pick the candidate class whose regression best explains (n, y) points.

    Each candidate is scored by the leave-one-out RMSE of ``y ~ a*f(n) + b``
    (slope clamped nonnegative), normalized by mean(y).  A growth class is
    only eligible when it beats the constant-fit null by the decisiveness
    margin -- otherwise its feature explains nothing and a flat curve would
    tie every nested candidate.  The winner is decisive when its score is at
    most ``margin`` times the runner-up's.  Ties break in candidate order.
    """
    if not (0 < margin <= 1):
        raise ValueError("margin must be in (0, 1]")
    ns = np.array([float(p[0]) for p in points])
    ys = np.array([float(p[1]) for p in points])
    if len(set(ns.tolist())) < 4:
        raise ValueError("need at least 4 distinct sizes to fit a complexity class")
    if np.any(ys < 0):
        raise ValueError("resource values must be >= 0")
    scores = {c.name: _loo_score(c.feature(ns), ys) for c in candidates}
    null_score = _loo_score(np.ones_like(ns), ys)
    eligible = {}
    for c in candidates:
        s = scores[c.name]
        if c.name != "constant" and not (s <= margin * null_score):
            s = math.inf
        eligible[c.name] = s
    order = list(candidates)
    best = min(order, key=lambda c: eligible[c.name])
    rest = [eligible[c.name] for c in order if c is not best]
    second = min(rest) if rest else math.inf
    decisive = bool(eligible[best.name] <= margin * second)
    return best, decisive, scores


def performance_bound_check(measurements: Sequence[tuple[float, float]],
                            expected: ComplexityClass, resource: str,
                            config: CheckConfig | None = None) -> CheckResult:
    """Passes when the decisive best-fit class equals the expected one."""
    config = config or CheckConfig()
    if resource not in ("runtime", "memory"):
        raise ValueError("resource must be 'runtime' or 'memory'")
    best, decisive, scores = fit_complexity_class(
        measurements, margin=config.decisiveness_margin)
    ok = decisive and best.name == expected.name
    note = f"best={best.name} decisive={decisive}"
    return CheckResult(
        check_id=f"{resource}_bound",
        passed=ok,
        metric=scores[best.name],
        threshold_or_expected=expected.name,
        per_dataset=((f"{resource}_scaling", ok, scores[best.name]),),
        note=note,
    )
