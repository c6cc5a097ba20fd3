"""Likelihood loss, its gradient, and fixed-step gradient-descent fitting.

The negative average log-likelihood of a log-linear pairwise MRF is
``ln Z - mean(score)``; its gradient per table cell is the model marginal
minus the empirical marginal.  Both are parameterized over the inference
backend: the junction tree gives the exact quantities, loopy BP substitutes
its beliefs (and a Bethe ln Z), which is what makes the downstream
reliability checks able to tell the two apart.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
import numpy as np

from .inference import (
    InferenceReport,
    JunctionTree,
    LBPConfig,
    bethe_log_partition,
    build_junction_tree,
    jt_infer,
    lbp_infer,
)
from .mrf import DiscreteMRF, MarginalSet, SampleSet, empirical_marginals

BACKENDS = ("jt", "lbp")


class FitDiverged(RuntimeError):
    """Raised when the loss turns non-finite during fitting (step too large)."""


@dataclass(frozen=True)
class GradientVector:
    """Gradient tables, one per vertex and per edge, shaped like the weights."""

    vertex_tables: tuple[np.ndarray, ...]
    edge_tables: tuple[np.ndarray, ...]

    def l2_norm(self) -> float:
        total = 0.0
        for t in self.vertex_tables:
            total += float(np.square(t).sum())
        for t in self.edge_tables:
            total += float(np.square(t).sum())
        return math.sqrt(total)

    def max_abs(self) -> float:
        vals = [float(np.max(np.abs(t))) for t in (*self.vertex_tables, *self.edge_tables)]
        return max(vals)


@dataclass(frozen=True)
class FitTrace:
    """Per-iteration (nll, gradient L2 norm, step size) records."""

    records: tuple[tuple[float, float, float], ...]

    def __len__(self) -> int:
        return len(self.records)

    @property
    def nll(self) -> tuple[float, ...]:
        return tuple(r[0] for r in self.records)

    @property
    def grad_norm(self) -> tuple[float, ...]:
        return tuple(r[1] for r in self.records)

    def to_csv(self) -> str:
        lines = ["iteration,nll,grad_norm,step"]
        for i, (nll, gn, step) in enumerate(self.records):
            lines.append(f"{i},{nll!r},{gn!r},{step!r}")
        return "\n".join(lines) + "\n"


class InferenceBackend:
    """Resolves a backend name to marginals + ln Z for a fixed graph.

    The junction tree is derived once and reused across calls; with the LBP
    backend ln Z is the Bethe approximation assembled from the beliefs and
    therefore only approximate.
    """

    def __init__(self, name: str, graph, lbp_config: LBPConfig | None = None,
                 cell_cap: int | None = None):
        if name not in BACKENDS:
            raise ValueError(f"unknown backend {name!r}, expected one of {BACKENDS}")
        self.name = name
        self.exact = name == "jt"
        self._lbp_config = lbp_config or LBPConfig()
        self._cell_cap = cell_cap
        self._jt: JunctionTree | None = None
        if name == "jt":
            self._jt = build_junction_tree(graph)

    def infer(self, mrf: DiscreteMRF) -> tuple[MarginalSet, float, InferenceReport]:
        """Returns (marginals, ln Z, report); ln Z is Bethe-approximate for LBP."""
        if self.name == "jt":
            kwargs = {} if self._cell_cap is None else {"cell_cap": self._cell_cap}
            report = jt_infer(mrf, self._jt, **kwargs)
            return report.marginals, float(report.marginals.log_partition), report
        report = lbp_infer(mrf, self._lbp_config)
        return report.marginals, bethe_log_partition(mrf, report.marginals), report


def _resolve_backend(backend, graph) -> InferenceBackend:
    if isinstance(backend, InferenceBackend):
        return backend
    return InferenceBackend(backend, graph)


def _mean_score(mrf: DiscreteMRF, samples: SampleSet) -> float:
    rows = samples.rows
    total = 0.0
    for v, w in enumerate(mrf.vertex_weights):
        total += float(w[rows[:, v]].mean())
    for k, (s, t) in enumerate(mrf.graph.edges):
        total += float(mrf.edge_weights[k][rows[:, s], rows[:, t]].mean())
    return total


def _check_conform(mrf: DiscreteMRF, samples: SampleSet) -> None:
    if samples.graph.cardinalities != mrf.graph.cardinalities or \
            samples.graph.edges != mrf.graph.edges:
        raise ValueError("samples were drawn for a different graph")


def negative_avg_log_likelihood(mrf: DiscreteMRF, samples: SampleSet,
                                backend="jt") -> float:
    """ln Z minus the average unnormalized log-score of the samples."""
    _check_conform(mrf, samples)
    be = _resolve_backend(backend, mrf.graph)
    _, ln_z, _ = be.infer(mrf)
    return ln_z - _mean_score(mrf, samples)


def nll_gradient(mrf: DiscreteMRF, samples: SampleSet, backend="jt") -> GradientVector:
    """Model marginals minus empirical marginals, cell by cell."""
    _check_conform(mrf, samples)
    be = _resolve_backend(backend, mrf.graph)
    model, _, _ = be.infer(mrf)
    data = empirical_marginals(samples)
    vt = tuple(m - e for m, e in zip(model.vertex_marginals, data.vertex_marginals))
    et = tuple(m - e for m, e in zip(model.edge_marginals, data.edge_marginals))
    return GradientVector(vt, et)


def gradient_descent_fit(init: DiscreteMRF, samples: SampleSet, step: float = 0.5,
                         max_iterations: int = 500, grad_tolerance: float = 1e-2,
                         backend="jt") -> tuple[DiscreteMRF, FitTrace]:
    """Fixed-step descent on the NLL; stops at the gradient-norm tolerance.

    The trace records one (nll, grad_norm, step) entry per evaluation,
    including the final point, so a run that starts at a stationary point has
    a single record.  Raises :class:`FitDiverged` on a non-finite loss.
    """
    if step <= 0:
        raise ValueError("step must be > 0")
    if grad_tolerance <= 0:
        raise ValueError("grad_tolerance must be > 0")
    if max_iterations < 0:
        raise ValueError("max_iterations must be >= 0")
    _check_conform(init, samples)
    be = _resolve_backend(backend, init.graph)
    data = empirical_marginals(samples)
    current = init
    records = []
    for it in range(max_iterations + 1):
        model, ln_z, _ = be.infer(current)
        nll = ln_z - _mean_score(current, samples)
        if not math.isfinite(nll):
            raise FitDiverged(f"non-finite loss at iteration {it}; reduce the step size")
        grad = GradientVector(
            tuple(m - e for m, e in zip(model.vertex_marginals, data.vertex_marginals)),
            tuple(m - e for m, e in zip(model.edge_marginals, data.edge_marginals)))
        gn = grad.l2_norm()
        records.append((nll, gn, step))
        if gn < grad_tolerance or it == max_iterations:
            break
        vw = [w - step * g for w, g in zip(current.vertex_weights, grad.vertex_tables)]
        ew = [w - step * g for w, g in zip(current.edge_weights, grad.edge_tables)]
        current = DiscreteMRF(current.graph, vw, ew)
    return current, FitTrace(tuple(records))
