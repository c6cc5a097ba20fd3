"""Discrete pairwise Markov random fields.

The model is log-linear: every vertex carries a weight table over its states
and every edge a weight table over state pairs, all in log-space.  The joint
density is proportional to exp of the summed table entries.  This module also
provides brute-force enumeration oracles (partition function, marginals) and
a Gibbs sampler for generating synthetic data.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

DEFAULT_ENUMERATION_CAP = 2 ** 24
_ENUM_CHUNK = 2 ** 15


class StateSpaceTooLarge(ValueError):
    """Raised when a brute-force oracle would enumerate too many configurations."""


@dataclass(frozen=True)
class GraphStructure:
    """Undirected graph with per-vertex state-space sizes.

    Edges are stored as (s, t) pairs with s < t; duplicates and self-loops
    are rejected.
    """

    cardinalities: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]

    def __init__(self, cardinalities: Sequence[int], edges: Iterable[Sequence[int]]):
        cards = tuple(int(c) for c in cardinalities)
        if len(cards) < 1:
            raise ValueError("graph needs at least one vertex")
        for v, c in enumerate(cards):
            if c < 2:
                raise ValueError(f"vertex {v} has cardinality {c}, need >= 2")
        d = len(cards)
        norm = []
        seen = set()
        for e in edges:
            s, t = int(e[0]), int(e[1])
            if s == t:
                raise ValueError(f"self-loop at vertex {s}")
            if not (0 <= s < d and 0 <= t < d):
                raise ValueError(f"edge ({s}, {t}) has endpoint outside [0, {d})")
            key = (min(s, t), max(s, t))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
            norm.append(key)
        object.__setattr__(self, "cardinalities", cards)
        object.__setattr__(self, "edges", tuple(norm))

    @property
    def vertex_count(self) -> int:
        return len(self.cardinalities)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def max_cardinality(self) -> int:
        return max(self.cardinalities)

    @property
    def max_degree(self) -> int:
        deg = [0] * self.vertex_count
        for s, t in self.edges:
            deg[s] += 1
            deg[t] += 1
        return max(deg) if deg else 0

    def neighbors(self) -> list[list[int]]:
        """Adjacency lists, each sorted ascending."""
        adj: list[list[int]] = [[] for _ in range(self.vertex_count)]
        for s, t in self.edges:
            adj[s].append(t)
            adj[t].append(s)
        for lst in adj:
            lst.sort()
        return adj

    def state_space_size(self) -> int:
        n = 1
        for c in self.cardinalities:
            n *= c
        return n


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(np.asarray(arr, dtype=float))
    if out.flags.writeable:
        # never mutate caller-owned storage; freeze a private copy instead
        out = out.copy()
        out.flags.writeable = False
    return out


@dataclass(frozen=True)
class DiscreteMRF:
    """Pairwise MRF: a graph plus log-space weight tables.

    ``vertex_weights[v]`` has shape ``(card[v],)`` and ``edge_weights[k]`` has
    shape ``(card[s], card[t])`` for the k-th edge ``(s, t)``.  All entries
    must be finite.
    """

    graph: GraphStructure
    vertex_weights: tuple[np.ndarray, ...]
    edge_weights: tuple[np.ndarray, ...]

    def __init__(self, graph: GraphStructure,
                 vertex_weights: Sequence[np.ndarray],
                 edge_weights: Sequence[np.ndarray]):
        if len(vertex_weights) != graph.vertex_count:
            raise ValueError("need exactly one weight table per vertex")
        if len(edge_weights) != graph.edge_count:
            raise ValueError("need exactly one weight table per edge")
        vw = []
        for v, tab in enumerate(vertex_weights):
            a = _freeze(tab)
            if a.shape != (graph.cardinalities[v],):
                raise ValueError(
                    f"vertex {v} weight table has shape {a.shape}, "
                    f"expected ({graph.cardinalities[v]},)")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"vertex {v} weight table has non-finite entries")
            vw.append(a)
        ew = []
        for k, (s, t) in enumerate(graph.edges):
            a = _freeze(edge_weights[k])
            want = (graph.cardinalities[s], graph.cardinalities[t])
            if a.shape != want:
                raise ValueError(
                    f"edge {(s, t)} weight table has shape {a.shape}, expected {want}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"edge {(s, t)} weight table has non-finite entries")
            ew.append(a)
        object.__setattr__(self, "graph", graph)
        object.__setattr__(self, "vertex_weights", tuple(vw))
        object.__setattr__(self, "edge_weights", tuple(ew))

    def with_weights(self, vertex_weights, edge_weights) -> "DiscreteMRF":
        return DiscreteMRF(self.graph, vertex_weights, edge_weights)


@dataclass(frozen=True)
class SampleSet:
    """N joint assignments, one row per sample, one column per vertex."""

    rows: np.ndarray
    graph: GraphStructure

    def __init__(self, rows: np.ndarray, graph: GraphStructure):
        arr = np.ascontiguousarray(np.asarray(rows, dtype=np.int64))
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise ValueError("rows must be a non-empty 2-D array")
        if arr.shape[1] != graph.vertex_count:
            raise ValueError(
                f"rows have {arr.shape[1]} columns, graph has {graph.vertex_count} vertices")
        for v, c in enumerate(graph.cardinalities):
            col = arr[:, v]
            if col.min() < 0 or col.max() >= c:
                raise ValueError(f"sample states for vertex {v} outside [0, {c})")
        if arr.flags.writeable:
            arr = arr.copy()
            arr.flags.writeable = False
        object.__setattr__(self, "rows", arr)
        object.__setattr__(self, "graph", graph)

    @property
    def size(self) -> int:
        return self.rows.shape[0]


@dataclass(frozen=True)
class MarginalSet:
    """Per-vertex and per-edge probability tables, optionally with ln Z.

    Edge tables are aligned with ``graph.edges``: table k is indexed
    ``[x_s, x_t]`` for the k-th edge ``(s, t)``.
    """

    vertex_marginals: tuple[np.ndarray, ...]
    edge_marginals: tuple[np.ndarray, ...]
    log_partition: float | None = None

    def __init__(self, vertex_marginals, edge_marginals, log_partition=None):
        vm = tuple(_freeze(t) for t in vertex_marginals)
        em = tuple(_freeze(t) for t in edge_marginals)
        for tab in (*vm, *em):
            if tab.min() < -1e-12:
                raise ValueError("marginal table has negative entries")
            if abs(float(tab.sum()) - 1.0) > 1e-9:
                raise ValueError(f"marginal table sums to {tab.sum()}, expected 1")
        object.__setattr__(self, "vertex_marginals", vm)
        object.__setattr__(self, "edge_marginals", em)
        object.__setattr__(self, "log_partition",
                           None if log_partition is None else float(log_partition))

    def max_consistency_gap(self, graph: GraphStructure) -> float:
        """Largest |edge-table row/col sum - vertex marginal| over all edges.

        Zero (up to float error) for exact producers; approximate producers
        may violate consistency.
        """
        gap = 0.0
        for k, (s, t) in enumerate(graph.edges):
            tab = self.edge_marginals[k]
            gap = max(gap, float(np.max(np.abs(tab.sum(axis=1) - self.vertex_marginals[s]))))
            gap = max(gap, float(np.max(np.abs(tab.sum(axis=0) - self.vertex_marginals[t]))))
        return gap


def build_grid_mrf(rows: int, cols: int, cardinality: int = 2,
                   init: str = "zeros", low: float = -0.5, high: float = 0.5,
                   seed: int = 0) -> DiscreteMRF:
    """Grid-structured MRF with ``rows * cols`` vertices.

    Vertex (r, c) has index ``r * cols + c``; edges connect horizontal and
    vertical neighbors.  ``init`` is either ``"zeros"`` or ``"uniform"``
    (all weights i.i.d. uniform on [low, high), seeded, PCG64).
    """
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    if cardinality < 2:
        raise ValueError("cardinality must be >= 2")
    if rows * cols > 10 ** 6:
        raise ValueError("grid too large to allocate weight tables for")
    d = rows * cols
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append((v, v + 1))
            if r + 1 < rows:
                edges.append((v, v + cols))
    graph = GraphStructure([cardinality] * d, edges)
    if init == "zeros":
        vw = [np.zeros(cardinality) for _ in range(d)]
        ew = [np.zeros((cardinality, cardinality)) for _ in edges]
    elif init == "uniform":
        rng = np.random.Generator(np.random.PCG64(seed))
        vw = [rng.uniform(low, high, size=cardinality) for _ in range(d)]
        ew = [rng.uniform(low, high, size=(cardinality, cardinality)) for _ in edges]
    else:
        raise ValueError(f"unknown init {init!r}, use 'zeros' or 'uniform'")
    return DiscreteMRF(graph, vw, ew)


def _check_assignment(mrf: DiscreteMRF, x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.int64)
    if arr.shape != (mrf.graph.vertex_count,):
        raise ValueError(f"assignment has shape {arr.shape}, "
                         f"expected ({mrf.graph.vertex_count},)")
    for v, c in enumerate(mrf.graph.cardinalities):
        if not (0 <= arr[v] < c):
            raise ValueError(f"state {arr[v]} out of range for vertex {v}")
    return arr


def unnormalized_log_score(mrf: DiscreteMRF, x) -> float:
    """Sum of vertex and edge weight-table entries selected by assignment x."""
    arr = _check_assignment(mrf, x)
    total = 0.0
    for v, tab in enumerate(mrf.vertex_weights):
        total += tab[arr[v]]
    for k, (s, t) in enumerate(mrf.graph.edges):
        total += mrf.edge_weights[k][arr[s], arr[t]]
    return float(total)


def _enumerate_scores(mrf: DiscreteMRF):
    """Yield (states, scores) chunks covering the whole joint state space.

    ``states`` is (chunk, d) int64 in mixed-radix order (vertex 0 slowest),
    ``scores`` the unnormalized log-scores, both vectorized per chunk.
    """
    cards = mrf.graph.cardinalities
    d = len(cards)
    total = mrf.graph.state_space_size()
    # radix factor per vertex: index // factor % card
    factors = [0] * d
    f = 1
    for v in range(d - 1, -1, -1):
        factors[v] = f
        f *= cards[v]
    for start in range(0, total, _ENUM_CHUNK):
        idx = np.arange(start, min(start + _ENUM_CHUNK, total), dtype=np.int64)
        states = np.empty((idx.size, d), dtype=np.int64)
        for v in range(d):
            states[:, v] = (idx // factors[v]) % cards[v]
        scores = np.zeros(idx.size)
        for v in range(d):
            scores += mrf.vertex_weights[v][states[:, v]]
        for k, (s, t) in enumerate(mrf.graph.edges):
            scores += mrf.edge_weights[k][states[:, s], states[:, t]]
        yield states, scores


def _require_under_cap(mrf: DiscreteMRF, cap: int) -> None:
    n = mrf.graph.state_space_size()
    if n > cap:
        raise StateSpaceTooLarge(
            f"state space has {n} configurations, cap is {cap}; "
            "use junction-tree inference instead")


def partition_function_bruteforce(mrf: DiscreteMRF,
                                  cap: int = DEFAULT_ENUMERATION_CAP) -> float:
    """ln Z by exact enumeration (log-sum-exp accumulated in chunks)."""
    _require_under_cap(mrf, cap)
    chunk_lse = []
    for _, scores in _enumerate_scores(mrf):
        m = scores.max()
        chunk_lse.append(m + math.log(np.exp(scores - m).sum()))
    arr = np.array(chunk_lse)
    m = arr.max()
    return float(m + math.log(np.exp(arr - m).sum()))


def marginals_bruteforce(mrf: DiscreteMRF,
                         cap: int = DEFAULT_ENUMERATION_CAP) -> MarginalSet:
    """Exact vertex and edge marginals plus ln Z by enumeration."""
    _require_under_cap(mrf, cap)
    ln_z = partition_function_bruteforce(mrf, cap)
    g = mrf.graph
    vtabs = [np.zeros(c) for c in g.cardinalities]
    etabs = [np.zeros((g.cardinalities[s], g.cardinalities[t])) for s, t in g.edges]
    for states, scores in _enumerate_scores(mrf):
        p = np.exp(scores - ln_z)
        for v in range(g.vertex_count):
            np.add.at(vtabs[v], states[:, v], p)
        for k, (s, t) in enumerate(g.edges):
            np.add.at(etabs[k], (states[:, s], states[:, t]), p)
    # renormalize away the accumulated float rounding
    vtabs = [t / t.sum() for t in vtabs]
    etabs = [t / t.sum() for t in etabs]
    return MarginalSet(vtabs, etabs, log_partition=ln_z)


def gibbs_sample(mrf: DiscreteMRF, n: int, burn_in: int = 1000,
                 thinning: int = 1, seed: int = 0) -> SampleSet:
    """Single-site Gibbs sampler with fixed sweep order 0..d-1.

    Starts from the all-zeros state, discards ``burn_in`` full sweeps, then
    keeps every ``thinning``-th sweep until ``n`` samples are collected.
    Deterministic per seed (PCG64).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if burn_in < 0:
        raise ValueError("burn_in must be >= 0")
    if thinning < 1:
        raise ValueError("thinning must be >= 1")
    g = mrf.graph
    d = g.vertex_count
    rng = np.random.Generator(np.random.PCG64(seed))
    # per vertex: list of (edge table oriented with the vertex first, neighbor)
    incident: list[list[tuple[np.ndarray, int]]] = [[] for _ in range(d)]
    for k, (s, t) in enumerate(g.edges):
        tab = mrf.edge_weights[k]
        incident[s].append((tab, t))
        incident[t].append((tab.T, s))
    x = np.zeros(d, dtype=np.int64)
    out = np.empty((n, d), dtype=np.int64)
    kept = 0
    sweeps = burn_in + n * thinning
    uniforms = rng.random(sweeps * d)
    u_pos = 0
    for sweep in range(sweeps):
        for v in range(d):
            logits = mrf.vertex_weights[v].copy()
            for tab, u in incident[v]:
                logits += tab[:, x[u]]
            logits -= logits.max()
            probs = np.exp(logits)
            cum = np.cumsum(probs)
            r = uniforms[u_pos] * cum[-1]
            u_pos += 1
            x[v] = int(np.searchsorted(cum, r, side="right"))
        if sweep >= burn_in and (sweep - burn_in) % thinning == 0:
            out[kept] = x
            kept += 1
    assert kept == n
    return SampleSet(out, g)


def empirical_marginals(samples: SampleSet) -> MarginalSet:
    """Relative state frequencies per vertex and per edge (no ln Z)."""
    g = samples.graph
    n = samples.size
    rows = samples.rows
    vtabs = []
    for v, c in enumerate(g.cardinalities):
        vtabs.append(np.bincount(rows[:, v], minlength=c).astype(float) / n)
    etabs = []
    for s, t in g.edges:
        tab = np.zeros((g.cardinalities[s], g.cardinalities[t]))
        np.add.at(tab, (rows[:, s], rows[:, t]), 1.0)
        etabs.append(tab / n)
    return MarginalSet(vtabs, etabs, log_partition=None)


# --- serialization -----------------------------------------------------------

def mrf_to_json(mrf: DiscreteMRF) -> str:
    """Canonical JSON document for a model (sorted keys, reproducible)."""
    doc = {
        "graph": {
            "vertex_count": mrf.graph.vertex_count,
            "cardinalities": list(mrf.graph.cardinalities),
            "edges": [list(e) for e in mrf.graph.edges],
        },
        "vertex_weights": [t.tolist() for t in mrf.vertex_weights],
        "edge_weights": [t.tolist() for t in mrf.edge_weights],
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def mrf_from_json(text: str) -> DiscreteMRF:
    doc = json.loads(text)
    gdoc = doc["graph"]
    graph = GraphStructure(gdoc["cardinalities"], gdoc["edges"])
    if gdoc.get("vertex_count") not in (None, graph.vertex_count):
        raise ValueError("vertex_count does not match cardinalities length")
    return DiscreteMRF(graph,
                       [np.array(t) for t in doc["vertex_weights"]],
                       [np.array(t) for t in doc["edge_weights"]])


def samples_to_csv(samples: SampleSet) -> str:
    """CSV with header v0,v1,... and one integer row per sample."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"v{v}" for v in range(samples.graph.vertex_count)])
    for row in samples.rows:
        writer.writerow([int(s) for s in row])
    return buf.getvalue()


def samples_from_csv(text: str, graph: GraphStructure) -> SampleSet:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    expected = [f"v{v}" for v in range(graph.vertex_count)]
    if header != expected:
        raise ValueError(f"unexpected CSV header {header!r}")
    rows = [[int(cell) for cell in row] for row in reader if row]
    return SampleSet(np.array(rows, dtype=np.int64), graph)
