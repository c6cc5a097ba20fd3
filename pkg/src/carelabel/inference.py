"""Exact junction-tree inference and approximate loopy belief propagation.

Both backends consume a :class:`~carelabel.mrf.DiscreteMRF` and produce an
:class:`InferenceReport` whose marginals share the :class:`MarginalSet`
layout, so downstream consumers (training, checks) are backend-agnostic.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .mrf import DiscreteMRF, GraphStructure, MarginalSet

DEFAULT_CLIQUE_CELL_CAP = 2 ** 24

# Soft-clamp offset for evidence conditioning.  exp(-1e9) underflows to
# exactly 0.0 in float64, so clamped states carry no probability mass while
# every weight table stays finite.
CLAMP_OFFSET = -1e9


class CliqueTableTooLarge(MemoryError):
    """Raised when a junction-tree clique table would exceed the cell cap."""


@dataclass(frozen=True)
class JunctionTree:
    """Clique tree of a triangulated graph.

    ``tree_edges`` hold ``(i, j, separator)`` triples indexing into
    ``cliques``.  For disconnected input graphs the edges form one tree per
    connected component (a forest); ``width`` is the maximum over components.
    """

    cliques: tuple[tuple[int, ...], ...]
    tree_edges: tuple[tuple[int, int, tuple[int, ...]], ...]
    width: int
    elimination_order: tuple[int, ...]

    def table_cells(self, graph: GraphStructure) -> int:
        """Total stored table entries: sum over cliques of the state-space product."""
        total = 0
        for cl in self.cliques:
            n = 1
            for v in cl:
                n *= graph.cardinalities[v]
            total += n
        return total


@dataclass(frozen=True)
class LBPConfig:
    """Stopping rule and damping for loopy belief propagation."""

    max_iterations: int = 100
    tolerance: float = 1e-8
    damping: float = 0.0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not (self.tolerance > 0):
            raise ValueError("tolerance must be > 0")
        if not (0.0 <= self.damping < 1.0):
            raise ValueError("damping must be in [0, 1)")


@dataclass(frozen=True)
class InferenceReport:
    """Marginals plus method metadata from one inference run."""

    marginals: MarginalSet
    exact: bool
    converged: bool
    iterations_used: int
    analytic_table_cells: int

    def __post_init__(self):
        if self.exact and not self.converged:
            raise ValueError("exact inference must report converged=True")


def lbp_table_cells(graph: GraphStructure) -> int:
    """Stored message entries for LBP: two directed messages per edge."""
    return 2 * sum(graph.cardinalities[s] + graph.cardinalities[t]
                   for s, t in graph.edges)


# --- junction tree construction ----------------------------------------------

def _min_fill_order(graph: GraphStructure) -> tuple[list[int], list[set[int]]]:
    """Min-fill elimination with lexicographic tie-breaking.

    Returns the order and the elimination cliques ({v} plus its neighbors at
    removal time).  Adjacency is kept as int bitmasks so fill counts are
    popcount work; only vertices whose neighborhood could have changed get
    their fill count recomputed.
    """
    d = graph.vertex_count
    adj = [0] * d
    for s, t in graph.edges:
        adj[s] |= 1 << t
        adj[t] |= 1 << s

    def fill_count(v: int) -> int:
        nv = adj[v]
        count = 0
        rest = nv
        while rest:
            low = rest & -rest
            u = low.bit_length() - 1
            rest ^= low
            # neighbor pairs (u, w) with w > u not already adjacent
            count += (rest & ~adj[u]).bit_count()
        return count

    fills = {v: fill_count(v) for v in range(d)}
    remaining = set(range(d))
    order: list[int] = []
    cliques: list[list[int]] = []
    while remaining:
        v = min(remaining, key=lambda u: (fills[u], u))
        nbrs = adj[v]
        clique = [v]
        rest = nbrs
        while rest:
            low = rest & -rest
            clique.append(low.bit_length() - 1)
            rest ^= low
        cliques.append(sorted(clique))
        # connect the neighbors of v, then drop v
        rest = nbrs
        while rest:
            low = rest & -rest
            u = low.bit_length() - 1
            rest ^= low
            adj[u] = (adj[u] | nbrs) & ~(1 << u) & ~(1 << v)
        remaining.remove(v)
        order.append(v)
        del fills[v]
        # fill counts can only change where adjacency changed: among the old
        # neighbors of v and their neighbors
        dirty = 0
        rest = nbrs
        while rest:
            low = rest & -rest
            u = low.bit_length() - 1
            rest ^= low
            dirty |= (1 << u) | adj[u]
        rest = dirty
        while rest:
            low = rest & -rest
            u = low.bit_length() - 1
            rest ^= low
            if u in fills:
                fills[u] = fill_count(u)
    return order, [set(c) for c in cliques]


def build_junction_tree(graph: GraphStructure) -> JunctionTree:
    """Triangulate (min-fill), extract maximal cliques, connect them by a
    maximum-weight spanning tree on separator sizes."""
    order, elim_cliques = _min_fill_order(graph)
    # keep maximal cliques only, preserving elimination order for determinism
    maximal: list[set[int]] = []
    for i, c in enumerate(elim_cliques):
        contained = False
        for j, other in enumerate(elim_cliques):
            if i != j and c < other:
                contained = True
                break
            if i != j and c == other and j < i:
                contained = True
                break
        if not contained:
            maximal.append(c)
    cliques = [tuple(sorted(c)) for c in maximal]
    # candidate links between overlapping cliques, heaviest separators first
    candidates = []
    for i in range(len(cliques)):
        si = set(cliques[i])
        for j in range(i + 1, len(cliques)):
            sep = si & set(cliques[j])
            if sep:
                candidates.append((-len(sep), i, j, tuple(sorted(sep))))
    candidates.sort()
    parent = list(range(len(cliques)))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    tree_edges = []
    for negw, i, j, sep in candidates:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            tree_edges.append((i, j, sep))
    width = max(len(c) for c in cliques) - 1
    return JunctionTree(tuple(cliques), tuple(tree_edges), width, tuple(order))


def verify_junction_tree(jt: JunctionTree, graph: GraphStructure) -> None:
    """Raise AssertionError unless the tree invariants hold (test helper)."""
    k = len(jt.cliques)
    # forest with one tree per connected component of the clique-overlap graph
    comp = _component_labels(k, [(i, j) for i, j, _ in jt.tree_edges])
    n_components = len(set(comp))
    assert len(jt.tree_edges) == k - n_components, "tree edge count wrong"
    # running intersection: cliques containing each vertex induce a connected subtree
    for v in range(graph.vertex_count):
        holders = [i for i, c in enumerate(jt.cliques) if v in c]
        assert holders, f"vertex {v} not covered"
        sub_edges = [(i, j) for i, j, sep in jt.tree_edges if v in sep]
        labels = _component_labels(len(holders), [
            (holders.index(i), holders.index(j)) for i, j in sub_edges])
        assert len(set(labels)) == 1, f"running intersection fails for vertex {v}"
    for s, t in graph.edges:
        assert any(s in c and t in c for c in jt.cliques), f"edge {(s, t)} uncovered"


def _component_labels(n: int, edges) -> list[int]:
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
    return [find(i) for i in range(n)]


# --- junction tree calibration -----------------------------------------------

def _logaddexp(a: float, b: float) -> float:
    if a < b:
        a, b = b, a
    return a + math.log1p(math.exp(b - a))


def jt_infer(mrf: DiscreteMRF, jt: JunctionTree | None = None,
             cell_cap: int = DEFAULT_CLIQUE_CELL_CAP) -> InferenceReport:
    """Exact marginals and ln Z by sum-product calibration on the clique tree.

    Clique tables are mappings from configuration tuples to log values and
    every product/marginalization step walks the configurations explicitly,
    staying in log-space throughout.  ``jt`` may be passed in to reuse a tree
    built for the same graph; otherwise one is derived here.
    """
    g = mrf.graph
    if jt is None:
        jt = build_junction_tree(g)
    cards = g.cardinalities
    shapes = [tuple(cards[v] for v in cl) for cl in jt.cliques]
    for cl, shape in zip(jt.cliques, shapes):
        if math.prod(shape) > cell_cap:
            raise CliqueTableTooLarge(
                f"clique {cl} needs {math.prod(shape)} cells, cap is {cell_cap}")

    n_cliques = len(jt.cliques)
    index_in = [{v: i for i, v in enumerate(cl)} for cl in jt.cliques]
    holders: list[list[int]] = [[] for _ in range(g.vertex_count)]
    for i, cl in enumerate(jt.cliques):
        for v in cl:
            holders[v].append(i)

    # assign every vertex and edge factor to the smallest covering clique
    vertex_factors: list[list[tuple[int, np.ndarray]]] = [[] for _ in range(n_cliques)]
    edge_factors: list[list[tuple[int, int, np.ndarray]]] = [[] for _ in range(n_cliques)]
    smallest = lambda ids: min(ids, key=lambda i: (len(jt.cliques[i]), i))
    vertex_home = {}
    for v in range(g.vertex_count):
        ci = smallest(holders[v])
        vertex_home[v] = ci
        vertex_factors[ci].append((index_in[ci][v], mrf.vertex_weights[v]))
    edge_home = {}
    for k, (s, t) in enumerate(g.edges):
        ci = smallest([i for i in holders[s] if t in index_in[i]])
        edge_home[k] = ci
        edge_factors[ci].append((index_in[ci][s], index_in[ci][t], mrf.edge_weights[k]))

    # clique tables: configuration tuple -> summed log weight
    tables: list[dict[tuple[int, ...], float]] = []
    for ci in range(n_cliques):
        vfs, efs = vertex_factors[ci], edge_factors[ci]
        tab = {}
        for cfg in itertools.product(*(range(c) for c in shapes[ci])):
            val = 0.0
            for ax, w in vfs:
                val += w[cfg[ax]]
            for ax_s, ax_t, w in efs:
                val += w[cfg[ax_s], cfg[ax_t]]
            tab[cfg] = val
        tables.append(tab)

    # message schedule: BFS from the root of each component, then reversed
    nbrs: list[list[tuple[int, tuple[int, ...]]]] = [[] for _ in range(n_cliques)]
    for i, j, sep in jt.tree_edges:
        nbrs[i].append((j, sep))
        nbrs[j].append((i, sep))
    visited = [False] * n_cliques
    roots = []
    downward = []  # (parent, child, separator) in BFS discovery order
    for r in range(n_cliques):
        if visited[r]:
            continue
        roots.append(r)
        visited[r] = True
        queue = [r]
        while queue:
            i = queue.pop(0)
            for j, sep in nbrs[i]:
                if not visited[j]:
                    visited[j] = True
                    downward.append((i, j, sep))
                    queue.append(j)

    # messages[(i, j)]: separator configuration -> log value, from clique i to j
    messages: dict[tuple[int, int], dict[tuple[int, ...], float]] = {}

    def send(src: int, dst: int, sep: tuple[int, ...]) -> None:
        incoming = []
        for k2, k2_sep in nbrs[src]:
            if k2 != dst and (k2, src) in messages:
                proj = tuple(index_in[src][v] for v in k2_sep)
                incoming.append((messages[(k2, src)], proj))
        sep_proj = tuple(index_in[src][v] for v in sep)
        out: dict[tuple[int, ...], float] = {}
        for cfg, val in tables[src].items():
            for m, proj in incoming:
                val += m[tuple(cfg[i] for i in proj)]
            key = tuple(cfg[i] for i in sep_proj)
            prev = out.get(key)
            out[key] = val if prev is None else _logaddexp(prev, val)
        messages[(src, dst)] = out

    for parent, child, sep in reversed(downward):  # collect: leaves to roots
        send(child, parent, sep)
    for parent, child, sep in downward:  # distribute: roots to leaves
        send(parent, child, sep)

    # calibrated beliefs: clique table plus every incoming message
    beliefs: list[dict[tuple[int, ...], float]] = []
    for ci in range(n_cliques):
        incoming = []
        for k2, k2_sep in nbrs[ci]:
            proj = tuple(index_in[ci][v] for v in k2_sep)
            incoming.append((messages[(k2, ci)], proj))
        b = {}
        for cfg, val in tables[ci].items():
            for m, proj in incoming:
                val += m[tuple(cfg[i] for i in proj)]
            b[cfg] = val
        beliefs.append(b)

    # ln Z per component (any clique of the component gives the same value)
    comp = _component_labels(n_cliques, [(i, j) for i, j, _ in jt.tree_edges])
    ln_z_comp = {}
    for r in roots:
        vals = list(beliefs[r].values())
        m = max(vals)
        ln_z_comp[comp[r]] = m + math.log(math.fsum(math.exp(v - m) for v in vals))
    ln_z = float(sum(ln_z_comp.values()))

    vtabs = []
    for v in range(g.vertex_count):
        ci = vertex_home[v]
        pos = index_in[ci][v]
        acc = [None] * cards[v]
        for cfg, val in beliefs[ci].items():
            i = cfg[pos]
            acc[i] = val if acc[i] is None else _logaddexp(acc[i], val)
        table = np.exp(np.array(acc, dtype=float) - ln_z_comp[comp[ci]])
        vtabs.append(table)
    etabs = []
    for k, (s, t) in enumerate(g.edges):
        ci = edge_home[k]
        pos_s, pos_t = index_in[ci][s], index_in[ci][t]
        acc2 = [[None] * cards[t] for _ in range(cards[s])]
        for cfg, val in beliefs[ci].items():
            row = acc2[cfg[pos_s]]
            j = cfg[pos_t]
            row[j] = val if row[j] is None else _logaddexp(row[j], val)
        table = np.exp(np.array(acc2, dtype=float) - ln_z_comp[comp[ci]])
        etabs.append(table)
    # clear residual float error so the MarginalSet invariants hold tightly
    vtabs = [t / t.sum() for t in vtabs]
    etabs = [t / t.sum() for t in etabs]
    marginals = MarginalSet(vtabs, etabs, log_partition=ln_z)
    return InferenceReport(marginals=marginals, exact=True, converged=True,
                           iterations_used=1,
                           analytic_table_cells=jt.table_cells(g))


# --- loopy belief propagation --------------------------------------------------

def lbp_infer(mrf: DiscreteMRF, config: LBPConfig | None = None, *,
              early_stop: bool = True) -> InferenceReport:
    """Synchronous sum-product message passing with per-message normalization.

    Messages live in linear space, normalized to sum 1 after every round;
    the update is damped as ``new = (1 - damping) * update + damping * old``.
    Convergence means the max absolute message change dropped below the
    tolerance within the iteration budget; non-convergence is reported, not
    raised.  With ``early_stop=False`` the full iteration budget always runs
    (the measurement mode for runtime bound checks, whose reference cost
    formula is stated for a fixed iteration count).  The report's marginals
    carry no ln Z.
    """
    if config is None:
        config = LBPConfig()
    g = mrf.graph
    d = g.vertex_count
    n_edges = g.edge_count
    cards = np.array(g.cardinalities)
    xm = int(cards.max())
    uniform_cards = bool(np.all(cards == xm))

    if n_edges == 0:
        vtabs = []
        for v in range(d):
            p = np.exp(mrf.vertex_weights[v] - mrf.vertex_weights[v].max())
            vtabs.append(p / p.sum())
        marg = MarginalSet(vtabs, [], log_partition=None)
        return InferenceReport(marg, exact=False, converged=True,
                               iterations_used=1, analytic_table_cells=0)

    # directed message m = 2k goes s->t (a table over X_t), m = 2k+1 goes t->s.
    edge_arr = np.asarray(g.edges, dtype=np.intp)
    src = np.empty(2 * n_edges, dtype=np.intp)
    dst = np.empty(2 * n_edges, dtype=np.intp)
    src[0::2], dst[0::2] = edge_arr[:, 0], edge_arr[:, 1]
    src[1::2], dst[1::2] = edge_arr[:, 1], edge_arr[:, 0]
    rev = np.arange(2 * n_edges) ^ 1  # opposite direction of each message

    # potentials, exp'd after a per-table max shift (scale invariant)
    if uniform_cards:
        w = np.stack(mrf.vertex_weights)
        vpot = np.exp(w - w.max(axis=1, keepdims=True))
        ew = np.stack(mrf.edge_weights)
        e = np.exp(ew - ew.max(axis=(1, 2), keepdims=True))
        pot = np.empty((2 * n_edges, xm, xm))
        pot[0::2] = e
        pot[1::2] = e.transpose(0, 2, 1)
        has_pad = False
        pad = None
        messages = np.full((2 * n_edges, xm), 1.0 / xm)
    else:
        vpot = np.zeros((d, xm))
        for v in range(d):
            w = mrf.vertex_weights[v]
            vpot[v, : cards[v]] = np.exp(w - w.max())
        pot = np.zeros((2 * n_edges, xm, xm))
        for k, (s, t) in enumerate(g.edges):
            w = mrf.edge_weights[k]
            e = np.exp(w - w.max())
            pot[2 * k, : cards[s], : cards[t]] = e
            pot[2 * k + 1, : cards[t], : cards[s]] = e.T
        # padded entries of messages are fixed at 1 so products stay neutral
        pad = np.zeros((2 * n_edges, xm), dtype=bool)
        for m in range(2 * n_edges):
            pad[m, cards[dst[m]]:] = True
        has_pad = bool(pad.any())
        messages = np.ones((2 * n_edges, xm))
        for m in range(2 * n_edges):
            messages[m, : cards[dst[m]]] = 1.0 / cards[dst[m]]

    # incoming-product bookkeeping: messages grouped by destination vertex
    by_dst = np.argsort(dst, kind="stable")
    group_starts = np.searchsorted(dst[by_dst], np.arange(d))
    lam = config.damping

    converged = False
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        prods = np.multiply.reduceat(messages[by_dst], group_starts, axis=0)
        belief = vpot * prods
        out = belief[src] / messages[rev]
        update = np.einsum("mij,mi->mj", pot, out)
        update /= update.sum(axis=1, keepdims=True)
        if has_pad:
            update[pad] = 1.0
        if lam > 0.0:
            update = (1.0 - lam) * update + lam * messages
        delta = float(np.max(np.abs(update - messages)))
        messages = update
        if delta < config.tolerance:
            converged = True
            if early_stop:
                break

    prods = np.multiply.reduceat(messages[by_dst], group_starts, axis=0)
    belief = vpot * prods
    if has_pad:
        for v in range(d):
            belief[v, cards[v]:] = 0.0
    belief /= belief.sum(axis=1, keepdims=True)
    vtabs = [belief[v, : cards[v]].copy() for v in range(d)]

    # edge belief: potential joined with both endpoint beliefs, each divided
    # by the message that crossed this edge toward the endpoint
    safe = np.where(messages > 0, messages, 1.0)
    out = belief[src] / safe[rev]
    even = np.arange(0, 2 * n_edges, 2)
    tabs = pot[even] * out[even][:, :, None] * out[even + 1][:, None, :]
    tabs /= tabs.sum(axis=(1, 2), keepdims=True)
    etabs = [tabs[k, : cards[s], : cards[t]] for k, (s, t) in enumerate(g.edges)]
    marg = MarginalSet(vtabs, etabs, log_partition=None)
    return InferenceReport(marg, exact=False, converged=converged,
                           iterations_used=iterations,
                           analytic_table_cells=lbp_table_cells(g))


def bethe_log_partition(mrf: DiscreteMRF, marginals: MarginalSet) -> float:
    """Bethe approximation of ln Z assembled from vertex and edge beliefs."""
    g = mrf.graph
    deg = np.zeros(g.vertex_count, dtype=int)
    for s, t in g.edges:
        deg[s] += 1
        deg[t] += 1

    def entropy(p: np.ndarray) -> float:
        nz = p[p > 0]
        return float(-(nz * np.log(nz)).sum())

    energy = 0.0
    for v in range(g.vertex_count):
        energy += float(marginals.vertex_marginals[v] @ mrf.vertex_weights[v])
    for k in range(g.edge_count):
        energy += float((marginals.edge_marginals[k] * mrf.edge_weights[k]).sum())
    ent = 0.0
    for k in range(g.edge_count):
        ent += entropy(marginals.edge_marginals[k])
    for v in range(g.vertex_count):
        ent -= (deg[v] - 1) * entropy(marginals.vertex_marginals[v])
    return energy + ent


# --- evidence -------------------------------------------------------------------

def condition(mrf: DiscreteMRF, evidence: Mapping[int, int]) -> DiscreteMRF:
    """Soft-clamp evidence vertices by offsetting their non-evidence states.

    Returns a model over the same graph whose inference results are the
    conditionals given the evidence.  The graph shape is untouched, so
    junction trees and LBP structures remain reusable.
    """
    if not evidence:
        return mrf
    g = mrf.graph
    for v, s in evidence.items():
        if not (0 <= v < g.vertex_count):
            raise ValueError(f"evidence names unknown vertex {v}")
        if not (0 <= s < g.cardinalities[v]):
            raise ValueError(f"evidence state {s} out of range for vertex {v}")
    vw = []
    for v, tab in enumerate(mrf.vertex_weights):
        if v in evidence:
            new = tab + CLAMP_OFFSET
            new[evidence[v]] = tab[evidence[v]]
            vw.append(new)
        else:
            vw.append(tab)
    return DiscreteMRF(g, vw, mrf.edge_weights)
