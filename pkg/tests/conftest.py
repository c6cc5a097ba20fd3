import itertools

import numpy as np

from carelabel.mrf import DiscreteMRF, GraphStructure


def seeded_mrf(graph: GraphStructure, seed: int, scale: float = 1.0) -> DiscreteMRF:
    """Random finite weights for an arbitrary graph, deterministic per seed."""
    rng = np.random.Generator(np.random.PCG64(seed))
    vw = [rng.uniform(-scale, scale, size=c) for c in graph.cardinalities]
    ew = [rng.uniform(-scale, scale, size=(graph.cardinalities[s], graph.cardinalities[t]))
          for s, t in graph.edges]
    return DiscreteMRF(graph, vw, ew)


def chain_graph(d: int, cardinality: int = 2) -> GraphStructure:
    return GraphStructure([cardinality] * d, [(i, i + 1) for i in range(d - 1)])


def star_graph(leaves: int, cardinality: int = 2) -> GraphStructure:
    return GraphStructure([cardinality] * (leaves + 1), [(0, i + 1) for i in range(leaves)])


def grid_graph(rows: int, cols: int, cardinality: int = 2) -> GraphStructure:
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append((v, v + 1))
            if r + 1 < rows:
                edges.append((v, v + cols))
    return GraphStructure([cardinality] * (rows * cols), edges)


def small_graph_zoo(max_vertices: int = 12):
    """Chains, stars, and grids up to 3x4, binary and ternary."""
    zoo = []
    for card in (2, 3):
        zoo.append(chain_graph(3, card))
        zoo.append(chain_graph(5, card))
        zoo.append(star_graph(4, card))
        zoo.append(grid_graph(2, 2, card))
        zoo.append(grid_graph(2, 3, card))
        zoo.append(grid_graph(3, 3, card))
        zoo.append(grid_graph(3, 4, card))
    return [g for g in zoo if g.vertex_count <= max_vertices]


def enumerate_joint(mrf: DiscreteMRF):
    """Plain-python enumeration of (assignment, unnormalized probability).

    Independent of the package's chunked enumeration: nested tuples via
    itertools, scalar math only.
    """
    import math

    cards = mrf.graph.cardinalities
    for x in itertools.product(*(range(c) for c in cards)):
        score = 0.0
        for v in range(len(cards)):
            score += float(mrf.vertex_weights[v][x[v]])
        for k, (s, t) in enumerate(mrf.graph.edges):
            score += float(mrf.edge_weights[k][x[s], x[t]])
        yield x, math.exp(score)


def max_table_gap(tabs_a, tabs_b) -> float:
    return max(float(np.max(np.abs(a - b))) for a, b in zip(tabs_a, tabs_b))
