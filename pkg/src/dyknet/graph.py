"""Directed communication topology with validation and adjacency queries.

Node ids are 1-based at the API and file-format level (configs, traces);
array attributes used by the kernels (``edge_src``/``edge_dst``) are 0-based.
"""

from dataclasses import dataclass, field

import numpy as np


class GraphError(ValueError):
    """Base class for topology validation failures."""


class InvalidEndpointError(GraphError):
    pass


class SelfLoopError(GraphError):
    pass


class DuplicateEdgeError(GraphError):
    pass


class NotStronglyConnectedError(GraphError):
    pass


class InvalidNodeError(GraphError):
    pass


class InvalidEdgeError(GraphError):
    pass


@dataclass(frozen=True, eq=False)
class GraphTopology:
    """Validated strongly connected directed graph.

    ``edges`` keeps the construction order; adjacency lists are sorted by
    destination id.  Immutable after construction and safe to share.
    """

    node_count: int
    edges: tuple
    out_neighbors_list: tuple = field(repr=False)
    out_degree: tuple = field(repr=False)
    edge_src: np.ndarray = field(repr=False)   # 0-based, kernel layout
    edge_dst: np.ndarray = field(repr=False)
    deg_out_array: np.ndarray = field(repr=False)
    edge_index: dict = field(repr=False)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def nodes(self):
        return range(1, self.node_count + 1)


def build_topology(node_count, edges) -> GraphTopology:
    """Validate and build a topology from 1-based (i, j) edge pairs.

    Raises ``InvalidEndpointError``, ``SelfLoopError``, ``DuplicateEdgeError``
    or ``NotStronglyConnectedError``, naming the offending element.
    """
    if node_count < 1:
        raise InvalidEndpointError(f"node_count must be >= 1, got {node_count}")
    normalized = []
    seen = set()
    for pair in edges:
        i, j = int(pair[0]), int(pair[1])
        if not (1 <= i <= node_count):
            raise InvalidEndpointError(f"edge ({i}, {j}): node {i} not in 1..{node_count}")
        if not (1 <= j <= node_count):
            raise InvalidEndpointError(f"edge ({i}, {j}): node {j} not in 1..{node_count}")
        if i == j:
            raise SelfLoopError(f"edge ({i}, {j}) is a self-loop")
        if (i, j) in seen:
            raise DuplicateEdgeError(f"edge ({i}, {j}) appears more than once")
        seen.add((i, j))
        normalized.append((i, j))

    adjacency = {i: [] for i in range(1, node_count + 1)}
    for i, j in normalized:
        adjacency[i].append(j)
    for i in adjacency:
        adjacency[i].sort()

    _check_strongly_connected(node_count, adjacency, normalized)

    edge_src = np.array([i - 1 for i, _ in normalized], dtype=np.int64)
    edge_dst = np.array([j - 1 for _, j in normalized], dtype=np.int64)
    deg_out = np.zeros(node_count, dtype=np.int64)
    for i, _ in normalized:
        deg_out[i - 1] += 1
    edge_index = {pair: e for e, pair in enumerate(normalized)}
    return GraphTopology(
        node_count=node_count,
        edges=tuple(normalized),
        out_neighbors_list=tuple(tuple(adjacency[i]) for i in range(1, node_count + 1)),
        out_degree=tuple(int(deg_out[i]) for i in range(node_count)),
        edge_src=edge_src,
        edge_dst=edge_dst,
        deg_out_array=deg_out,
        edge_index=edge_index,
    )


def _reachable_from(start, node_count, succ):
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        for w in succ[u]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return seen


def _check_strongly_connected(node_count, adjacency, edges):
    # two passes from node 1: forward reach + reverse reach cover all nodes
    forward = _reachable_from(1, node_count, adjacency)
    if len(forward) != node_count:
        missing = min(set(range(1, node_count + 1)) - forward)
        raise NotStronglyConnectedError(f"node {missing} is not reachable from node 1")
    reverse = {i: [] for i in range(1, node_count + 1)}
    for i, j in edges:
        reverse[j].append(i)
    backward = _reachable_from(1, node_count, reverse)
    if len(backward) != node_count:
        missing = min(set(range(1, node_count + 1)) - backward)
        raise NotStronglyConnectedError(f"node {missing} cannot reach node 1")


def out_neighbors(g: GraphTopology, i: int):
    """Out-neighbors of node ``i`` in ascending id order."""
    if not (1 <= i <= g.node_count):
        raise InvalidNodeError(f"node {i} not in 1..{g.node_count}")
    return list(g.out_neighbors_list[i - 1])


def out_degree(g: GraphTopology, i: int) -> int:
    if not (1 <= i <= g.node_count):
        raise InvalidNodeError(f"node {i} not in 1..{g.node_count}")
    return g.out_degree[i - 1]
