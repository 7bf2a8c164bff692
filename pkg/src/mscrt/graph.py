"""Undirected graphs given as neighbour lists, plus the edge-list file format.

Edge-list files hold one edge per line as two 1-based node ids separated by
whitespace or a comma. An optional header line ``p=<int>`` declares the node
count so isolated nodes can exist. Blank lines and ``#`` comments are skipped.
"""

from __future__ import annotations

import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class Graph:
    node_count: int
    adjacency: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if len(self.adjacency) != self.node_count:
            raise ConfigurationError(
                f"adjacency has {len(self.adjacency)} entries for {self.node_count} nodes"
            )
        for i, nbrs in enumerate(self.adjacency):
            for j in nbrs:
                if not 0 <= j < self.node_count:
                    raise ConfigurationError(f"node {i} has out-of-range neighbour {j}")
                if j == i:
                    raise ConfigurationError(f"self-loop at node {i}")
                if i not in self.adjacency[j]:
                    raise ConfigurationError(f"edge ({i}, {j}) is not symmetric")

    @classmethod
    def from_edges(cls, node_count: int, edges: Iterable[tuple[int, int]]) -> Graph:
        """Build from 0-based edges; duplicates and reversed pairs collapse."""
        nbrs: list[set[int]] = [set() for _ in range(node_count)]
        for i, j in edges:
            i, j = int(i), int(j)
            if not (0 <= i < node_count and 0 <= j < node_count):
                raise ConfigurationError(f"edge ({i}, {j}) outside [0, {node_count})")
            if i == j:
                raise ConfigurationError(f"self-loop at node {i}")
            nbrs[i].add(j)
            nbrs[j].add(i)
        return cls(node_count, tuple(tuple(sorted(s)) for s in nbrs))

    @classmethod
    def band(cls, p: int, bandwidth: int, permutation: Sequence[int] | None = None) -> Graph:
        """Band graph joining ``i, j`` when ``|i - j| <= bandwidth``.

        With ``permutation``, original node ``k`` is relabelled
        ``permutation[k]``.
        """
        perm = np.arange(p) if permutation is None else np.asarray(permutation)
        edges = [
            (perm[i], perm[j])
            for i in range(p)
            for j in range(i + 1, min(p, i + bandwidth + 1))
        ]
        return cls.from_edges(p, edges)

    def neighbors(self, i: int) -> tuple[int, ...]:
        return self.adjacency[i]

    def degree(self, i: int) -> int:
        return len(self.adjacency[i])

    def edges(self) -> list[tuple[int, int]]:
        return [(i, j) for i, nb in enumerate(self.adjacency) for j in nb if i < j]

    def edge_set(self) -> set[tuple[int, int]]:
        return set(self.edges())

    def issubgraph(self, other: Graph) -> bool:
        return self.node_count == other.node_count and self.edge_set() <= other.edge_set()


_HEADER = re.compile(r"^\s*p\s*=\s*(\d+)\s*$")


def parse_edge_list(text: str, node_count: int | None = None) -> Graph:
    """Parse the edge-list format; node ids in the text are 1-based."""
    declared = None
    edges = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _HEADER.match(line)
        if m:
            declared = int(m.group(1))
            continue
        parts = [t for t in re.split(r"[,\s]+", line) if t]
        if len(parts) != 2:
            raise ConfigurationError(f"line {lineno}: expected two node ids, got {raw!r}")
        try:
            a, b = int(parts[0]), int(parts[1])
        except ValueError:
            raise ConfigurationError(f"line {lineno}: non-integer node id in {raw!r}") from None
        if a < 1 or b < 1:
            raise ConfigurationError(f"line {lineno}: node ids are 1-based")
        edges.append((a - 1, b - 1))
    p = declared if declared is not None else node_count
    if p is None:
        p = max((max(e) for e in edges), default=-1) + 1
    if node_count is not None and p != node_count:
        raise ConfigurationError(f"graph declares p={p} but data has {node_count} columns")
    return Graph.from_edges(p, edges)


def read_edge_list(path, node_count: int | None = None) -> Graph:
    return parse_edge_list(Path(path).read_text(), node_count)


def format_edge_list(graph: Graph) -> str:
    lines = [f"p={graph.node_count}"]
    lines += [f"{i + 1} {j + 1}" for i, j in graph.edges()]
    return "\n".join(lines) + "\n"


def write_edge_list(graph: Graph, path) -> None:
    Path(path).write_text(format_edge_list(graph))
