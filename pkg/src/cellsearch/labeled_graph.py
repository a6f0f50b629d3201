"""Small labeled directed graphs: candidate subnetworks as comparable values.

Vertices carry a short string label (operation initials or boundary markers)
plus an optional identity key; equality includes keys, so two graphs are equal
exactly when they were drawn from the same mask, while edit-distance code only
looks at labels and edges.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations
from typing import Hashable


@dataclass(frozen=True)
class LabeledGraph:
    labels: tuple[str, ...]
    edges: frozenset[tuple[int, int]]
    keys: tuple[Hashable, ...] = field(default=())

    def __post_init__(self):
        n = len(self.labels)
        for u, v in self.edges:
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge ({u}, {v}) out of range for {n} vertices")
            if u == v:
                raise ValueError("self loops are not allowed")
        if self.keys and len(self.keys) != n:
            raise ValueError("keys length must match labels length")

    @property
    def vertex_count(self) -> int:
        return len(self.labels)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def successors(self, u: int) -> tuple[int, ...]:
        return tuple(sorted(v for (a, v) in self.edges if a == u))

    def is_acyclic(self) -> bool:
        n = len(self.labels)
        indeg = [0] * n
        for _, v in self.edges:
            indeg[v] += 1
        stack = [u for u in range(n) if indeg[u] == 0]
        seen = 0
        while stack:
            u = stack.pop()
            seen += 1
            for v in self.successors(u):
                indeg[v] -= 1
                if indeg[v] == 0:
                    stack.append(v)
        return seen == n

    def canonical_form(self) -> tuple:
        """Label-isomorphism invariant; exact (brute force) for small graphs.

        Only intended for tests and the d=0 metric axiom check; cost grows
        factorially with vertex count.
        """
        n = len(self.labels)
        if n > 9:
            raise ValueError("canonical_form is brute force; use graphs with <= 9 vertices")
        best = None
        for perm in permutations(range(n)):
            labels = tuple(self.labels[perm[i]] for i in range(n))
            inverse = {perm[i]: i for i in range(n)}
            edges = tuple(sorted((inverse[u], inverse[v]) for u, v in self.edges))
            candidate = (labels, edges)
            if best is None or candidate < best:
                best = candidate
        return best
