"""Search-space cartography: sample candidates, compute graph edit distances,
embed them in 2D, color by accuracy.

Edit costs are uniform: vertex/edge insertion and deletion cost 1, label
substitution costs 1 when labels differ.  Pairs of small graphs are solved
exactly with an A*-style mapping search; larger pairs fall back to a greedy
label assignment whose cost is, by construction, an upper bound.  The 2D
layout is a seeded exact t-SNE over the precomputed distances (classical
metric MDS below 10 points) so the operator's map is stable across reconnects.
"""
from __future__ import annotations

import hashlib
import heapq
import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .candidate import CandidateRecord, Mask, mask_to_subgraph, sample_mask
from .evaluation import count_valid_masks
from .labeled_graph import LabeledGraph
from .rng import as_generator
from .supergraph import TemplateNetwork

EXACT_SIZE_CAP = 12
UNEVALUATED = None  # color sentinel


class ProjectionError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Sampling the candidate space
# ---------------------------------------------------------------------------


def sample_search_space(
    template: TemplateNetwork, count: int, rng_seed, max_retries: int = 200
) -> tuple[CandidateRecord, ...]:
    """`count` distinct valid masks under uniform path probabilities."""
    if count < 2:
        raise ProjectionError(f"count must be >= 2, got {count}")
    total = count_valid_masks(template)
    if count > total:
        raise ProjectionError(
            f"requested {count} candidates but the template has only {total} valid masks"
        )
    rng = as_generator(rng_seed)
    uniform = np.ones(template.path_count)
    seen: set[Mask] = set()
    records: list[CandidateRecord] = []
    retries = 0
    while len(records) < count:
        mask = sample_mask(template, uniform, rng)
        if mask in seen:
            retries += 1
            if retries > max_retries * count:
                raise ProjectionError("resampling stalled; candidate space too small")
            continue
        seen.add(mask)
        records.append(CandidateRecord(id=len(records), mask=mask))
    return tuple(records)


# ---------------------------------------------------------------------------
# Graph edit distance
# ---------------------------------------------------------------------------


def mapping_cost(g1: LabeledGraph, g2: LabeledGraph, mapping: dict[int, int | None]) -> float:
    """Total uniform-cost edit cost of a complete vertex mapping."""
    cost = 0.0
    mapped_targets = {v for v in mapping.values() if v is not None}
    for u in range(g1.vertex_count):
        v = mapping[u]
        if v is None:
            cost += 1.0  # vertex deletion
        elif g1.labels[u] != g2.labels[v]:
            cost += 1.0  # substitution
    cost += g2.vertex_count - len(mapped_targets)  # vertex insertions
    for u1, u2 in g1.edges:
        v1, v2 = mapping[u1], mapping[u2]
        if v1 is None or v2 is None or (v1, v2) not in g2.edges:
            cost += 1.0  # edge deletion
    image = {(mapping[u1], mapping[u2]) for u1, u2 in g1.edges}
    for e in g2.edges:
        if e not in image:
            cost += 1.0  # edge insertion
    return cost


def _label_lower_bound(labels1: list[str], labels2: list[str]) -> float:
    counts1: dict[str, int] = {}
    counts2: dict[str, int] = {}
    for l in labels1:
        counts1[l] = counts1.get(l, 0) + 1
    for l in labels2:
        counts2[l] = counts2.get(l, 0) + 1
    matchable = sum(min(c, counts2.get(l, 0)) for l, c in counts1.items())
    return max(len(labels1), len(labels2)) - matchable


EXPANSION_GUARD = 1_500


def _exact_ged(g1: LabeledGraph, g2: LabeledGraph) -> float | None:
    """A*-style search over vertex mappings of g1 into g2 (or deletion).

    Returns None when the expansion guard trips (adversarial pairs near the
    size cap); the caller then reports the greedy upper bound as approximate.
    """
    n1, n2 = g1.vertex_count, g2.vertex_count
    if n1 == 0:
        return n2 + g2.edge_count
    out1 = [g1.successors(u) for u in range(n1)]
    in1 = [[u for u in range(n1) if (u, v) in g1.edges] for v in range(n1)]
    edges_touching_prefix = [
        sum(1 for a, b in g1.edges if a < u and b < u) for u in range(n1 + 1)
    ]
    total_e2 = g2.edge_count

    def partial_cost(assigned: tuple[int | None, ...], u: int, v: int | None) -> float:
        """Incremental cost of extending the mapping with u -> v."""
        cost = 0.0
        if v is None:
            cost += 1.0
            # Edges incident to u among already-decided vertices die with it.
            for w in out1[u]:
                if w < u:
                    cost += 1.0
            for w in in1[u]:
                if w < u:
                    cost += 1.0
            return cost
        if g1.labels[u] != g2.labels[v]:
            cost += 1.0
        for w in range(u):
            t = assigned[w]
            if (w, u) in g1.edges and (t is None or (t, v) not in g2.edges):
                cost += 1.0
            if (u, w) in g1.edges and (t is None or (v, t) not in g2.edges):
                cost += 1.0
            if t is not None:
                if (t, v) in g2.edges and (w, u) not in g1.edges:
                    cost += 1.0
                if (v, t) in g2.edges and (u, w) not in g1.edges:
                    cost += 1.0
        return cost

    def finish_cost(assigned: tuple[int | None, ...]) -> float:
        used = {v for v in assigned if v is not None}
        cost = float(n2 - len(used))  # vertex insertions
        for a, b in g2.edges:
            if a not in used or b not in used:
                cost += 1.0  # edges touching inserted vertices
        return cost

    def heuristic(u_next: int, assigned: tuple[int | None, ...]) -> float:
        remaining1 = [g1.labels[u] for u in range(u_next, n1)]
        used = {v for v in assigned if v is not None}
        remaining2 = [g2.labels[v] for v in range(n2) if v not in used]
        vertex_bound = _label_lower_bound(remaining1, remaining2)
        # Open edges can pair up at most one-to-one; the surplus costs 1 each.
        e1_open = g1.edge_count - edges_touching_prefix[u_next]
        e2_among_used = sum(1 for a, b in g2.edges if a in used and b in used)
        e2_open = total_e2 - e2_among_used
        return vertex_bound + abs(e1_open - e2_open)

    start: tuple[int | None, ...] = ()
    ticket = 0  # heap tiebreaker; mapping tuples contain None and do not compare
    heap: list[tuple[float, float, int, tuple[int | None, ...]]] = [
        (heuristic(0, start), 0.0, ticket, start)
    ]
    best = math.inf
    expansions = 0
    while heap:
        estimate, cost, _, assigned = heapq.heappop(heap)
        if estimate >= best:
            break
        expansions += 1
        if expansions > EXPANSION_GUARD:
            return None
        u = len(assigned)
        if u == n1:
            total = cost + finish_cost(assigned)
            if total < best:
                best = total
            continue
        used = {v for v in assigned if v is not None}
        options: list[int | None] = [v for v in range(n2) if v not in used]
        options.append(None)
        for v in options:
            g = cost + partial_cost(assigned, u, v)
            child = assigned + (v,)
            h = heuristic(u + 1, child)
            if g + h < best:
                ticket += 1
                heapq.heappush(heap, (g + h, g, ticket, child))
    return best


def _greedy_ged(g1: LabeledGraph, g2: LabeledGraph) -> float:
    """Upper bound from a greedy label/degree assignment."""
    n1, n2 = g1.vertex_count, g2.vertex_count
    deg1 = [len(g1.successors(u)) + sum(1 for e in g1.edges if e[1] == u) for u in range(n1)]
    deg2 = [len(g2.successors(v)) + sum(1 for e in g2.edges if e[1] == v) for v in range(n2)]
    order = sorted(range(n1), key=lambda u: (g1.labels[u], -deg1[u], u))
    used: set[int] = set()
    mapping: dict[int, int | None] = {}
    for u in order:
        candidates = sorted(
            (v for v in range(n2) if v not in used),
            key=lambda v: (g1.labels[u] != g2.labels[v], abs(deg1[u] - deg2[v]), v),
        )
        if candidates:
            mapping[u] = candidates[0]
            used.add(candidates[0])
        else:
            mapping[u] = None
    return mapping_cost(g1, g2, mapping)


def graph_edit_distance(
    g1: LabeledGraph, g2: LabeledGraph, size_cap: int = EXACT_SIZE_CAP
) -> tuple[float, bool]:
    """(distance, exact) with uniform edit costs.

    Pairs within the size cap are solved exactly unless the A* expansion
    guard trips (pathologically symmetric pairs), in which case the greedy
    upper bound is returned and flagged approximate.
    """
    if g1.vertex_count <= size_cap and g2.vertex_count <= size_cap:
        exact = _exact_ged(g1, g2)
        if exact is not None:
            return exact, True
    return _greedy_ged(g1, g2), False


@dataclass(frozen=True)
class DistanceMatrix:
    values: np.ndarray
    exact: bool

    def __post_init__(self):
        self.values.setflags(write=False)

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def digest(self) -> str:
        return hashlib.sha256(self.values.astype("<f8").tobytes()).hexdigest()


def build_distance_matrix(graphs, size_cap: int = EXACT_SIZE_CAP) -> DistanceMatrix:
    graphs = list(graphs)
    n = len(graphs)
    if n < 2:
        raise ProjectionError("need at least 2 graphs")
    values = np.zeros((n, n))
    all_exact = True
    for i in range(n):
        for j in range(i + 1, n):
            d, exact = graph_edit_distance(graphs[i], graphs[j], size_cap)
            values[i, j] = values[j, i] = d
            all_exact = all_exact and exact
    return DistanceMatrix(values=values, exact=all_exact)


# ---------------------------------------------------------------------------
# 2D embedding
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Embedding:
    candidate_ids: tuple[int, ...]
    masks: tuple[Mask, ...]
    coords: np.ndarray
    colors: tuple[float | None, ...]
    seed: int
    method: str
    matrix_digest: str

    def __post_init__(self):
        self.coords.setflags(write=False)

    def digest(self) -> str:
        payload = self.coords.astype("<f8").tobytes() + self.matrix_digest.encode()
        return hashlib.sha256(payload).hexdigest()

    def to_json(self) -> str:
        doc = {
            "schema_version": 1,
            "ids": list(self.candidate_ids),
            "masks": [m.to_hex() for m in self.masks],
            "mask_length": len(self.masks[0]) if self.masks else 0,
            "template_version": self.masks[0].template_version if self.masks else 0,
            "coords": [[float(x), float(y)] for x, y in self.coords],
            "colors": [None if c is None else float(c) for c in self.colors],
            "seed": self.seed,
            "method": self.method,
            "matrix_digest": self.matrix_digest,
            "digest": self.digest(),
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "Embedding":
        doc = json.loads(text)
        masks = tuple(
            Mask.from_hex(h, doc["mask_length"], doc["template_version"]) for h in doc["masks"]
        )
        return cls(
            candidate_ids=tuple(doc["ids"]),
            masks=masks,
            coords=np.array(doc["coords"], dtype=float),
            colors=tuple(doc["colors"]),
            seed=doc["seed"],
            method=doc["method"],
            matrix_digest=doc["matrix_digest"],
        )


def _mds_coords(distances: np.ndarray) -> np.ndarray:
    n = distances.shape[0]
    j = np.eye(n) - np.ones((n, n)) / n
    b = -0.5 * j @ (distances**2) @ j
    eigvals, eigvecs = np.linalg.eigh(b)
    order = np.argsort(eigvals)[::-1][:2]
    vals = np.clip(eigvals[order], 0.0, None)
    coords = eigvecs[:, order] * np.sqrt(vals)
    if coords.shape[1] < 2:
        coords = np.pad(coords, ((0, 0), (0, 2 - coords.shape[1])))
    # Deterministic sign: the entry of largest magnitude in each axis is positive.
    for axis in range(2):
        column = coords[:, axis]
        anchor = np.argmax(np.abs(column))
        if column[anchor] < 0:
            coords[:, axis] = -column
    return coords - coords.mean(axis=0)


def _tsne_probabilities(distances: np.ndarray, perplexity: float) -> np.ndarray:
    n = distances.shape[0]
    target = math.log(perplexity)
    p = np.zeros((n, n))
    d2 = distances**2
    for i in range(n):
        lo, hi = 1e-12, 1e12
        beta = 1.0
        row = np.delete(d2[i], i)
        for _ in range(64):
            weights = np.exp(-row * beta)
            total = weights.sum()
            if total <= 0:
                entropy = 0.0
                probs = np.zeros_like(row)
            else:
                probs = weights / total
                nz = probs[probs > 0]
                entropy = -np.sum(nz * np.log(nz))
            if abs(entropy - target) < 1e-7:
                break
            if entropy > target:
                lo = beta
                beta = beta * 2 if hi >= 1e12 else (beta + hi) / 2
            else:
                hi = beta
                beta = beta / 2 if lo <= 1e-12 else (beta + lo) / 2
        probs_full = np.insert(probs, i, 0.0)
        p[i] = probs_full
    p = (p + p.T) / (2.0 * n)
    return np.maximum(p, 1e-12)


def _tsne_coords(distances: np.ndarray, seed: int, iterations: int = 600) -> np.ndarray:
    n = distances.shape[0]
    perplexity = min(5.0, math.floor((n - 1) / 3))
    p = _tsne_probabilities(distances, max(perplexity, 1.0))
    rng = np.random.default_rng(seed)
    y = rng.normal(0.0, 1e-4, (n, 2))
    velocity = np.zeros_like(y)
    learning_rate = max(4.0, n / 3.0)  # desk-scale point counts need gentle steps
    for it in range(iterations):
        exaggeration = 4.0 if it < 150 else 1.0
        momentum = 0.5 if it < 300 else 0.8
        diff = y[:, None, :] - y[None, :, :]
        dist2 = (diff**2).sum(axis=2)
        inv = 1.0 / (1.0 + dist2)
        np.fill_diagonal(inv, 0.0)
        q = inv / inv.sum()
        q = np.maximum(q, 1e-12)
        coeff = (exaggeration * p - q) * inv
        grad = 4.0 * (coeff[:, :, None] * diff).sum(axis=1)
        velocity = momentum * velocity - learning_rate * grad
        y = y + velocity
        y = y - y.mean(axis=0)
    return y - y.mean(axis=0)


def embed_2d(
    matrix: DistanceMatrix,
    candidates,
    seed: int,
    method: str = "tsne",
) -> Embedding:
    """Seeded 2D embedding; bit-identical for identical (matrix, seed, method)."""
    candidates = list(candidates)
    n = matrix.size
    if n < 2:
        raise ProjectionError("need at least 2 points")
    if len(candidates) != n:
        raise ProjectionError("candidate list must match the matrix size")
    if method not in ("tsne", "mds"):
        raise ProjectionError(f"unknown embedding method {method!r}")
    if not np.any(matrix.values > 0):
        coords = np.zeros((n, 2))  # degenerate all-zero matrix, documented
        used = method
    elif method == "mds" or n < 10:
        coords = _mds_coords(matrix.values)
        used = "mds"
    else:
        coords = _tsne_coords(matrix.values, seed)
        used = "tsne"
    return Embedding(
        candidate_ids=tuple(c.id for c in candidates),
        masks=tuple(c.mask for c in candidates),
        coords=coords,
        colors=tuple(UNEVALUATED for _ in candidates),
        seed=seed,
        method=used,
        matrix_digest=matrix.digest(),
    )


def recolor(embedding: Embedding, search_state) -> Embedding:
    """Color evaluated candidates by accuracy; coordinates never change."""
    accuracy_by_mask: dict[Mask, float] = {}
    for record in search_state.evaluations:
        accuracy_by_mask[record.mask] = record.accuracy
    colors = tuple(accuracy_by_mask.get(mask, UNEVALUATED) for mask in embedding.masks)
    return replace(embedding, colors=colors)
