"""Human-in-the-loop controls over a running search.

A region is a rectangle or polygon drawn on the embedded search space; it is
resolved once against a specific embedding (pinned by digest) into a member
set, and while active the search only creates candidates from that set.  Set
operations report the union/intersection/complement of member path sets, and
individual paths can be pruned (fitness zeroed, never sampled again) or fixed
(present in every sampled mask).  All commands apply between iterations.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .candidate import Mask
from .evolution import SearchState
from .projection import Embedding


class SteeringError(ValueError):
    pass


@dataclass(frozen=True)
class RegionConstraint:
    shape: tuple  # ("rect", x0, y0, x1, y1) or ("polygon", ((x, y), ...))
    member_ids: tuple[int, ...]
    member_masks: tuple[Mask, ...]
    embedding_digest: str


@dataclass(frozen=True)
class SetOpResult:
    op: str  # "union" | "intersection" | "complement"
    path_ids: frozenset[int]
    member_ids: tuple[int, ...]


def _point_in_rect(x: float, y: float, rect) -> bool:
    _, x0, y0, x1, y1 = rect
    return min(x0, x1) <= x <= max(x0, x1) and min(y0, y1) <= y <= max(y0, y1)


def _point_in_polygon(x: float, y: float, vertices) -> bool:
    # Ray casting; boundary points count as inside-ish, fine for brushing.
    inside = False
    n = len(vertices)
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < x_cross:
                inside = not inside
    return inside


def resolve_region(embedding: Embedding, shape) -> RegionConstraint:
    """Resolve a drawn shape into the embedding points falling inside it."""
    kind = shape[0]
    if kind == "rect":
        contains = lambda x, y: _point_in_rect(x, y, shape)
    elif kind == "polygon":
        contains = lambda x, y: _point_in_polygon(x, y, shape[1])
    else:
        raise SteeringError(f"unknown region shape {kind!r}")
    ids, masks = [], []
    for cid, mask, (x, y) in zip(embedding.candidate_ids, embedding.masks, embedding.coords):
        if contains(float(x), float(y)):
            ids.append(cid)
            masks.append(mask)
    return RegionConstraint(
        shape=tuple(shape),
        member_ids=tuple(ids),
        member_masks=tuple(masks),
        embedding_digest=embedding.digest(),
    )


def set_region(state: SearchState, region: RegionConstraint) -> SearchState:
    """Activate a region; applies from the next iteration."""
    if len(region.member_ids) < 2:
        raise SteeringError("region must resolve to at least 2 members")
    for mask in region.member_masks:
        if mask.template_version != state.template_version:
            raise SteeringError("region members were sampled from another template version")
    return replace(state, region=region)


def clear_region(state: SearchState) -> SearchState:
    return replace(state, region=None)


def check_region_fresh(embedding: Embedding, region: RegionConstraint) -> None:
    if embedding.digest() != region.embedding_digest:
        raise SteeringError("region was resolved against a stale embedding")


def set_operation(op: str, region: RegionConstraint, template) -> SetOpResult:
    """Union/intersection/complement over the members' active path sets."""
    if op not in ("union", "intersection", "complement"):
        raise SteeringError(f"unknown set operation {op!r}")
    if not region.member_masks:
        raise SteeringError("region has no members")
    sets = [frozenset(m.active()) for m in region.member_masks]
    union = frozenset().union(*sets)
    if op == "union":
        result = union
    elif op == "intersection":
        result = frozenset.intersection(*sets)
    else:
        result = frozenset(range(template.path_count)) - union
    return SetOpResult(op=op, path_ids=result, member_ids=region.member_ids)


def _node_feasible_after(state: SearchState, pruned: frozenset[int]) -> None:
    paths = state.template.paths
    for (cell_id, node_id), group in state.template.node_groups().items():
        sources = {paths[p].source for p in group if p not in pruned}
        if len(sources) < 2:
            raise SteeringError(
                f"prune would leave cell {cell_id} node {node_id} without "
                f"2 distinct usable sources"
            )


def prune_paths(state: SearchState, path_ids) -> SearchState:
    """Zero the paths' fitness and exclude them from sampling forever."""
    ids = frozenset(int(p) for p in path_ids)
    if not ids:
        raise SteeringError("nothing to prune")
    unknown = [p for p in ids if not (0 <= p < state.template.path_count)]
    if unknown:
        raise SteeringError(f"unknown path ids {sorted(unknown)}")
    if ids & state.fixed:
        raise SteeringError("cannot prune a fixed path")
    new_pruned = state.pruned | ids
    _node_feasible_after(state, new_pruned)

    fitness = np.array(state.fitness.fitness, copy=True)
    frequency = np.array(state.fitness.frequency, copy=True)
    fitness[list(ids)] = 0.0
    table = state.fitness.normalized_copy(fitness, frequency)
    return replace(state, pruned=new_pruned, fitness=table)


def fix_paths(state: SearchState, path_ids) -> SearchState:
    """Force the paths into every subsequently sampled or repaired mask."""
    ids = frozenset(int(p) for p in path_ids)
    if not ids:
        raise SteeringError("nothing to fix")
    unknown = [p for p in ids if not (0 <= p < state.template.path_count)]
    if unknown:
        raise SteeringError(f"unknown path ids {sorted(unknown)}")
    if ids & state.pruned:
        raise SteeringError("cannot fix a pruned path")
    new_fixed = state.fixed | ids
    paths = state.template.paths
    per_node: dict[tuple[int, int], list[int]] = {}
    for p in new_fixed:
        per_node.setdefault((paths[p].cell_id, paths[p].dst_node), []).append(p)
    for (cell_id, node_id), group in per_node.items():
        if len(group) > 2:
            raise SteeringError(f"cell {cell_id} node {node_id} has {len(group)} fixed inputs")
        if len(group) == 2 and paths[group[0]].source == paths[group[1]].source:
            raise SteeringError(
                f"cell {cell_id} node {node_id} fixes two paths on one source"
            )
    return replace(state, fixed=new_fixed)
