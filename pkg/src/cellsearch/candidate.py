"""Bitmask encoding of candidate subnetworks: sampling, validity, repair.

A mask has one bit per template path.  It is valid when every node ends up
with exactly two active incoming paths whose sources differ, which makes
every sampled candidate evaluable without special cases.  Crossover and
mutation can break that rule, so a repair pass restores it instead of
rejection sampling.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .labeled_graph import LabeledGraph
from .rng import as_generator
from .supergraph import TemplateNetwork


class MaskError(ValueError):
    """Invalid mask shape, contents, or template version."""


class Mask:
    """Immutable bit vector over the paths of one template version."""

    __slots__ = ("_bits", "_template_version")

    def __init__(self, bits, template_version: int):
        arr = np.array(bits, dtype=bool, copy=True)
        if arr.ndim != 1:
            raise MaskError("mask bits must be one-dimensional")
        arr.setflags(write=False)
        self._bits = arr
        self._template_version = int(template_version)

    @property
    def bits(self) -> np.ndarray:
        return self._bits

    @property
    def template_version(self) -> int:
        return self._template_version

    def __len__(self) -> int:
        return int(self._bits.shape[0])

    def active(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self._bits))

    @property
    def popcount(self) -> int:
        return int(self._bits.sum())

    def __eq__(self, other) -> bool:
        if not isinstance(other, Mask):
            return NotImplemented
        return (
            self._template_version == other._template_version
            and len(self) == len(other)
            and bool(np.array_equal(self._bits, other._bits))
        )

    def __hash__(self) -> int:
        return hash((self._template_version, len(self), self._bits.tobytes()))

    def __repr__(self) -> str:
        return f"Mask(v{self._template_version}, {self.to_hex()}/{len(self)})"

    # Hex serialization carries an explicit bit length; bits pack MSB-first.
    def to_hex(self) -> str:
        return np.packbits(self._bits, bitorder="big").tobytes().hex()

    @classmethod
    def from_hex(cls, text: str, length: int, template_version: int) -> "Mask":
        raw = np.frombuffer(bytes.fromhex(text), dtype=np.uint8)
        bits = np.unpackbits(raw, count=length, bitorder="big").astype(bool)
        return cls(bits, template_version)

    @classmethod
    def from_paths(cls, path_ids, length: int, template_version: int) -> "Mask":
        bits = np.zeros(length, dtype=bool)
        bits[list(path_ids)] = True
        return cls(bits, template_version)


@dataclass(frozen=True)
class CandidateRecord:
    id: int
    mask: Mask
    accuracy: float | None = None
    iteration_evaluated: int | None = None
    origin: str = "sample"

    def __post_init__(self):
        if (self.accuracy is None) != (self.iteration_evaluated is None):
            raise MaskError("accuracy and iteration_evaluated must be set together")
        if self.accuracy is not None and not (0.0 <= self.accuracy <= 1.0):
            raise MaskError(f"accuracy {self.accuracy} outside [0, 1]")

    @property
    def evaluated(self) -> bool:
        return self.accuracy is not None


def _check_version(template: TemplateNetwork, mask: Mask) -> None:
    if mask.template_version != template.version:
        raise MaskError(
            f"mask built for template version {mask.template_version}, "
            f"template is at {template.version}"
        )
    if len(mask) != template.path_count:
        raise MaskError(f"mask length {len(mask)} != path count {template.path_count}")


def mask_is_valid(template: TemplateNetwork, mask: Mask) -> bool:
    try:
        validate_mask(template, mask)
    except MaskError:
        return False
    return True


def validate_mask(template: TemplateNetwork, mask: Mask) -> None:
    """Every node must have exactly 2 active incoming paths with distinct sources."""
    _check_version(template, mask)
    paths = template.paths
    for (cell_id, node_id), group in template.node_groups().items():
        active = [p for p in group if mask.bits[p]]
        if len(active) != 2:
            raise MaskError(
                f"cell {cell_id} node {node_id} has {len(active)} active inputs, wants 2"
            )
        if paths[active[0]].source == paths[active[1]].source:
            raise MaskError(f"cell {cell_id} node {node_id} uses one source twice")


def _node_choices(template: TemplateNetwork):
    """(group path ids, their sources) per node, in template order."""
    paths = template.paths
    out = []
    for key, group in template.node_groups().items():
        sources = np.array([paths[p].source for p in group])
        out.append((key, np.array(group), sources))
    return out


def _prepare_probs(path_probabilities, expected: int) -> np.ndarray:
    probs = np.asarray(path_probabilities, dtype=float)
    if probs.shape != (expected,):
        raise MaskError(f"path_probabilities must have length {expected}")
    if np.any(probs < 0) or not np.all(np.isfinite(probs)):
        raise MaskError("path probabilities must be finite and >= 0")
    return probs


def _draw(rng: np.random.Generator, ids: np.ndarray, weights: np.ndarray) -> int:
    total = weights.sum()
    if total <= 0:
        raise MaskError("no positive-probability path to draw from")
    return int(rng.choice(ids, p=weights / total))


def sample_mask(
    template: TemplateNetwork,
    path_probabilities,
    rng_seed: int | np.random.Generator,
    forced=(),
) -> Mask:
    """Draw a valid mask: per node, 2 paths without replacement, distinct sources.

    `forced` path ids are always set (steering's fixed paths); they count toward
    the node's two slots and must themselves respect the distinct-source rule.
    """
    rng = as_generator(rng_seed)
    probs = _prepare_probs(path_probabilities, template.path_count)
    forced = frozenset(int(p) for p in forced)
    bits = np.zeros(template.path_count, dtype=bool)

    for (cell_id, node_id), group, sources in _node_choices(template):
        chosen = [i for i, p in enumerate(group) if p in forced]
        chosen_sources = {int(sources[i]) for i in chosen}
        if len(chosen) > 2 or len(chosen_sources) != len(chosen):
            raise MaskError(
                f"forced paths conflict at cell {cell_id} node {node_id}"
            )
        while len(chosen) < 2:
            open_ix = np.array(
                [
                    i
                    for i in range(len(group))
                    if i not in chosen
                    and int(sources[i]) not in chosen_sources
                    and probs[group[i]] > 0
                ]
            )
            if open_ix.size == 0:
                raise MaskError(
                    f"cell {cell_id} node {node_id} lacks 2 distinct "
                    f"nonzero-probability sources"
                )
            pick = _draw(rng, open_ix, probs[group[open_ix]])
            chosen.append(pick)
            chosen_sources.add(int(sources[pick]))
        bits[group[chosen]] = True

    mask = Mask(bits, template.version)
    validate_mask(template, mask)
    return mask


def repair_mask(
    template: TemplateNetwork,
    mask: Mask,
    path_probabilities,
    rng_seed: int | np.random.Generator,
    forced=(),
) -> Mask:
    """Restore mask validity after crossover/mutation.

    Zero-probability bits are cleared first (pruned paths never survive),
    forced bits are set.  Nodes with surplus inputs keep the highest-probability
    pair with distinct sources (ties to the lower path id); deficits are drawn
    with sample_mask's rule over the unused sources.  Identity on valid masks
    whose paths all carry positive probability; idempotent always.
    """
    rng = as_generator(rng_seed)
    _check_version(template, mask)
    probs = _prepare_probs(path_probabilities, template.path_count)
    forced = frozenset(int(p) for p in forced)

    bits = np.array(mask.bits, copy=True)
    bits[(probs <= 0) & ~np.isin(np.arange(len(bits)), list(forced))] = False
    for p in forced:
        bits[p] = True

    for (cell_id, node_id), group, sources in _node_choices(template):
        active = [i for i in range(len(group)) if bits[group[i]]]
        keep: list[int] = []
        keep_sources: set[int] = set()
        # Forced first, then by probability; never two paths on one source.
        order = sorted(
            active,
            key=lambda i: (group[i] not in forced, -probs[group[i]], group[i]),
        )
        for i in order:
            if len(keep) == 2:
                if group[i] in forced:
                    raise MaskError(
                        f"forced paths conflict at cell {cell_id} node {node_id}"
                    )
                break
            src = int(sources[i])
            if src in keep_sources:
                if group[i] in forced:
                    raise MaskError(
                        f"forced paths conflict at cell {cell_id} node {node_id}"
                    )
                continue
            keep.append(i)
            keep_sources.add(src)
        while len(keep) < 2:
            open_ix = np.array(
                [
                    i
                    for i in range(len(group))
                    if i not in keep
                    and int(sources[i]) not in keep_sources
                    and probs[group[i]] > 0
                ]
            )
            if open_ix.size == 0:
                raise MaskError(
                    f"cell {cell_id} node {node_id} lacks 2 distinct "
                    f"nonzero-probability sources"
                )
            pick = _draw(rng, open_ix, probs[group[open_ix]])
            keep.append(pick)
            keep_sources.add(int(sources[pick]))
        bits[group] = False
        bits[group[keep]] = True

    repaired = Mask(bits, template.version)
    validate_mask(template, repaired)
    return repaired


def mask_to_subgraph(template: TemplateNetwork, mask: Mask) -> LabeledGraph:
    """Labeled DAG of the candidate: op vertices plus cell input boundaries.

    Data flow: cell input 0 is fed by the previous cell's leaf ops, cell
    input 1 by the cell before that (nothing for the stem).  An op sourcing
    from node k connects from both ops that feed node k.
    """
    validate_mask(template, mask)
    paths = template.paths
    active = [paths[p] for p in mask.active()]

    labels: list[str] = []
    keys: list = []
    index: dict = {}

    def add_vertex(key, label: str) -> int:
        index[key] = len(labels)
        labels.append(label)
        keys.append(key)
        return index[key]

    # Boundary vertices first (cell order), then op vertices by path id.
    for cell in template.cells:
        add_vertex(("in", cell.cell_id, 0), "IN")
        add_vertex(("in", cell.cell_id, 1), "IN")
    for path in active:
        add_vertex(("op", path.path_id), path.op.label)

    by_cell_dst: dict[tuple[int, int], list] = {}
    for path in active:
        by_cell_dst.setdefault((path.cell_id, path.dst_node), []).append(path)

    edges: set[tuple[int, int]] = set()
    cell_order = [c.cell_id for c in template.cells]
    leaf_ops: dict[int, list[int]] = {}
    for cell in template.cells:
        consumed = {
            path.source - 2
            for path in active
            if path.cell_id == cell.cell_id and path.source >= 2
        }
        leaves = [n.node_id for n in cell.nodes if n.node_id not in consumed]
        leaf_ops[cell.cell_id] = [
            index[("op", p.path_id)]
            for leaf in leaves
            for p in by_cell_dst.get((cell.cell_id, leaf), [])
        ]

    for position, cell in enumerate(template.cells):
        for path in active:
            if path.cell_id != cell.cell_id:
                continue
            dst = index[("op", path.path_id)]
            if path.source < 2:
                edges.add((index[("in", cell.cell_id, path.source)], dst))
            else:
                for feeder in by_cell_dst.get((cell.cell_id, path.source - 2), []):
                    edges.add((index[("op", feeder.path_id)], dst))
        # Chain boundaries: input 0 from previous cell, input 1 from the one before.
        if position >= 1:
            for op_ix in leaf_ops[cell_order[position - 1]]:
                edges.add((op_ix, index[("in", cell.cell_id, 0)]))
        if position >= 2:
            for op_ix in leaf_ops[cell_order[position - 2]]:
                edges.add((op_ix, index[("in", cell.cell_id, 1)]))

    graph = LabeledGraph(labels=tuple(labels), edges=frozenset(edges), keys=tuple(keys))
    assert graph.is_acyclic()
    return graph
