"""Template supergraph of repeated cells and the dense path index space.

A template is an ordered list of cells.  Each cell is a DAG of nodes; a node
consumes two inputs chosen among the cell's two inputs and earlier nodes,
and every (source, destination) pair carries a set of candidate operations.
One (source, op, destination) triple is a *path*; paths get dense, stable
integer ids 0..P-1 for a fixed template version.  Editing the template bumps
the version and reindexes, invalidating downstream masks and fitness by
contract; an edit report maps surviving old ids to new ones.

Source encoding inside a cell: 0 and 1 are the two cell inputs, k+2 is the
output of node k.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Mapping

SCHEMA_VERSION = 1

BUILTIN_OP_TAGS = (
    "max_pool_3x3",
    "avg_pool_3x3",
    "skip",
    "sep_conv_3x3",
    "sep_conv_5x5",
    "conv_1x3_3x1",
)

_OP_LABELS = {
    "max_pool_3x3": "MP",
    "avg_pool_3x3": "AP",
    "skip": "SK",
    "sep_conv_3x3": "C3",
    "sep_conv_5x5": "C5",
    "conv_1x3_3x1": "C13",
}

CELL_INPUTS = (0, 1)

NORMAL = "normal"
REDUCTION = "reduction"


class TemplateError(ValueError):
    """Raised for invalid templates, unknown targets, or rejected edits."""


@dataclass(frozen=True, order=True)
class OpKind:
    """One candidate operation: a built-in tag or a named custom op."""

    tag: str
    name: str = ""
    params: tuple[tuple[str, float | int | str], ...] = ()

    def __post_init__(self):
        if self.tag == "custom":
            if not self.name:
                raise TemplateError("custom op requires a non-empty name")
            for key, value in self.params:
                if isinstance(value, float) and not (value == value and abs(value) != float("inf")):
                    raise TemplateError(f"custom op {self.name!r} has non-finite param {key!r}")
        elif self.tag not in BUILTIN_OP_TAGS:
            raise TemplateError(f"unknown op tag {self.tag!r}")

    @classmethod
    def builtin(cls, tag: str) -> "OpKind":
        return cls(tag=tag)

    @classmethod
    def custom(cls, name: str, params: Mapping[str, float | int | str] | None = None) -> "OpKind":
        items = tuple(sorted((params or {}).items()))
        return cls(tag="custom", name=name, params=items)

    @property
    def is_custom(self) -> bool:
        return self.tag == "custom"

    @property
    def label(self) -> str:
        """Short vertex label used when drawing candidate subgraphs."""
        if self.is_custom:
            return "X:" + self.name
        return _OP_LABELS[self.tag]

    def order_key(self) -> tuple[int, str]:
        # Built-ins in declaration order, customs after, by name.
        if self.is_custom:
            return (len(BUILTIN_OP_TAGS), self.name)
        return (BUILTIN_OP_TAGS.index(self.tag), "")

    def identity(self) -> tuple[str, str]:
        """Op identity ignoring params; used to match paths across edits."""
        return (self.tag, self.name)

    def to_json(self) -> dict:
        doc: dict = {"tag": self.tag}
        if self.is_custom:
            doc["name"] = self.name
            doc["params"] = dict(self.params)
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "OpKind":
        if doc["tag"] == "custom":
            return cls.custom(doc["name"], doc.get("params", {}))
        return cls.builtin(doc["tag"])


def builtin_ops() -> tuple[OpKind, ...]:
    return tuple(OpKind.builtin(tag) for tag in BUILTIN_OP_TAGS)


@dataclass(frozen=True)
class NodeSpec:
    """One node of a cell: its id and the ops available on each allowed input."""

    node_id: int
    allowed_inputs: tuple[int, ...]
    input_ops: tuple[tuple[OpKind, ...], ...]

    def __post_init__(self):
        if len(self.allowed_inputs) != len(self.input_ops):
            raise TemplateError("allowed_inputs and input_ops lengths differ")
        if len(set(self.allowed_inputs)) != len(self.allowed_inputs):
            raise TemplateError(f"node {self.node_id} repeats an input source")
        for source in self.allowed_inputs:
            if source < 0 or source >= self.node_id + 2:
                raise TemplateError(
                    f"node {self.node_id} has source {source} outside the DAG order"
                )
        for source, ops in zip(self.allowed_inputs, self.input_ops):
            if not ops:
                raise TemplateError(f"node {self.node_id} source {source} carries no ops")

    def ops_for(self, source: int) -> tuple[OpKind, ...]:
        return self.input_ops[self.allowed_inputs.index(source)]


def default_node(node_id: int, ops: tuple[OpKind, ...] | None = None) -> NodeSpec:
    """Node with every preceding source allowed, each carrying all given ops."""
    ops = ops or builtin_ops()
    sources = tuple(range(node_id + 2))
    return NodeSpec(node_id=node_id, allowed_inputs=sources, input_ops=tuple(ops for _ in sources))


@dataclass(frozen=True)
class CellSpec:
    cell_id: int
    kind: str
    nodes: tuple[NodeSpec, ...]

    def __post_init__(self):
        if self.kind not in (NORMAL, REDUCTION):
            raise TemplateError(f"unknown cell kind {self.kind!r}")
        if len(self.nodes) < 1:
            raise TemplateError("cell needs at least one node")
        for position, node in enumerate(self.nodes):
            if node.node_id != position:
                raise TemplateError("node ids must be dense positions within the cell")


@dataclass(frozen=True)
class Path:
    """One (source, op, destination) edge of the supergraph."""

    path_id: int
    cell_id: int
    dst_node: int
    source: int
    op: OpKind

    def key(self) -> tuple:
        return (self.cell_id, self.dst_node, self.source, self.op.identity())


@dataclass(frozen=True)
class EditReport:
    """Maps surviving old path ids to new ones after a template edit."""

    old_version: int
    new_version: int
    path_id_map: dict[int, int]
    removed_paths: tuple[int, ...]
    added_paths: tuple[int, ...]


@dataclass(frozen=True)
class TemplateNetwork:
    cells: tuple[CellSpec, ...]
    version: int = 0
    dataset_tag: str = "toy"
    _paths: tuple[Path, ...] = field(default=None, repr=False, compare=False)  # type: ignore[assignment]

    def __post_init__(self):
        if not any(cell.kind == NORMAL for cell in self.cells):
            raise TemplateError("template needs at least one normal cell")
        seen = set()
        for cell in self.cells:
            if cell.cell_id in seen:
                raise TemplateError(f"duplicate cell id {cell.cell_id}")
            seen.add(cell.cell_id)
            for node in cell.nodes:
                if len(node.allowed_inputs) < 2:
                    raise TemplateError(
                        f"cell {cell.cell_id} node {node.node_id} has fewer than 2 allowed inputs"
                    )
        object.__setattr__(self, "_paths", _enumerate(self.cells))

    # -- path index space ------------------------------------------------

    @property
    def paths(self) -> tuple[Path, ...]:
        return self._paths

    @property
    def path_count(self) -> int:
        return len(self._paths)

    @property
    def stacking_plan(self) -> dict[str, int]:
        return {
            NORMAL: sum(1 for c in self.cells if c.kind == NORMAL),
            REDUCTION: sum(1 for c in self.cells if c.kind == REDUCTION),
        }

    def cell(self, cell_id: int) -> CellSpec:
        for cell in self.cells:
            if cell.cell_id == cell_id:
                return cell
        raise TemplateError(f"no cell with id {cell_id}")

    def node_groups(self) -> dict[tuple[int, int], tuple[int, ...]]:
        """Incoming path ids per (cell_id, node_id)."""
        groups: dict[tuple[int, int], list[int]] = {}
        for path in self._paths:
            groups.setdefault((path.cell_id, path.dst_node), []).append(path.path_id)
        return {k: tuple(v) for k, v in groups.items()}

    def cell_groups(self) -> dict[int, tuple[int, ...]]:
        """Path ids per cell; the normalization groups of the fitness table."""
        groups: dict[int, list[int]] = {}
        for path in self._paths:
            groups.setdefault(path.cell_id, []).append(path.path_id)
        return {k: tuple(v) for k, v in groups.items()}

    def output_shape(self, input_shape: tuple[int, int, int]) -> tuple[Fraction, Fraction, Fraction]:
        """Symbolic (H, W, F) after composing every cell in stacking order."""
        h, w, f = (Fraction(x) for x in input_shape)
        for cell in self.cells:
            if cell.kind == REDUCTION:
                h, w, f = h / 2, w / 2, f * 2
        return (h, w, f)

    # -- serialization -----------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "version": self.version,
            "dataset_tag": self.dataset_tag,
            "cells": [
                {
                    "cell_id": cell.cell_id,
                    "kind": cell.kind,
                    "nodes": [
                        {
                            "node_id": node.node_id,
                            "inputs": [
                                {"source": source, "ops": [op.to_json() for op in ops]}
                                for source, ops in zip(node.allowed_inputs, node.input_ops)
                            ],
                        }
                        for node in cell.nodes
                    ],
                }
                for cell in self.cells
            ],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "TemplateNetwork":
        doc = json.loads(text)
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise TemplateError(
                f"unsupported template schema_version {doc.get('schema_version')!r}; "
                f"this build reads version {SCHEMA_VERSION}"
            )
        cells = tuple(
            CellSpec(
                cell_id=c["cell_id"],
                kind=c["kind"],
                nodes=tuple(
                    NodeSpec(
                        node_id=n["node_id"],
                        allowed_inputs=tuple(i["source"] for i in n["inputs"]),
                        input_ops=tuple(
                            tuple(OpKind.from_json(o) for o in i["ops"]) for i in n["inputs"]
                        ),
                    )
                    for n in c["nodes"]
                ),
            )
            for c in doc["cells"]
        )
        return cls(cells=cells, version=doc["version"], dataset_tag=doc["dataset_tag"])

    def digest(self) -> str:
        import hashlib

        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()


def _enumerate(cells: tuple[CellSpec, ...]) -> tuple[Path, ...]:
    paths: list[Path] = []
    for cell in cells:  # cells tuple order, not cell_id order
        for node in cell.nodes:
            for source, ops in zip(node.allowed_inputs, node.input_ops):
                for op in sorted(ops, key=OpKind.order_key):
                    paths.append(
                        Path(
                            path_id=len(paths),
                            cell_id=cell.cell_id,
                            dst_node=node.node_id,
                            source=source,
                            op=op,
                        )
                    )
    return tuple(paths)


def enumerate_paths(template: TemplateNetwork) -> tuple[Path, ...]:
    """Dense path list, sorted by (cell position, dst node, source, op order)."""
    return template.paths


# -- construction ----------------------------------------------------------

DATASET_PLANS: dict[str, tuple[int, int]] = {
    "toy": (2, 1),
    "moons": (2, 1),
    "clusters": (2, 1),
    "digits": (3, 1),
}

DEFAULT_NODES_PER_CELL = 4


def build_template(
    dataset_tag: str = "toy",
    num_normal: int | None = None,
    num_reduction: int | None = None,
    nodes_per_cell: int = DEFAULT_NODES_PER_CELL,
) -> TemplateNetwork:
    """Template with the full six-op grammar on every (source, destination) pair.

    Unset cell counts come from the dataset tag's built-in stacking plan.
    Normal cells come first, reduction cells after.
    """
    if dataset_tag not in DATASET_PLANS:
        raise TemplateError(f"unknown dataset tag {dataset_tag!r}; known: {sorted(DATASET_PLANS)}")
    plan = DATASET_PLANS[dataset_tag]
    if num_normal is None:
        num_normal = plan[0]
    if num_reduction is None:
        num_reduction = plan[1]
    if num_normal < 1:
        raise TemplateError("need at least one normal cell")
    if num_reduction < 0:
        raise TemplateError("num_reduction must be >= 0")
    if nodes_per_cell < 1:
        raise TemplateError("nodes_per_cell must be >= 1")

    cells = []
    for index in range(num_normal + num_reduction):
        kind = NORMAL if index < num_normal else REDUCTION
        nodes = tuple(default_node(j) for j in range(nodes_per_cell))
        cells.append(CellSpec(cell_id=index, kind=kind, nodes=nodes))
    return TemplateNetwork(cells=tuple(cells), version=0, dataset_tag=dataset_tag)


# -- edits -------------------------------------------------------------------


@dataclass(frozen=True)
class AddNode:
    cell_id: int


@dataclass(frozen=True)
class RemoveNode:
    cell_id: int
    node_id: int


@dataclass(frozen=True)
class AddCell:
    kind: str
    nodes_per_cell: int = DEFAULT_NODES_PER_CELL
    position: int | None = None  # insertion index in stacking order; default append


@dataclass(frozen=True)
class RemoveCell:
    cell_id: int


@dataclass(frozen=True)
class SetOpParams:
    op_name: str
    params: Mapping[str, float | int | str]
    cell_id: int | None = None


@dataclass(frozen=True)
class RemoveOp:
    op_tag: str
    op_name: str = ""
    cell_id: int | None = None
    dst_node: int | None = None
    source: int | None = None


Edit = AddNode | RemoveNode | AddCell | RemoveCell | SetOpParams | RemoveOp


def edit_template(template: TemplateNetwork, edit: Edit) -> tuple[TemplateNetwork, EditReport]:
    """Apply one edit; returns the bumped template and the path id diff."""
    if isinstance(edit, AddNode):
        new_cells, key_map = _add_node(template, edit)
    elif isinstance(edit, RemoveNode):
        new_cells, key_map = _remove_node(template, edit)
    elif isinstance(edit, AddCell):
        new_cells, key_map = _add_cell(template, edit)
    elif isinstance(edit, RemoveCell):
        new_cells, key_map = _remove_cell(template, edit)
    elif isinstance(edit, SetOpParams):
        new_cells, key_map = _set_op_params(template, edit)
    elif isinstance(edit, RemoveOp):
        new_cells, key_map = _remove_op(template, edit)
    else:
        raise TemplateError(f"unknown edit {edit!r}")

    new_template = TemplateNetwork(
        cells=new_cells, version=template.version + 1, dataset_tag=template.dataset_tag
    )
    new_index = {path.key(): path.path_id for path in new_template.paths}
    id_map: dict[int, int] = {}
    for path in template.paths:
        new_key = key_map(path)
        if new_key is not None and new_key in new_index:
            id_map[path.path_id] = new_index[new_key]
    removed = tuple(p.path_id for p in template.paths if p.path_id not in id_map)
    surviving_new = set(id_map.values())
    added = tuple(p.path_id for p in new_template.paths if p.path_id not in surviving_new)
    report = EditReport(
        old_version=template.version,
        new_version=new_template.version,
        path_id_map=id_map,
        removed_paths=removed,
        added_paths=added,
    )
    return new_template, report


def _identity_key(path: Path):
    return path.key()


def _add_node(template: TemplateNetwork, edit: AddNode):
    cell = template.cell(edit.cell_id)
    new_node = default_node(len(cell.nodes))
    new_cell = replace(cell, nodes=cell.nodes + (new_node,))
    cells = tuple(new_cell if c.cell_id == edit.cell_id else c for c in template.cells)
    return cells, _identity_key


def _remove_node(template: TemplateNetwork, edit: RemoveNode):
    cell = template.cell(edit.cell_id)
    if not any(n.node_id == edit.node_id for n in cell.nodes):
        raise TemplateError(f"cell {edit.cell_id} has no node {edit.node_id}")
    if len(cell.nodes) == 1:
        raise TemplateError("cannot remove the only node of a cell")
    removed_source = edit.node_id + 2

    def map_source(source: int) -> int | None:
        if source == removed_source:
            return None
        if source > removed_source:
            return source - 1
        return source

    new_nodes = []
    for node in cell.nodes:
        if node.node_id == edit.node_id:
            continue
        keep = [
            (map_source(s), ops)
            for s, ops in zip(node.allowed_inputs, node.input_ops)
            if map_source(s) is not None
        ]
        if len(keep) < 2:
            raise TemplateError(
                f"removing node {edit.node_id} would leave node {node.node_id} "
                f"with fewer than 2 allowed inputs"
            )
        new_id = node.node_id - 1 if node.node_id > edit.node_id else node.node_id
        new_nodes.append(
            NodeSpec(
                node_id=new_id,
                allowed_inputs=tuple(s for s, _ in keep),
                input_ops=tuple(ops for _, ops in keep),
            )
        )
    new_cell = replace(cell, nodes=tuple(new_nodes))
    cells = tuple(new_cell if c.cell_id == edit.cell_id else c for c in template.cells)

    def key_map(path: Path):
        if path.cell_id != edit.cell_id:
            return path.key()
        if path.dst_node == edit.node_id:
            return None
        source = map_source(path.source)
        if source is None:
            return None
        dst = path.dst_node - 1 if path.dst_node > edit.node_id else path.dst_node
        return (path.cell_id, dst, source, path.op.identity())

    return cells, key_map


def _add_cell(template: TemplateNetwork, edit: AddCell):
    if edit.nodes_per_cell < 1:
        raise TemplateError("nodes_per_cell must be >= 1")
    new_id = max(c.cell_id for c in template.cells) + 1
    nodes = tuple(default_node(j) for j in range(edit.nodes_per_cell))
    new_cell = CellSpec(cell_id=new_id, kind=edit.kind, nodes=nodes)
    position = len(template.cells) if edit.position is None else edit.position
    if position < 0 or position > len(template.cells):
        raise TemplateError(f"cell position {position} out of range")
    cells = template.cells[:position] + (new_cell,) + template.cells[position:]
    return cells, _identity_key


def _remove_cell(template: TemplateNetwork, edit: RemoveCell):
    cell = template.cell(edit.cell_id)
    if cell.kind == NORMAL and sum(1 for c in template.cells if c.kind == NORMAL) == 1:
        raise TemplateError("cannot remove the last normal cell")
    cells = tuple(c for c in template.cells if c.cell_id != edit.cell_id)

    def key_map(path: Path):
        if path.cell_id == edit.cell_id:
            return None
        return path.key()

    return cells, key_map


def _set_op_params(template: TemplateNetwork, edit: SetOpParams):
    new_params = tuple(sorted(dict(edit.params).items()))
    touched = 0

    def rewrite(op: OpKind, cell_id: int) -> OpKind:
        nonlocal touched
        in_scope = edit.cell_id is None or edit.cell_id == cell_id
        if op.is_custom and op.name == edit.op_name and in_scope:
            touched += 1
            return OpKind(tag="custom", name=op.name, params=new_params)
        return op

    cells = tuple(
        replace(
            cell,
            nodes=tuple(
                NodeSpec(
                    node_id=node.node_id,
                    allowed_inputs=node.allowed_inputs,
                    input_ops=tuple(
                        tuple(rewrite(op, cell.cell_id) for op in ops) for ops in node.input_ops
                    ),
                )
                for node in cell.nodes
            ),
        )
        for cell in template.cells
    )
    if touched == 0:
        raise TemplateError(f"no custom op named {edit.op_name!r} in scope")
    return cells, _identity_key


def _remove_op(template: TemplateNetwork, edit: RemoveOp):
    target = (edit.op_tag, edit.op_name)
    removed = 0

    def matches(path_cell: int, node: NodeSpec, source: int, op: OpKind) -> bool:
        if edit.cell_id is not None and path_cell != edit.cell_id:
            return False
        if edit.dst_node is not None and node.node_id != edit.dst_node:
            return False
        if edit.source is not None and source != edit.source:
            return False
        return op.identity() == target

    new_cells = []
    for cell in template.cells:
        new_nodes = []
        for node in cell.nodes:
            keep: list[tuple[int, tuple[OpKind, ...]]] = []
            for source, ops in zip(node.allowed_inputs, node.input_ops):
                surviving = tuple(op for op in ops if not matches(cell.cell_id, node, source, op))
                removed += len(ops) - len(surviving)
                if surviving:
                    keep.append((source, surviving))
            if len(keep) < 2:
                raise TemplateError(
                    f"removing op {edit.op_tag!r} leaves cell {cell.cell_id} node "
                    f"{node.node_id} with fewer than 2 allowed input sources"
                )
            new_nodes.append(
                NodeSpec(
                    node_id=node.node_id,
                    allowed_inputs=tuple(s for s, _ in keep),
                    input_ops=tuple(ops for _, ops in keep),
                )
            )
        new_cells.append(replace(cell, nodes=tuple(new_nodes)))
    if removed == 0:
        raise TemplateError(f"no op matched {edit.op_tag!r}/{edit.op_name!r} in scope")

    def key_map(path: Path):
        node = next(n for n in template.cell(path.cell_id).nodes if n.node_id == path.dst_node)
        if matches(path.cell_id, node, path.source, path.op):
            return None
        return path.key()

    return new_cells, key_map
