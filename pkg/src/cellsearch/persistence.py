"""Versioned save/load of sessions and the replayable run log.

A session archive is a directory of canonical-JSON documents plus two
line-delimited logs (runlog.jsonl, events.jsonl).  Everything serializes
deterministically: saving, loading, and saving again yields byte-identical
files, and the rng substream positions round-trip exactly so a resumed run
continues the original draw-for-draw.

The run log is the audit trail: one record per iteration with the evaluated
masks, accuracies, loss triple, and a fitness-table digest.  Feeding it back
through `replay_verify` recomputes every digest from scratch.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .candidate import CandidateRecord, Mask
from .evaluation import EvaluatorSpec, TabularOracle
from .evolution import FitnessTable, SearchState, init_fitness, iteration_members, update_fitness
from .projection import Embedding
from .steering import RegionConstraint
from .supergraph import TemplateNetwork

ARCHIVE_SCHEMA_VERSION = 1


class ArchiveError(RuntimeError):
    pass


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# Run log records
# ---------------------------------------------------------------------------


def header_record(
    template: TemplateNetwork,
    evaluator_spec: EvaluatorSpec,
    alpha: float,
    seed: int,
    strategy: str,
    population_size: int,
    k: int,
    mutation_rate: float,
) -> dict:
    return {
        "type": "header",
        "schema_version": ARCHIVE_SCHEMA_VERSION,
        "template_digest": template.digest(),
        "template_version": template.version,
        "evaluator": evaluator_spec.to_json(),
        "alpha": alpha,
        "seed": seed,
        "strategy": strategy,
        "population_size": population_size,
        "k": k,
        "mutation_rate": mutation_rate,
    }


def iteration_record(state: SearchState, rng_digest: str) -> dict:
    """Record for the step that produced `state` (seeding is iteration 0)."""
    fresh = iteration_members(state)
    fresh_ids = {m.id for m in fresh}
    return {
        "type": "iteration",
        "iteration": state.iteration,
        "members": [
            {
                "id": m.id,
                "mask": m.mask.to_hex(),
                "accuracy": m.accuracy,
                "origin": m.origin,
            }
            for m in fresh
        ],
        "survivors": [m.id for m in state.population if m.id not in fresh_ids],
        "loss": list(state.loss_history[-1][1:]),
        "fitness_digest": state.fitness.digest(),
        "rng_digest": rng_digest,
    }


def steer_record(iteration: int, command: dict) -> dict:
    return {"type": "steer", "iteration": iteration, "command": command}


def dump_line(record: dict) -> str:
    return canonical_json(record) + "\n"


@dataclass
class ReplayReport:
    ok: bool
    iterations_checked: int
    mismatches: list[str] = field(default_factory=list)


def _apply_prune_to_table(table: FitnessTable, ids) -> FitnessTable:
    fitness = np.array(table.fitness, copy=True)
    frequency = np.array(table.frequency, copy=True)
    fitness[list(ids)] = 0.0
    return table.normalized_copy(fitness, frequency)


def replay_verify(template: TemplateNetwork, runlog_lines: list[str]) -> ReplayReport:
    """Recompute every fitness digest and frequency count from the log alone."""
    if not runlog_lines:
        return ReplayReport(ok=False, iterations_checked=0, mismatches=["empty run log"])
    records = []
    for number, line in enumerate(runlog_lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            records.append((number, json.loads(line)))
        except json.JSONDecodeError as err:
            raise ArchiveError(f"runlog line {number} is not valid JSON: {err}") from err

    number, header = records[0]
    if header.get("type") != "header":
        raise ArchiveError(f"runlog line {number} should be the header record")
    if header.get("template_digest") != template.digest():
        raise ArchiveError("runlog header does not match this template")
    learning = header.get("strategy", "ea") == "ea"

    table = init_fitness(template, header["alpha"])
    report = ReplayReport(ok=True, iterations_checked=0)
    for number, record in records[1:]:
        if record["type"] == "steer":
            if record["command"].get("kind") == "prune":
                table = _apply_prune_to_table(table, record["command"]["path_ids"])
            continue
        if record["type"] != "iteration":
            raise ArchiveError(f"runlog line {number} has unknown type {record['type']!r}")
        if learning:
            for m in record["members"]:
                candidate = CandidateRecord(
                    id=m["id"],
                    mask=Mask.from_hex(m["mask"], template.path_count, template.version),
                    accuracy=m["accuracy"],
                    iteration_evaluated=record["iteration"],
                    origin=m.get("origin", "sample"),
                )
                table = update_fitness(table, candidate)
        claimed = record["fitness_digest"]
        if claimed is not None and table.digest() != claimed:
            report.ok = False
            report.mismatches.append(
                f"line {number} (iteration {record['iteration']}): fitness digest mismatch"
            )
        report.iterations_checked += 1
    return report


# ---------------------------------------------------------------------------
# Search state serialization
# ---------------------------------------------------------------------------


def _record_to_json(record: CandidateRecord) -> dict:
    return {
        "id": record.id,
        "mask": record.mask.to_hex(),
        "accuracy": record.accuracy,
        "iteration_evaluated": record.iteration_evaluated,
        "origin": record.origin,
    }


def _record_from_json(doc: dict, length: int, version: int) -> CandidateRecord:
    return CandidateRecord(
        id=doc["id"],
        mask=Mask.from_hex(doc["mask"], length, version),
        accuracy=doc["accuracy"],
        iteration_evaluated=doc["iteration_evaluated"],
        origin=doc["origin"],
    )


def search_state_to_json(state: SearchState) -> str:
    region = None
    if state.region is not None:
        shape = state.region.shape
        shape_doc = [shape[0]] + (
            [[list(p) for p in shape[1]]] if shape[0] == "polygon" else list(shape[1:])
        )
        region = {
            "shape": shape_doc,
            "member_ids": list(state.region.member_ids),
            "member_masks": [m.to_hex() for m in state.region.member_masks],
            "embedding_digest": state.region.embedding_digest,
        }
    doc = {
        "schema_version": ARCHIVE_SCHEMA_VERSION,
        "iteration": state.iteration,
        "seed": state.seed,
        "population": [_record_to_json(m) for m in state.population],
        "evaluations": [_record_to_json(m) for m in state.evaluations],
        "loss_history": [list(t) for t in state.loss_history],
        "fitness": {
            "fitness": [float(x) for x in state.fitness.fitness],
            "frequency": [int(x) for x in state.fitness.frequency],
            "alpha": state.fitness.alpha,
            "groups": [list(g) for g in state.fitness.groups],
            "template_version": state.fitness.template_version,
        },
        "pruned": sorted(state.pruned),
        "fixed": sorted(state.fixed),
        "region": region,
        "next_candidate_id": state.next_candidate_id,
    }
    return canonical_json(doc)


def search_state_from_json(text: str, template: TemplateNetwork) -> SearchState:
    doc = json.loads(text)
    length = template.path_count
    version = template.version
    fitness = FitnessTable(
        fitness=np.array(doc["fitness"]["fitness"], dtype=float),
        frequency=np.array(doc["fitness"]["frequency"], dtype=np.int64),
        alpha=doc["fitness"]["alpha"],
        groups=tuple(tuple(g) for g in doc["fitness"]["groups"]),
        template_version=doc["fitness"]["template_version"],
    )
    region = None
    if doc["region"] is not None:
        r = doc["region"]
        if r["shape"][0] == "polygon":
            shape = ("polygon", tuple(tuple(p) for p in r["shape"][1]))
        else:
            shape = tuple(["rect"] + r["shape"][1:])
        region = RegionConstraint(
            shape=shape,
            member_ids=tuple(r["member_ids"]),
            member_masks=tuple(Mask.from_hex(h, length, version) for h in r["member_masks"]),
            embedding_digest=r["embedding_digest"],
        )
    return SearchState(
        template=template,
        population=tuple(_record_from_json(m, length, version) for m in doc["population"]),
        fitness=fitness,
        iteration=doc["iteration"],
        loss_history=tuple(tuple(t) for t in doc["loss_history"]),
        seed=doc["seed"],
        pruned=frozenset(doc["pruned"]),
        fixed=frozenset(doc["fixed"]),
        region=region,
        evaluations=tuple(_record_from_json(m, length, version) for m in doc["evaluations"]),
        next_candidate_id=doc["next_candidate_id"],
    )


# ---------------------------------------------------------------------------
# Session archives
# ---------------------------------------------------------------------------


@dataclass
class SessionSnapshot:
    """Everything needed to continue a session in a fresh process."""

    session_id: str
    phase: str
    template: TemplateNetwork
    evaluator_spec: EvaluatorSpec
    hub_state: dict
    search_state: SearchState | None = None
    oracle: TabularOracle | None = None
    supernet_state: dict | None = None
    runlog: list[str] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    embedding: Embedding | None = None
    training_curve: list = field(default_factory=list)
    alpha: float = 0.5


def save_session(snapshot: SessionSnapshot, path: str | Path) -> Path:
    """Write the archive directory; every file is deterministic bytes."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {
        "schema_version": ARCHIVE_SCHEMA_VERSION,
        "session_id": snapshot.session_id,
        "phase": snapshot.phase,
        "alpha": snapshot.alpha,
        "has_search_state": snapshot.search_state is not None,
        "has_oracle": snapshot.oracle is not None,
        "has_supernet": snapshot.supernet_state is not None,
        "has_embedding": snapshot.embedding is not None,
        "training_curve": [list(p) for p in snapshot.training_curve],
    }
    (root / "manifest.json").write_text(canonical_json(manifest))
    (root / "template.json").write_text(snapshot.template.to_json())
    (root / "evaluator.json").write_text(canonical_json(snapshot.evaluator_spec.to_json()))
    (root / "rng.json").write_text(canonical_json(snapshot.hub_state))
    if snapshot.oracle is not None:
        (root / "oracle.json").write_text(snapshot.oracle.to_json())
    if snapshot.supernet_state is not None:
        (root / "supernet.json").write_text(canonical_json(snapshot.supernet_state))
    if snapshot.search_state is not None:
        (root / "search_state.json").write_text(search_state_to_json(snapshot.search_state))
    if snapshot.embedding is not None:
        (root / "embedding.json").write_text(snapshot.embedding.to_json())
    (root / "runlog.jsonl").write_text("".join(snapshot.runlog))
    (root / "events.jsonl").write_text("".join(dump_line(e) for e in snapshot.events))
    return root


def load_session(path: str | Path) -> SessionSnapshot:
    """Read an archive; fails atomically, nothing partial escapes."""
    root = Path(path)
    if not root.is_dir():
        raise ArchiveError(f"no session archive at {root}")
    try:
        manifest = json.loads((root / "manifest.json").read_text())
    except FileNotFoundError as err:
        raise ArchiveError(f"archive {root} has no manifest.json") from err
    except json.JSONDecodeError as err:
        raise ArchiveError(f"manifest.json is corrupt: {err}") from err
    found = manifest.get("schema_version")
    if found != ARCHIVE_SCHEMA_VERSION:
        raise ArchiveError(
            f"archive schema_version {found!r} is not supported (this build reads "
            f"{ARCHIVE_SCHEMA_VERSION}); migrate the archive with a newer release"
        )

    template = TemplateNetwork.from_json((root / "template.json").read_text())
    evaluator_spec = EvaluatorSpec.from_json(json.loads((root / "evaluator.json").read_text()))
    hub_state = json.loads((root / "rng.json").read_text())

    runlog_lines = []
    runlog_path = root / "runlog.jsonl"
    if runlog_path.exists():
        for number, line in enumerate(runlog_path.read_text().splitlines(), start=1):
            if not line.strip():
                continue
            try:
                json.loads(line)
            except json.JSONDecodeError as err:
                raise ArchiveError(f"runlog.jsonl line {number} is corrupt: {err}") from err
            runlog_lines.append(line + "\n")

    events = []
    events_path = root / "events.jsonl"
    if events_path.exists():
        for number, line in enumerate(events_path.read_text().splitlines(), start=1):
            if not line.strip():
                continue
            try:
                events.append(json.loads(line))
            except json.JSONDecodeError as err:
                raise ArchiveError(f"events.jsonl line {number} is corrupt: {err}") from err

    snapshot = SessionSnapshot(
        session_id=manifest["session_id"],
        phase=manifest["phase"],
        template=template,
        evaluator_spec=evaluator_spec,
        hub_state=hub_state,
        runlog=runlog_lines,
        events=events,
        training_curve=[tuple(p) for p in manifest.get("training_curve", [])],
        alpha=manifest.get("alpha", 0.5),
    )
    if manifest.get("has_oracle"):
        snapshot.oracle = TabularOracle.from_json((root / "oracle.json").read_text())
    if manifest.get("has_supernet"):
        snapshot.supernet_state = json.loads((root / "supernet.json").read_text())
    if manifest.get("has_search_state"):
        snapshot.search_state = search_state_from_json(
            (root / "search_state.json").read_text(), template
        )
    if manifest.get("has_embedding"):
        snapshot.embedding = Embedding.from_json((root / "embedding.json").read_text())
    return snapshot


def export_best(
    state: SearchState,
    template: TemplateNetwork,
    finalize_report=None,
    parameter_count: int | None = None,
) -> dict:
    """Final architecture document for the best evaluated candidate.

    `parameter_count` defaults to the popcount proxy; supernet callers pass
    the real block count.
    """
    evaluated = [m for m in state.population if m.evaluated]
    if not evaluated:
        raise ArchiveError("no evaluated candidates to export")
    best_accuracy = max(m.accuracy for m in evaluated)
    tied = sorted(
        (m for m in evaluated if m.accuracy == best_accuracy), key=lambda m: m.id
    )
    best = tied[0]
    chosen = [
        {
            "cell_id": path.cell_id,
            "dst_node": path.dst_node,
            "source": path.source,
            "op": path.op.to_json(),
        }
        for path in (template.paths[p] for p in best.mask.active())
    ]
    doc = {
        "schema_version": ARCHIVE_SCHEMA_VERSION,
        "candidate_id": best.id,
        "mask": best.mask.to_hex(),
        "mask_length": len(best.mask),
        "template_version": template.version,
        "accuracy": best.accuracy,
        "parameter_count": best.mask.popcount if parameter_count is None else parameter_count,
        "paths": chosen,
        "tie": len(tied) > 1,
    }
    if len(tied) > 1:
        doc["tie_note"] = f"{len(tied)} candidates share accuracy {best_accuracy}; lowest id exported"
    if finalize_report is not None:
        doc["finalize"] = {
            "accuracy": finalize_report.accuracy,
            "parameter_count": finalize_report.parameter_count,
            "epochs": finalize_report.epochs,
        }
    return doc
