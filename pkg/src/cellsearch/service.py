"""Session-oriented HTTP API and event stream tying the modules together.

One worker thread per session owns all mutable state; handlers translate
requests into queued commands and snapshot reads.  Long-running work
(template training, search iterations) runs on the worker and streams
progress as monotonically numbered events; steering commands queue up and
apply between iterations only.  Reads are byte-stable: the same state always
serializes to the same body.
"""
from __future__ import annotations

import hashlib
import math
import queue
import threading
import uuid

from fastapi import Body, FastAPI, Query, Request
from fastapi.responses import PlainTextResponse, Response

from . import steering
from .candidate import CandidateRecord, Mask, MaskError, mask_to_subgraph
from .evaluation import (
    EvaluationError,
    EvaluatorSpec,
    SupernetEvaluator,
    TabularOracle,
    finalize_candidate,
)
from .evolution import (
    SearchError,
    iteration_members,
    new_search_state,
    population_size,
    run_search,
    seed_population,
)
from .persistence import (
    ArchiveError,
    SessionSnapshot,
    canonical_json,
    dump_line,
    export_best,
    header_record,
    iteration_record,
    load_session,
    save_session,
    steer_record,
)
from .projection import Embedding, build_distance_matrix, embed_2d, recolor, sample_search_space
from .rng import RngHub
from .steering import SteeringError
from .supergraph import (
    AddCell,
    AddNode,
    RemoveCell,
    RemoveNode,
    RemoveOp,
    SetOpParams,
    TemplateError,
    TemplateNetwork,
    build_template,
)

API_PREFIX = "/api/v1"

CONFIGURING = "configuring"
TRAINING = "training_template"
SEARCHING = "searching"
PAUSED = "paused"
FINALIZED = "finalized"


class PhaseError(RuntimeError):
    pass


class NotFound(RuntimeError):
    pass


class Session:
    """Server-side session: template, evaluator, search state, event log."""

    def __init__(
        self,
        session_id: str,
        template: TemplateNetwork,
        evaluator_spec: EvaluatorSpec,
        alpha: float,
        seed: int,
    ):
        self.id = session_id
        self.lock = threading.RLock()
        self.template = template
        self.evaluator_spec = evaluator_spec
        self.alpha = alpha
        self.seed = seed
        self.hub = RngHub(seed)
        self.evaluator = evaluator_spec.build(template)
        self.state = new_search_state(template, alpha, seed)
        self.phase = CONFIGURING
        self.events: list[dict] = []
        self.runlog: list[str] = []
        self.embedding: Embedding | None = None
        self.training_curve: list[tuple[int, float, float]] = []
        self.finalize_report = None
        self.steering_queue: "queue.Queue[tuple]" = queue.Queue()
        self.worker: threading.Thread | None = None
        self.stop_flag = threading.Event()

    # -- events --------------------------------------------------------------

    def emit(self, kind: str, payload: dict) -> dict:
        with self.lock:
            event = {"seq": len(self.events) + 1, "kind": kind, "payload": payload}
            self.events.append(event)
            return event

    # -- phases ----------------------------------------------------------------

    def set_phase(self, phase: str, **extra) -> None:
        with self.lock:
            if phase != self.phase:
                self.phase = phase
                self.emit("phase_changed", {"phase": phase, **extra})

    def require_phase(self, *allowed: str) -> None:
        if self.phase not in allowed:
            raise PhaseError(f"operation requires phase in {allowed}, session is {self.phase}")

    def busy(self) -> bool:
        return self.worker is not None and self.worker.is_alive()

    # -- long-running jobs -----------------------------------------------------

    def start_training(self, epochs: int) -> None:
        if self.busy():
            raise PhaseError("another job is running")
        if not isinstance(self.evaluator, SupernetEvaluator):
            raise PhaseError("only supernet sessions train a template")
        self.require_phase(CONFIGURING, TRAINING)
        self.stop_flag.clear()
        self.set_phase(TRAINING)

        def job():
            try:
                curve = self.evaluator.train(
                    epochs,
                    self.hub.stream("training"),
                    stop_signal=self.stop_flag.is_set,
                    on_epoch=lambda e, tr, vl: self.emit(
                        "loss_tick", {"epoch": e, "train_loss": tr, "val_loss": vl}
                    ),
                )
                with self.lock:
                    self.training_curve.extend(curve)
            except Exception as err:  # surfaced over the stream, phase stays usable
                self.emit("error", {"message": str(err)})

        self.worker = threading.Thread(target=job, daemon=True)
        self.worker.start()

    def _drain_steering(self) -> list:
        commands = []
        while True:
            try:
                commands.append(self.steering_queue.get_nowait())
            except queue.Empty:
                return commands

    def _apply_command(self, state, command, record):
        new_state = command(state)
        with self.lock:
            self.runlog.append(dump_line(steer_record(new_state.iteration, record)))
        self.emit("constraint_changed", self._constraint_payload_for(new_state))
        return new_state

    def _constraint_payload_for(self, state) -> dict:
        region = state.region
        return {
            "pruned": sorted(state.pruned),
            "fixed": sorted(state.fixed),
            "region_member_ids": None if region is None else list(region.member_ids),
            "fitness_digest": state.fitness.digest(),
        }

    def apply_steering(self, command, record: dict) -> None:
        """Queue while searching; apply immediately otherwise."""
        if self.phase == SEARCHING and self.busy():
            self.steering_queue.put((command, record))
            return
        with self.lock:
            self.state = self._apply_command(self.state, command, record)

    def start_search(self, iterations: int) -> None:
        if self.busy():
            raise PhaseError("another job is running")
        self.require_phase(CONFIGURING, TRAINING, PAUSED, SEARCHING)
        if iterations < 1:
            raise SearchError(f"iterations must be >= 1, got {iterations}")
        self.stop_flag.clear()
        self.set_phase(SEARCHING)

        def emit_iteration(state):
            record = iteration_record(state, self.hub.digest())
            with self.lock:
                self.runlog.append(dump_line(record))
            self.emit(
                "iteration_done",
                {
                    "iteration": record["iteration"],
                    "members": record["members"],
                    "survivors": record["survivors"],
                    "loss": record["loss"],
                    "fitness_digest": record["fitness_digest"],
                },
            )
            self.emit(
                "fitness_updated",
                {"iteration": record["iteration"], "digest": record["fitness_digest"]},
            )

        def job():
            try:
                with self.lock:
                    if not self.runlog:
                        n = population_size(self.template)
                        self.runlog.append(
                            dump_line(
                                header_record(
                                    self.template,
                                    self.evaluator_spec,
                                    self.alpha,
                                    self.seed,
                                    "ea",
                                    n,
                                    math.ceil(n / 3),
                                    0.05,
                                )
                            )
                        )
                if not self.state.population:
                    state = seed_population(self.state, self.evaluator, self.hub)
                    with self.lock:
                        self.state = state
                    emit_iteration(state)

                def drain():
                    pairs = self._drain_steering()
                    commands = []
                    for command, record in pairs:
                        commands.append(
                            lambda s, c=command, r=record: self._apply_command(s, c, r)
                        )
                    return commands

                def on_iteration(_prev, current):
                    with self.lock:
                        self.state = current
                    emit_iteration(current)

                self.state = run_search(
                    self.state,
                    self.evaluator,
                    self.hub,
                    iterations,
                    stop_signal=self.stop_flag.is_set,
                    drain_commands=drain,
                    on_iteration=on_iteration,
                )
                # Steering sent during the final iteration still applies.
                with self.lock:
                    for command, record in self._drain_steering():
                        self.state = self._apply_command(self.state, command, record)
            except Exception as err:
                self.emit("error", {"message": str(err)})
            finally:
                self.set_phase(PAUSED)

        self.worker = threading.Thread(target=job, daemon=True)
        self.worker.start()

    def pause(self) -> None:
        self.stop_flag.set()
        if self.worker is not None:
            self.worker.join()

    # -- template edits ----------------------------------------------------------

    def apply_edit(self, edit) -> dict:
        from .supergraph import edit_template

        if self.phase == TRAINING and self.busy():
            raise PhaseError("cannot edit the template while training runs")
        was_searching = self.phase == SEARCHING
        if was_searching:
            self.pause()
        with self.lock:
            new_template, report = edit_template(self.template, edit)
            self.template = new_template
            self.evaluator = self.evaluator_spec.build(new_template)
            self.state = new_search_state(new_template, self.alpha, self.seed)
            self.embedding = None
            self.runlog = []
            self.training_curve = []
        payload = {
            "reason": "template_edit",
            "invalidated": True,
            "old_version": report.old_version,
            "new_version": report.new_version,
            "surviving_paths": {str(k): v for k, v in sorted(report.path_id_map.items())},
        }
        if self.phase == CONFIGURING:
            self.emit("phase_changed", {"phase": CONFIGURING, **payload})
        else:
            self.phase = PAUSED
            self.emit("phase_changed", {"phase": PAUSED, **payload})
        return payload

    # -- embedding -----------------------------------------------------------------

    def recompute_embedding(self, count: int, method: str = "tsne") -> Embedding:
        rng = self.hub.stream("embedding")
        records = sample_search_space(self.template, count, rng)
        graphs = [mask_to_subgraph(self.template, r.mask) for r in records]
        # Tighter exact-GED cap than the library default keeps recompute interactive.
        matrix = build_distance_matrix(graphs, size_cap=10)
        seed = int(rng.integers(0, 2**31 - 1))
        embedding = embed_2d(matrix, records, seed, method)
        with self.lock:
            self.embedding = embedding
        self.emit(
            "embedding_ready",
            {"digest": embedding.digest(), "method": embedding.method, "count": count},
        )
        return embedding

    # -- reads ------------------------------------------------------------------------

    def read_state_doc(self) -> dict:
        with self.lock:
            state = self.state
            doc = {
                "schema_version": 1,
                "phase": self.phase,
                "iteration": state.iteration,
                "template_version": state.template_version,
                "population": [
                    {
                        "id": m.id,
                        "mask": m.mask.to_hex(),
                        "accuracy": m.accuracy,
                        "iteration_evaluated": m.iteration_evaluated,
                        "origin": m.origin,
                    }
                    for m in state.population
                ],
                "loss_history": [list(t) for t in state.loss_history],
                "pruned": sorted(state.pruned),
                "fixed": sorted(state.fixed),
                "region_member_ids": None
                if state.region is None
                else list(state.region.member_ids),
                "fitness_digest": state.fitness.digest(),
            }
            doc["digest"] = state_digest(doc)
            return doc

    def snapshot(self) -> SessionSnapshot:
        with self.lock:
            return SessionSnapshot(
                session_id=self.id,
                phase=self.phase,
                template=self.template,
                evaluator_spec=self.evaluator_spec,
                hub_state=self.hub.state(),
                search_state=self.state,
                oracle=self.evaluator if isinstance(self.evaluator, TabularOracle) else None,
                supernet_state=self.evaluator.state_dict()
                if isinstance(self.evaluator, SupernetEvaluator)
                else None,
                runlog=list(self.runlog),
                events=list(self.events),
                embedding=self.embedding,
                training_curve=list(self.training_curve),
                alpha=self.alpha,
            )

    @classmethod
    def from_snapshot(cls, snapshot: SessionSnapshot) -> "Session":
        session = cls.__new__(cls)
        session.id = snapshot.session_id
        session.lock = threading.RLock()
        session.template = snapshot.template
        session.evaluator_spec = snapshot.evaluator_spec
        session.alpha = snapshot.alpha
        session.seed = snapshot.hub_state["seed"]
        session.hub = RngHub.from_state(snapshot.hub_state)
        if snapshot.oracle is not None:
            session.evaluator = snapshot.oracle
        else:
            session.evaluator = snapshot.evaluator_spec.build(snapshot.template)
            if snapshot.supernet_state is not None:
                session.evaluator.load_state_dict(snapshot.supernet_state)
        session.state = snapshot.search_state or new_search_state(
            snapshot.template, snapshot.alpha, session.seed
        )
        session.phase = snapshot.phase if snapshot.phase != SEARCHING else PAUSED
        session.events = list(snapshot.events)
        session.runlog = list(snapshot.runlog)
        session.embedding = snapshot.embedding
        session.training_curve = list(snapshot.training_curve)
        session.finalize_report = None
        session.steering_queue = queue.Queue()
        session.worker = None
        session.stop_flag = threading.Event()
        return session


def state_digest(doc: dict) -> str:
    reduced = {k: v for k, v in doc.items() if k != "digest"}
    return hashlib.sha256(canonical_json(reduced).encode("utf-8")).hexdigest()


def replay_events(events: list[dict]) -> dict:
    """Fold an event log into the read-state document it should reproduce."""
    phase = CONFIGURING
    iteration = 0
    template_version = 0
    population: list[dict] = []
    by_id: dict[int, dict] = {}
    loss_history: list[list] = []
    pruned: list[int] = []
    fixed: list[int] = []
    region = None
    fitness_digest = None
    for event in events:
        kind, payload = event["kind"], event["payload"]
        if kind == "phase_changed":
            phase = payload["phase"]
            if payload.get("invalidated"):
                iteration = 0
                population = []
                by_id.clear()
                loss_history = []
                pruned, fixed, region = [], [], None
                fitness_digest = None
                template_version = payload.get("new_version", template_version)
        elif kind == "iteration_done":
            iteration = payload["iteration"]
            members = [dict(m, iteration_evaluated=iteration) for m in payload["members"]]
            for m in members:
                by_id[m["id"]] = m
            population = [by_id[i] for i in payload["survivors"]] + members
            loss_history.append([iteration] + list(payload["loss"]))
            fitness_digest = payload["fitness_digest"]
        elif kind == "constraint_changed":
            pruned = payload["pruned"]
            fixed = payload["fixed"]
            region = payload["region_member_ids"]
            fitness_digest = payload["fitness_digest"]
    doc = {
        "schema_version": 1,
        "phase": phase,
        "iteration": iteration,
        "template_version": template_version,
        "population": [
            {
                "id": m["id"],
                "mask": m["mask"],
                "accuracy": m["accuracy"],
                "iteration_evaluated": m.get("iteration_evaluated"),
                "origin": m.get("origin"),
            }
            for m in population
        ],
        "loss_history": loss_history,
        "pruned": pruned,
        "fixed": fixed,
        "region_member_ids": region,
        "fitness_digest": fitness_digest,
    }
    doc["digest"] = state_digest(doc)
    return doc


# ---------------------------------------------------------------------------
# HTTP app
# ---------------------------------------------------------------------------


_EDIT_KINDS = {
    "add_node": lambda d: AddNode(cell_id=d["cell_id"]),
    "remove_node": lambda d: RemoveNode(cell_id=d["cell_id"], node_id=d["node_id"]),
    "add_cell": lambda d: AddCell(
        kind=d["cell_kind"], nodes_per_cell=d.get("nodes_per_cell", 4), position=d.get("position")
    ),
    "remove_cell": lambda d: RemoveCell(cell_id=d["cell_id"]),
    "set_op_params": lambda d: SetOpParams(
        op_name=d["op_name"], params=d["params"], cell_id=d.get("cell_id")
    ),
    "remove_op": lambda d: RemoveOp(
        op_tag=d["op_tag"],
        op_name=d.get("op_name", ""),
        cell_id=d.get("cell_id"),
        dst_node=d.get("dst_node"),
        source=d.get("source"),
    ),
}


def _json_response(doc, status_code: int = 200) -> Response:
    return Response(
        content=canonical_json(doc), media_type="application/json", status_code=status_code
    )


def _error(status: int, message: str, field: str | None = None) -> Response:
    doc = {"error": message}
    if field is not None:
        doc["field"] = field
    return _json_response(doc, status_code=status)


def _parse_shape(doc):
    if not isinstance(doc, list) or not doc:
        raise SteeringError("shape must be a non-empty list")
    if doc[0] == "rect":
        if len(doc) != 5:
            raise SteeringError("rect shape is ['rect', x0, y0, x1, y1]")
        return ("rect", *(float(x) for x in doc[1:]))
    if doc[0] == "polygon":
        return ("polygon", tuple((float(x), float(y)) for x, y in doc[1]))
    raise SteeringError(f"unknown shape kind {doc[0]!r}")


def create_app() -> FastAPI:
    app = FastAPI(title="cellsearch", version="1")
    sessions: dict[str, Session] = {}

    def get_session(session_id: str) -> Session:
        session = sessions.get(session_id)
        if session is None:
            raise NotFound(f"no session {session_id}")
        return session

    @app.exception_handler(NotFound)
    async def _not_found(_req: Request, err: NotFound):
        return _error(404, str(err))

    @app.exception_handler(PhaseError)
    async def _conflict(_req: Request, err: PhaseError):
        return _error(409, str(err))

    for exc in (TemplateError, MaskError, SearchError, SteeringError, EvaluationError, ArchiveError, KeyError, ValueError):
        @app.exception_handler(exc)
        async def _unprocessable(_req: Request, err: Exception):
            return _error(422, f"{type(err).__name__}: {err}")

    def session_doc(session: Session) -> dict:
        return {
            "schema_version": 1,
            "session_id": session.id,
            "phase": session.phase,
            "alpha": session.alpha,
            "seed": session.seed,
            "evaluator": session.evaluator_spec.to_json(),
            "template_version": session.template.version,
            "path_count": session.template.path_count,
            "population_size": population_size(session.template),
            "iteration": session.state.iteration,
            "event_seq": len(session.events),
        }

    # -- sessions ------------------------------------------------------------

    @app.post(API_PREFIX + "/sessions")
    def create_session(payload: dict = Body(...)):
        template_doc = payload.get("template", {})
        if isinstance(template_doc, str):
            template = TemplateNetwork.from_json(template_doc)
        else:
            template = build_template(
                dataset_tag=template_doc.get("dataset_tag", "toy"),
                num_normal=template_doc.get("num_normal"),
                num_reduction=template_doc.get("num_reduction"),
                nodes_per_cell=template_doc.get("nodes_per_cell", 4),
            )
        evaluator_spec = EvaluatorSpec.from_json(
            payload.get("evaluator", {"kind": "tabular", "seed": 0, "dropout_prob": 0.0})
        )
        alpha = float(payload.get("alpha", 0.5))
        seed = int(payload.get("seed", 0))
        session = Session(str(uuid.uuid4()), template, evaluator_spec, alpha, seed)
        sessions[session.id] = session
        session.emit("phase_changed", {"phase": CONFIGURING})
        return _json_response(session_doc(session), status_code=201)

    @app.get(API_PREFIX + "/sessions")
    def list_sessions():
        return _json_response({"sessions": sorted(sessions)})

    @app.get(API_PREFIX + "/sessions/{session_id}")
    def get_session_summary(session_id: str):
        return _json_response(session_doc(get_session(session_id)))

    # -- template ----------------------------------------------------------------

    @app.get(API_PREFIX + "/sessions/{session_id}/template")
    def get_template(session_id: str):
        session = get_session(session_id)
        return Response(content=session.template.to_json(), media_type="application/json")

    @app.put(API_PREFIX + "/sessions/{session_id}/template")
    def put_template(session_id: str, payload: dict = Body(...)):
        session = get_session(session_id)
        if session.busy():
            raise PhaseError("pause the session before replacing the template")
        document = payload.get("template")
        if not isinstance(document, str):
            return _error(422, "body must carry the template document as a string", field="template")
        template = TemplateNetwork.from_json(document)
        with session.lock:
            session.template = template
            session.evaluator = session.evaluator_spec.build(template)
            session.state = new_search_state(template, session.alpha, session.seed)
            session.embedding = None
            session.runlog = []
            session.training_curve = []
        phase = CONFIGURING if session.phase == CONFIGURING else PAUSED
        session.phase = phase
        session.emit(
            "phase_changed",
            {"phase": phase, "reason": "template_replaced", "invalidated": True,
             "new_version": template.version},
        )
        return _json_response({"template_version": template.version})

    @app.post(API_PREFIX + "/sessions/{session_id}/template/edits")
    def post_edit(session_id: str, payload: dict = Body(...)):
        session = get_session(session_id)
        kind = payload.get("kind")
        if kind not in _EDIT_KINDS:
            return _error(422, f"unknown edit kind {kind!r}", field="kind")
        edit = _EDIT_KINDS[kind](payload)
        report = session.apply_edit(edit)
        return _json_response(report)

    # -- training ------------------------------------------------------------------

    @app.post(API_PREFIX + "/sessions/{session_id}/training/start")
    def start_training(session_id: str, payload: dict = Body(default={})):
        session = get_session(session_id)
        session.start_training(int(payload.get("epochs", 10)))
        return _json_response({"status": "training"}, status_code=202)

    @app.post(API_PREFIX + "/sessions/{session_id}/training/stop")
    def stop_training(session_id: str):
        session = get_session(session_id)
        session.pause()
        return _json_response({"status": "stopped", "epochs": len(session.training_curve)})

    @app.get(API_PREFIX + "/sessions/{session_id}/training/curve")
    def training_curve(session_id: str):
        session = get_session(session_id)
        return _json_response({"curve": [list(p) for p in session.training_curve]})

    # -- search ---------------------------------------------------------------------

    @app.post(API_PREFIX + "/sessions/{session_id}/search/start")
    def start_search(session_id: str, payload: dict = Body(default={})):
        session = get_session(session_id)
        session.start_search(int(payload.get("iterations", 10)))
        return _json_response({"status": "searching"}, status_code=202)

    @app.post(API_PREFIX + "/sessions/{session_id}/search/step")
    def step_search(session_id: str, payload: dict = Body(default={})):
        session = get_session(session_id)
        session.start_search(int(payload.get("iterations", 1)))
        return _json_response({"status": "searching"}, status_code=202)

    @app.post(API_PREFIX + "/sessions/{session_id}/search/pause")
    def pause_search(session_id: str):
        session = get_session(session_id)
        session.pause()
        return _json_response({"status": session.phase})

    @app.get(API_PREFIX + "/sessions/{session_id}/state")
    def get_state(session_id: str):
        return _json_response(get_session(session_id).read_state_doc())

    @app.get(API_PREFIX + "/sessions/{session_id}/fitness")
    def get_fitness(session_id: str):
        session = get_session(session_id)
        with session.lock:
            table = session.state.fitness
            doc = {
                "schema_version": 1,
                "alpha": table.alpha,
                "fitness": [float(x) for x in table.fitness],
                "frequency": [int(x) for x in table.frequency],
                "groups": [list(g) for g in table.groups],
                "digest": table.digest(),
            }
        return _json_response(doc)

    @app.get(API_PREFIX + "/sessions/{session_id}/candidates/{candidate_id}")
    def get_candidate(session_id: str, candidate_id: int):
        session = get_session(session_id)
        with session.lock:
            for record in session.state.evaluations:
                if record.id == candidate_id:
                    return _json_response(
                        {
                            "id": record.id,
                            "mask": record.mask.to_hex(),
                            "active_paths": list(record.mask.active()),
                            "accuracy": record.accuracy,
                            "iteration_evaluated": record.iteration_evaluated,
                            "origin": record.origin,
                        }
                    )
        raise NotFound(f"no candidate {candidate_id}")

    # -- embedding ---------------------------------------------------------------------

    @app.post(API_PREFIX + "/sessions/{session_id}/embedding/recompute")
    def recompute_embedding(session_id: str, payload: dict = Body(default={})):
        session = get_session(session_id)
        if session.busy():
            raise PhaseError("cannot recompute the embedding while a job runs")
        count = int(payload.get("count", 40))
        method = payload.get("method", "tsne")
        embedding = session.recompute_embedding(count, method)
        return _json_response({"digest": embedding.digest(), "method": embedding.method})

    @app.get(API_PREFIX + "/sessions/{session_id}/embedding")
    def get_embedding(session_id: str):
        session = get_session(session_id)
        if session.embedding is None:
            raise NotFound("no embedding computed yet")
        with session.lock:
            colored = recolor(session.embedding, session.state)
        return Response(content=colored.to_json(), media_type="application/json")

    # -- steering -----------------------------------------------------------------------

    @app.put(API_PREFIX + "/sessions/{session_id}/region")
    def put_region(session_id: str, payload: dict = Body(...)):
        session = get_session(session_id)
        if session.embedding is None:
            raise SteeringError("no embedding to resolve the region against")
        shape = _parse_shape(payload.get("shape"))
        claimed = payload.get("embedding_digest")
        if claimed is not None and claimed != session.embedding.digest():
            raise PhaseError("region was drawn on a stale embedding")
        region = steering.resolve_region(session.embedding, shape)
        probe = steering.set_region(session.state, region)  # validate before queueing
        del probe
        session.apply_steering(
            lambda s: steering.set_region(s, region),
            {"kind": "set_region", "member_ids": list(region.member_ids), "shape": list(payload["shape"])},
        )
        return _json_response({"member_ids": list(region.member_ids)})

    @app.delete(API_PREFIX + "/sessions/{session_id}/region")
    def delete_region(session_id: str):
        session = get_session(session_id)
        session.apply_steering(steering.clear_region, {"kind": "clear_region"})
        return _json_response({"status": "cleared"})

    @app.post(API_PREFIX + "/sessions/{session_id}/set-operation")
    def set_operation(session_id: str, payload: dict = Body(...)):
        session = get_session(session_id)
        if session.embedding is None:
            raise SteeringError("no embedding to resolve the region against")
        shape = _parse_shape(payload.get("shape"))
        region = steering.resolve_region(session.embedding, shape)
        result = steering.set_operation(payload.get("op", ""), region, session.template)
        return _json_response(
            {
                "op": result.op,
                "path_ids": sorted(result.path_ids),
                "member_ids": list(result.member_ids),
            }
        )

    @app.post(API_PREFIX + "/sessions/{session_id}/paths/prune")
    def prune(session_id: str, payload: dict = Body(...)):
        session = get_session(session_id)
        ids = [int(p) for p in payload.get("path_ids", [])]
        probe = steering.prune_paths(session.state, ids)  # validate before queueing
        del probe
        session.apply_steering(
            lambda s: steering.prune_paths(s, ids), {"kind": "prune", "path_ids": sorted(ids)}
        )
        return _json_response({"pruned": sorted(session.state.pruned | set(ids))})

    @app.post(API_PREFIX + "/sessions/{session_id}/paths/fix")
    def fix(session_id: str, payload: dict = Body(...)):
        session = get_session(session_id)
        ids = [int(p) for p in payload.get("path_ids", [])]
        probe = steering.fix_paths(session.state, ids)
        del probe
        session.apply_steering(
            lambda s: steering.fix_paths(s, ids), {"kind": "fix", "path_ids": sorted(ids)}
        )
        return _json_response({"fixed": sorted(session.state.fixed | set(ids))})

    # -- finalize / export -------------------------------------------------------------

    @app.post(API_PREFIX + "/sessions/{session_id}/finalize")
    def finalize(session_id: str, payload: dict = Body(default={})):
        session = get_session(session_id)
        if session.busy():
            raise PhaseError("cannot finalize while a job runs")
        with session.lock:
            evaluated = [m for m in session.state.population if m.evaluated]
            if not evaluated:
                raise SearchError("no evaluated candidates to finalize")
            best = session.state.best()
            budget = int(payload.get("budget_epochs", 10))
            if isinstance(session.evaluator, TabularOracle):
                report = session.evaluator.finalize(best.mask)
            else:
                report = finalize_candidate(
                    session.evaluator, best.mask, budget, session.hub.stream("finalize")
                )
            session.finalize_report = report
        session.set_phase(FINALIZED)
        return _json_response(
            {
                "candidate_id": best.id,
                "accuracy": report.accuracy,
                "parameter_count": report.parameter_count,
                "epochs": report.epochs,
            }
        )

    @app.get(API_PREFIX + "/sessions/{session_id}/export")
    def export(session_id: str):
        session = get_session(session_id)
        with session.lock:
            count = None
            if isinstance(session.evaluator, SupernetEvaluator):
                count = session.evaluator.parameter_count(session.state.best().mask)
            doc = export_best(
                session.state, session.template, session.finalize_report, parameter_count=count
            )
        return _json_response(doc)

    @app.get(API_PREFIX + "/sessions/{session_id}/runlog")
    def runlog(session_id: str):
        session = get_session(session_id)
        with session.lock:
            body = "".join(session.runlog)
        return PlainTextResponse(body, media_type="application/x-ndjson")

    # -- events -------------------------------------------------------------------------

    @app.get(API_PREFIX + "/sessions/{session_id}/events")
    def events(session_id: str, since: int = Query(default=0)):
        session = get_session(session_id)
        with session.lock:
            backlog = [e for e in session.events if e["seq"] > since]
        body = "".join(dump_line(e) for e in backlog)
        return PlainTextResponse(body, media_type="application/x-ndjson")

    # -- persistence -----------------------------------------------------------------------

    @app.post(API_PREFIX + "/sessions/{session_id}/save")
    def save(session_id: str, payload: dict = Body(...)):
        session = get_session(session_id)
        if session.busy():
            raise PhaseError("pause the session before saving")
        path = save_session(session.snapshot(), payload["path"])
        return _json_response({"path": str(path)})

    @app.post(API_PREFIX + "/sessions/load")
    def load(payload: dict = Body(...)):
        snapshot = load_session(payload["path"])
        session = Session.from_snapshot(snapshot)
        sessions[session.id] = session
        return _json_response(session_doc(session), status_code=201)

    app.state.sessions = sessions
    _mount_console(app)
    return app


def _mount_console(app: FastAPI) -> None:
    """Serve the operator console when a built frontend sits next to the package."""
    from pathlib import Path

    for candidate in (
        Path(__file__).resolve().parent.parent.parent / "frontend",
        Path.cwd() / "frontend",
    ):
        if (candidate / "index.html").exists() and (candidate / "dist").exists():
            from fastapi.staticfiles import StaticFiles

            app.mount("/ui", StaticFiles(directory=str(candidate), html=True), name="console")
            return


app = create_app()
