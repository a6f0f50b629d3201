import json
import time

import pytest
from fastapi.testclient import TestClient

from cellsearch.service import create_app, replay_events, state_digest

API = "/api/v1"


@pytest.fixture()
def client():
    app = create_app()
    with TestClient(app) as c:
        yield c


def create_tabular_session(client, seed=0, oracle_seed=3, **extra):
    payload = {
        "template": {"dataset_tag": "toy", "num_normal": 1, "num_reduction": 1, "nodes_per_cell": 2},
        "evaluator": {"kind": "tabular", "seed": oracle_seed, "dropout_prob": 0.0},
        "seed": seed,
    }
    payload.update(extra)
    response = client.post(f"{API}/sessions", json=payload)
    assert response.status_code == 201, response.text
    return response.json()["session_id"]


def wait_for_phase(client, sid, phase, timeout=30.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        doc = client.get(f"{API}/sessions/{sid}/state").json()
        if doc["phase"] == phase:
            return doc
        time.sleep(0.02)
    raise AssertionError(f"session never reached phase {phase}")


def events_of(client, sid, since=0):
    text = client.get(f"{API}/sessions/{sid}/events", params={"since": since}).text
    return [json.loads(line) for line in text.splitlines() if line.strip()]


class TestSessionLifecycle:
    def test_create_and_get(self, client):
        sid = create_tabular_session(client)
        doc = client.get(f"{API}/sessions/{sid}").json()
        assert doc["phase"] == "configuring"
        assert doc["path_count"] == 60
        assert doc["population_size"] == 4

    def test_unknown_session_404(self, client):
        assert client.get(f"{API}/sessions/nope").status_code == 404

    def test_template_fetch(self, client):
        sid = create_tabular_session(client)
        doc = client.get(f"{API}/sessions/{sid}/template").json()
        assert doc["schema_version"] == 1
        assert len(doc["cells"]) == 2

    def test_search_runs_to_paused(self, client):
        sid = create_tabular_session(client)
        r = client.post(f"{API}/sessions/{sid}/search/start", json={"iterations": 5})
        assert r.status_code == 202
        doc = wait_for_phase(client, sid, "paused")
        assert doc["iteration"] == 5
        kinds = [e["kind"] for e in events_of(client, sid)]
        assert kinds.count("iteration_done") == 6  # seeding plus 5 iterations

    def test_iteration_events_gap_free(self, client):
        sid = create_tabular_session(client)
        client.post(f"{API}/sessions/{sid}/search/start", json={"iterations": 10})
        wait_for_phase(client, sid, "paused")
        events = events_of(client, sid)
        seqs = [e["seq"] for e in events]
        assert seqs == list(range(1, len(seqs) + 1))
        iterations = [e["payload"]["iteration"] for e in events if e["kind"] == "iteration_done"]
        assert iterations == list(range(0, 11))

    def test_step_advances_one(self, client):
        sid = create_tabular_session(client)
        client.post(f"{API}/sessions/{sid}/search/start", json={"iterations": 2})
        wait_for_phase(client, sid, "paused")
        before = client.get(f"{API}/sessions/{sid}/state").json()["iteration"]
        client.post(f"{API}/sessions/{sid}/search/step", json={})
        wait_for_phase(client, sid, "paused")
        after = client.get(f"{API}/sessions/{sid}/state").json()["iteration"]
        assert after == before + 1

    def test_zero_iterations_rejected(self, client):
        sid = create_tabular_session(client)
        r = client.post(f"{API}/sessions/{sid}/search/start", json={"iterations": 0})
        assert r.status_code == 422


class TestReads:
    def test_repeated_gets_byte_identical(self, client):
        sid = create_tabular_session(client)
        client.post(f"{API}/sessions/{sid}/search/start", json={"iterations": 3})
        wait_for_phase(client, sid, "paused")
        a = client.get(f"{API}/sessions/{sid}/state").content
        b = client.get(f"{API}/sessions/{sid}/state").content
        assert a == b
        fa = client.get(f"{API}/sessions/{sid}/fitness").content
        fb = client.get(f"{API}/sessions/{sid}/fitness").content
        assert fa == fb

    def test_candidate_lookup(self, client):
        sid = create_tabular_session(client)
        client.post(f"{API}/sessions/{sid}/search/start", json={"iterations": 2})
        wait_for_phase(client, sid, "paused")
        state = client.get(f"{API}/sessions/{sid}/state").json()
        cid = state["population"][0]["id"]
        doc = client.get(f"{API}/sessions/{sid}/candidates/{cid}").json()
        assert doc["id"] == cid
        assert doc["accuracy"] is not None

    def test_event_replay_reconstructs_state_digest(self, client):
        sid = create_tabular_session(client)
        client.post(f"{API}/sessions/{sid}/search/start", json={"iterations": 6})
        wait_for_phase(client, sid, "paused")
        state = client.get(f"{API}/sessions/{sid}/state").json()
        replayed = replay_events(events_of(client, sid))
        # template_version is not carried by events unless an edit happened
        replayed["template_version"] = state["template_version"]
        replayed["digest"] = state_digest(replayed)
        assert replayed["digest"] == state["digest"]

    def test_event_stream_resume_semantics(self, client):
        sid = create_tabular_session(client)
        client.post(f"{API}/sessions/{sid}/search/start", json={"iterations": 4})
        wait_for_phase(client, sid, "paused")
        all_events = events_of(client, sid)
        tail = events_of(client, sid, since=all_events[2]["seq"])
        assert tail == all_events[3:]


class TestTemplateEdit:
    def test_edit_during_search_pauses_and_invalidates(self, client):
        sid = create_tabular_session(client)
        client.post(f"{API}/sessions/{sid}/search/start", json={"iterations": 4})
        wait_for_phase(client, sid, "paused")
        client.post(f"{API}/sessions/{sid}/search/start", json={"iterations": 200})
        r = client.post(
            f"{API}/sessions/{sid}/template/edits", json={"kind": "remove_op", "op_tag": "skip"}
        )
        assert r.status_code == 200
        doc = client.get(f"{API}/sessions/{sid}/state").json()
        assert doc["phase"] == "paused"
        assert doc["iteration"] == 0  # state invalidated
        assert doc["template_version"] == 1
        kinds = [e["kind"] for e in events_of(client, sid)]
        assert "phase_changed" in kinds
        invalidation = [
            e
            for e in events_of(client, sid)
            if e["kind"] == "phase_changed" and e["payload"].get("invalidated")
        ]
        assert invalidation and invalidation[-1]["payload"]["new_version"] == 1

    def test_bad_edit_rejected(self, client):
        sid = create_tabular_session(client)
        r = client.post(f"{API}/sessions/{sid}/template/edits", json={"kind": "warp"})
        assert r.status_code == 422

    def test_edit_in_configuring_keeps_phase(self, client):
        sid = create_tabular_session(client)
        r = client.post(f"{API}/sessions/{sid}/template/edits", json={"kind": "add_node", "cell_id": 0})
        assert r.status_code == 200
        assert client.get(f"{API}/sessions/{sid}").json()["phase"] == "configuring"

    def test_put_template_replaces_and_invalidates(self, client):
        from cellsearch.supergraph import build_template

        sid = create_tabular_session(client)
        client.post(f"{API}/sessions/{sid}/search/start", json={"iterations": 2})
        wait_for_phase(client, sid, "paused")
        replacement = build_template("toy", 1, 0, 1)
        r = client.put(
            f"{API}/sessions/{sid}/template", json={"template": replacement.to_json()}
        )
        assert r.status_code == 200
        doc = client.get(f"{API}/sessions/{sid}/template").json()
        assert len(doc["cells"]) == 1
        state = client.get(f"{API}/sessions/{sid}/state").json()
        assert state["iteration"] == 0 and state["phase"] == "paused"


class TestEmbeddingAndSteering:
    def setup_session(self, client, count=10):
        sid = create_tabular_session(client)
        client.post(f"{API}/sessions/{sid}/search/start", json={"iterations": 3})
        wait_for_phase(client, sid, "paused")
        r = client.post(f"{API}/sessions/{sid}/embedding/recompute", json={"count": count})
        assert r.status_code == 200, r.text
        return sid

    def region_shape(self, client, sid, take=4):
        emb = client.get(f"{API}/sessions/{sid}/embedding").json()
        xs = [c[0] for c in emb["coords"][:take]]
        ys = [c[1] for c in emb["coords"][:take]]
        return ["rect", min(xs) - 1e-6, min(ys) - 1e-6, max(xs) + 1e-6, max(ys) + 1e-6], emb

    def test_recompute_and_get(self, client):
        sid = self.setup_session(client)
        emb = client.get(f"{API}/sessions/{sid}/embedding").json()
        assert len(emb["ids"]) == 10
        assert len(emb["coords"]) == 10

    def test_embedding_missing_404(self, client):
        sid = create_tabular_session(client)
        assert client.get(f"{API}/sessions/{sid}/embedding").status_code == 404

    def test_region_set_and_constrained_iteration(self, client):
        sid = self.setup_session(client)
        shape, emb = self.region_shape(client, sid)
        r = client.put(f"{API}/sessions/{sid}/region", json={"shape": shape})
        assert r.status_code == 200, r.text
        members = r.json()["member_ids"]
        assert len(members) >= 2
        member_masks = {emb["masks"][emb["ids"].index(i)] for i in members}
        client.post(f"{API}/sessions/{sid}/search/start", json={"iterations": 2})
        wait_for_phase(client, sid, "paused")
        events = events_of(client, sid)
        fresh = [
            m
            for e in events
            if e["kind"] == "iteration_done" and e["payload"]["iteration"] > 3
            for m in e["payload"]["members"]
        ]
        assert fresh
        assert all(m["mask"] in member_masks for m in fresh)

    def test_stale_region_digest_conflict(self, client):
        sid = self.setup_session(client)
        shape, _ = self.region_shape(client, sid)
        r = client.put(
            f"{API}/sessions/{sid}/region",
            json={"shape": shape, "embedding_digest": "deadbeef"},
        )
        assert r.status_code == 409

    def test_clear_region(self, client):
        sid = self.setup_session(client)
        shape, _ = self.region_shape(client, sid)
        client.put(f"{API}/sessions/{sid}/region", json={"shape": shape})
        r = client.delete(f"{API}/sessions/{sid}/region")
        assert r.status_code == 200
        doc = client.get(f"{API}/sessions/{sid}/state").json()
        assert doc["region_member_ids"] is None

    def test_set_operation_endpoint(self, client):
        sid = self.setup_session(client)
        shape, emb = self.region_shape(client, sid)
        r = client.post(f"{API}/sessions/{sid}/set-operation", json={"op": "union", "shape": shape})
        assert r.status_code == 200
        doc = r.json()
        assert doc["op"] == "union"
        assert doc["path_ids"]

    def test_prune_and_fix_via_api(self, client):
        sid = self.setup_session(client)
        r = client.post(f"{API}/sessions/{sid}/paths/prune", json={"path_ids": [0]})
        assert r.status_code == 200
        r = client.post(f"{API}/sessions/{sid}/paths/fix", json={"path_ids": [7]})
        assert r.status_code == 200
        doc = client.get(f"{API}/sessions/{sid}/state").json()
        assert doc["pruned"] == [0]
        assert doc["fixed"] == [7]
        r = client.post(f"{API}/sessions/{sid}/paths/prune", json={"path_ids": [7]})
        assert r.status_code == 422  # fixed paths cannot be pruned


class TestFinalizeExportPersistence:
    def test_finalize_and_export(self, client):
        sid = create_tabular_session(client)
        client.post(f"{API}/sessions/{sid}/search/start", json={"iterations": 4})
        wait_for_phase(client, sid, "paused")
        r = client.post(f"{API}/sessions/{sid}/finalize", json={})
        assert r.status_code == 200
        assert client.get(f"{API}/sessions/{sid}").json()["phase"] == "finalized"
        doc = client.get(f"{API}/sessions/{sid}/export").json()
        assert doc["finalize"]["accuracy"] == r.json()["accuracy"]

    def test_save_load_continues_identically(self, client, tmp_path):
        # the same seed run uninterrupted vs saved/loaded mid-way: identical run logs
        sid_full = create_tabular_session(client, seed=5)
        client.post(f"{API}/sessions/{sid_full}/search/start", json={"iterations": 12})
        wait_for_phase(client, sid_full, "paused")
        full_log = client.get(f"{API}/sessions/{sid_full}/runlog").text

        sid_half = create_tabular_session(client, seed=5)
        client.post(f"{API}/sessions/{sid_half}/search/start", json={"iterations": 5})
        wait_for_phase(client, sid_half, "paused")
        save = client.post(
            f"{API}/sessions/{sid_half}/save", json={"path": str(tmp_path / "mid")}
        )
        assert save.status_code == 200

        loaded = client.post(f"{API}/sessions/load", json={"path": str(tmp_path / "mid")})
        assert loaded.status_code == 201
        sid_loaded = loaded.json()["session_id"]
        client.post(f"{API}/sessions/{sid_loaded}/search/start", json={"iterations": 7})
        wait_for_phase(client, sid_loaded, "paused")
        resumed_log = client.get(f"{API}/sessions/{sid_loaded}/runlog").text
        assert resumed_log == full_log

    def test_pause_then_resume(self, client):
        sid = create_tabular_session(client)
        client.post(f"{API}/sessions/{sid}/search/start", json={"iterations": 400})
        time.sleep(0.1)
        client.post(f"{API}/sessions/{sid}/search/pause")
        doc = client.get(f"{API}/sessions/{sid}/state").json()
        assert doc["phase"] == "paused"
        paused_at = doc["iteration"]
        assert paused_at < 400
        client.post(f"{API}/sessions/{sid}/search/start", json={"iterations": 2})
        wait_for_phase(client, sid, "paused")
        assert client.get(f"{API}/sessions/{sid}/state").json()["iteration"] == paused_at + 2


class TestSupernetSession:
    def test_training_with_loss_ticks(self, client):
        payload = {
            "template": {"dataset_tag": "toy", "num_normal": 1, "num_reduction": 0, "nodes_per_cell": 1},
            "evaluator": {
                "kind": "supernet",
                "seed": 0,
                "dropout_prob": 0.1,
                "dataset": {"name": "moons", "n": 80, "width": 4, "lr": 0.2, "batch_size": 20},
            },
            "seed": 1,
        }
        r = client.post(f"{API}/sessions", json=payload)
        sid = r.json()["session_id"]
        r = client.post(f"{API}/sessions/{sid}/training/start", json={"epochs": 4})
        assert r.status_code == 202
        deadline = time.time() + 30
        while time.time() < deadline:
            curve = client.get(f"{API}/sessions/{sid}/training/curve").json()["curve"]
            if len(curve) == 4:
                break
            time.sleep(0.05)
        assert len(curve) == 4
        ticks = [e for e in events_of(client, sid) if e["kind"] == "loss_tick"]
        assert len(ticks) == 4
        # search now runs on the trained template
        client.post(f"{API}/sessions/{sid}/search/start", json={"iterations": 2})
        wait_for_phase(client, sid, "paused")

    def test_training_rejected_for_tabular(self, client):
        sid = create_tabular_session(client)
        r = client.post(f"{API}/sessions/{sid}/training/start", json={"epochs": 2})
        assert r.status_code == 409


class TestServedRunlogVerifies:
    def test_served_runlog_passes_replay_verification(self, client):
        from cellsearch.persistence import replay_verify
        from cellsearch.supergraph import TemplateNetwork

        sid = create_tabular_session(client)
        client.post(f"{API}/sessions/{sid}/search/start", json={"iterations": 8})
        wait_for_phase(client, sid, "paused")
        client.post(f"{API}/sessions/{sid}/paths/prune", json={"path_ids": [0]})
        client.post(f"{API}/sessions/{sid}/search/start", json={"iterations": 4})
        wait_for_phase(client, sid, "paused")
        template = TemplateNetwork.from_json(
            client.get(f"{API}/sessions/{sid}/template").text
        )
        lines = [l + "\n" for l in client.get(f"{API}/sessions/{sid}/runlog").text.splitlines()]
        report = replay_verify(template, lines)
        assert report.ok, report.mismatches
        assert report.iterations_checked == 13  # seed + 8 + 4


class TestCustomOps:
    def test_put_template_with_custom_op_and_param_edit(self, client):
        from cellsearch.supergraph import (
            CellSpec,
            NodeSpec,
            OpKind,
            TemplateNetwork,
            builtin_ops,
        )

        custom = OpKind.custom("gate", {"width": 8})
        nodes = (
            NodeSpec(
                node_id=0,
                allowed_inputs=(0, 1),
                input_ops=(builtin_ops() + (custom,),) * 2,
            ),
        )
        template = TemplateNetwork(cells=(CellSpec(cell_id=0, kind="normal", nodes=nodes),))
        sid = create_tabular_session(client)
        r = client.put(f"{API}/sessions/{sid}/template", json={"template": template.to_json()})
        assert r.status_code == 200
        r = client.post(
            f"{API}/sessions/{sid}/template/edits",
            json={"kind": "set_op_params", "op_name": "gate", "params": {"width": 32}},
        )
        assert r.status_code == 200
        doc = client.get(f"{API}/sessions/{sid}/template").json()
        widths = [
            op["params"]["width"]
            for cell in doc["cells"]
            for node in cell["nodes"]
            for inp in node["inputs"]
            for op in inp["ops"]
            if op["tag"] == "custom"
        ]
        assert widths == [32, 32]
        # the widened template still searches
        client.post(f"{API}/sessions/{sid}/search/start", json={"iterations": 2})
        wait_for_phase(client, sid, "paused")
        assert client.get(f"{API}/sessions/{sid}/state").json()["iteration"] == 2
