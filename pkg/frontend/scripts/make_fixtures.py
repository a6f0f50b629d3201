"""Record a real steering session for the console's replay tests.

Drives the service in-process: create a tabular session, search, map the
space, brush a region, search again, and dump the event log plus the
documents a client would have fetched.  Output lands in test/fixtures/.

Run from the repository root with the package installed:
    python3 frontend/scripts/make_fixtures.py
"""
import json
import time
from pathlib import Path

from fastapi.testclient import TestClient

from cellsearch.service import create_app

API = "/api/v1"
FIXTURES = Path(__file__).resolve().parent.parent / "test" / "fixtures"


def wait_paused(client, sid):
    for _ in range(1500):
        if client.get(f"{API}/sessions/{sid}/state").json()["phase"] == "paused":
            return
        time.sleep(0.02)
    raise RuntimeError("session never paused")


def main():
    FIXTURES.mkdir(parents=True, exist_ok=True)
    app = create_app()
    with TestClient(app) as client:
        payload = {
            "template": {"dataset_tag": "toy", "num_normal": 1, "num_reduction": 1, "nodes_per_cell": 2},
            "evaluator": {"kind": "tabular", "seed": 3, "dropout_prob": 0.0},
            "seed": 11,
        }
        sid = client.post(f"{API}/sessions", json=payload).json()["session_id"]
        template = client.get(f"{API}/sessions/{sid}/template").json()

        client.post(f"{API}/sessions/{sid}/search/start", json={"iterations": 3})
        wait_paused(client, sid)
        client.post(f"{API}/sessions/{sid}/embedding/recompute", json={"count": 10})
        embedding = client.get(f"{API}/sessions/{sid}/embedding").json()

        xs = [c[0] for c in embedding["coords"][:5]]
        ys = [c[1] for c in embedding["coords"][:5]]
        shape = ["rect", min(xs) - 1e-6, min(ys) - 1e-6, max(xs) + 1e-6, max(ys) + 1e-6]
        region = client.put(
            f"{API}/sessions/{sid}/region",
            json={"shape": shape, "embedding_digest": embedding["digest"]},
        ).json()

        client.post(f"{API}/sessions/{sid}/search/start", json={"iterations": 2})
        wait_paused(client, sid)

        events = client.get(f"{API}/sessions/{sid}/events").text
        state = client.get(f"{API}/sessions/{sid}/state").json()
        colored = client.get(f"{API}/sessions/{sid}/embedding").json()

        (FIXTURES / "events.ndjson").write_text(events)
        (FIXTURES / "template.json").write_text(json.dumps(template, sort_keys=True))
        (FIXTURES / "embedding.json").write_text(json.dumps(colored, sort_keys=True))
        (FIXTURES / "state.json").write_text(json.dumps(state, sort_keys=True))
        (FIXTURES / "region.json").write_text(
            json.dumps({"shape": shape, "member_ids": region["member_ids"]}, sort_keys=True)
        )
        print(f"wrote fixtures for session {sid}: {sorted(p.name for p in FIXTURES.iterdir())}")


if __name__ == "__main__":
    main()
