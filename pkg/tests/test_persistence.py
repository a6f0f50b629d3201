import json
from pathlib import Path

import numpy as np
import pytest

from cellsearch.bench import RunConfig, run_ea, run_headless
from cellsearch.evaluation import EvaluatorSpec
from cellsearch.evolution import new_search_state, run_search, seed_population
from cellsearch.persistence import (
    ArchiveError,
    SessionSnapshot,
    export_best,
    load_session,
    replay_verify,
    save_session,
    search_state_from_json,
    search_state_to_json,
)
from cellsearch.rng import RngHub
from cellsearch.steering import fix_paths, prune_paths
from cellsearch.supergraph import build_template

TWO_CELL = build_template("toy", 1, 1, 2)


def small_config(**overrides):
    doc = {
        "template": {"dataset_tag": "toy", "num_normal": 1, "num_reduction": 1, "nodes_per_cell": 2},
        "evaluator": {"kind": "tabular", "seed": 3, "dropout_prob": 0.0},
        "iterations": 10,
        "seeds": [0],
    }
    doc.update(overrides)
    return RunConfig.from_dict(doc)


def run_some_search(seed=0, iterations=10):
    config = small_config(seeds=[seed], iterations=iterations)
    return config, run_headless(config, seed=seed)


def make_snapshot(tmp_path, seed=0, iterations=10):
    config, result = run_some_search(seed, iterations)
    template = config.build_template()
    return SessionSnapshot(
        session_id=f"s{seed}",
        phase="paused",
        template=template,
        evaluator_spec=config.build_evaluator_spec(),
        hub_state=RngHub(seed).state(),
        search_state=result.final_state,
        runlog=result.runlog,
        alpha=0.5,
    )


class TestSearchStateRoundTrip:
    def test_bit_exact_json(self):
        _, result = run_some_search()
        text = search_state_to_json(result.final_state)
        state = search_state_from_json(text, TWO_CELL)
        assert search_state_to_json(state) == text

    def test_round_trip_with_steering_state(self):
        _, result = run_some_search()
        state = prune_paths(result.final_state, [0])
        state = fix_paths(state, [13])
        text = search_state_to_json(state)
        again = search_state_from_json(text, TWO_CELL)
        assert again.pruned == state.pruned
        assert again.fixed == state.fixed
        assert search_state_to_json(again) == text


class TestSessionArchive:
    def test_save_load_save_byte_identical(self, tmp_path):
        snapshot = make_snapshot(tmp_path)
        first = tmp_path / "a"
        second = tmp_path / "b"
        save_session(snapshot, first)
        loaded = load_session(first)
        save_session(loaded, second)
        for name in sorted(p.name for p in first.iterdir()):
            assert (first / name).read_bytes() == (second / name).read_bytes(), name

    def test_unknown_schema_version_rejected_with_hint(self, tmp_path):
        snapshot = make_snapshot(tmp_path)
        root = save_session(snapshot, tmp_path / "arch")
        manifest = json.loads((root / "manifest.json").read_text())
        manifest["schema_version"] = 99
        (root / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(ArchiveError, match="migrate"):
            load_session(root)

    def test_truncated_runlog_names_line(self, tmp_path):
        snapshot = make_snapshot(tmp_path)
        root = save_session(snapshot, tmp_path / "arch")
        lines = (root / "runlog.jsonl").read_text().splitlines()
        lines[2] = lines[2][: len(lines[2]) // 2]  # corrupt line 3
        (root / "runlog.jsonl").write_text("\n".join(lines))
        with pytest.raises(ArchiveError, match="line 3"):
            load_session(root)

    def test_missing_archive(self, tmp_path):
        with pytest.raises(ArchiveError):
            load_session(tmp_path / "nope")

    def test_rng_positions_resume_identically(self, tmp_path):
        # save mid-search, reload, continue: identical to an uninterrupted run
        config = small_config(iterations=20)
        template = config.build_template()
        spec = config.build_evaluator_spec()
        oracle = spec.build(template)
        alpha = config.resolve_alpha(template, oracle)

        hub_a = RngHub(0)
        state_a = seed_population(new_search_state(template, alpha, 0), oracle, hub_a)
        state_a = run_search(state_a, oracle, hub_a, 20)

        hub_b = RngHub(0)
        state_b = seed_population(new_search_state(template, alpha, 0), oracle, hub_b)
        state_b = run_search(state_b, oracle, hub_b, 8)
        snapshot = SessionSnapshot(
            session_id="mid",
            phase="paused",
            template=template,
            evaluator_spec=spec,
            hub_state=hub_b.state(),
            search_state=state_b,
            alpha=alpha,
        )
        root = save_session(snapshot, tmp_path / "mid")
        loaded = load_session(root)
        hub_c = RngHub.from_state(loaded.hub_state)
        resumed = run_search(loaded.search_state, oracle, hub_c, 12)

        assert resumed.iteration == state_a.iteration
        assert search_state_to_json(resumed) == search_state_to_json(state_a)


class TestReplayVerify:
    def test_replay_recomputes_all_digests(self):
        config, result = run_some_search(iterations=25)
        report = replay_verify(config.build_template(), result.runlog)
        assert report.ok
        assert report.iterations_checked == 26  # seed record + 25 iterations

    def test_replay_detects_tampered_accuracy(self):
        config, result = run_some_search()
        lines = list(result.runlog)
        record = json.loads(lines[3])
        record["members"][0]["accuracy"] = 0.123456
        lines[3] = json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n"
        report = replay_verify(config.build_template(), lines)
        assert not report.ok
        assert report.mismatches

    def test_replay_handles_steer_records(self):
        config = small_config(iterations=6)
        template = config.build_template()
        spec = config.build_evaluator_spec()
        oracle = spec.build(template)
        alpha = config.resolve_alpha(template, oracle)
        from cellsearch.persistence import dump_line, header_record, iteration_record, steer_record

        hub = RngHub(1)
        state = seed_population(new_search_state(template, alpha, 1), oracle, hub)
        runlog = [
            dump_line(header_record(template, spec, alpha, 1, "ea", 4, 2, 0.05)),
            dump_line(iteration_record(state, hub.digest())),
        ]
        state = run_search(
            state,
            oracle,
            hub,
            3,
            on_iteration=lambda _p, s: runlog.append(dump_line(iteration_record(s, hub.digest()))),
        )
        state = prune_paths(state, [2])
        runlog.append(dump_line(steer_record(state.iteration, {"kind": "prune", "path_ids": [2]})))
        state = run_search(
            state,
            oracle,
            hub,
            3,
            on_iteration=lambda _p, s: runlog.append(dump_line(iteration_record(s, hub.digest()))),
        )
        report = replay_verify(template, runlog)
        assert report.ok

    def test_random_strategy_replay(self):
        config = small_config(strategy="random", iterations=8)
        result = run_headless(config)
        report = replay_verify(config.build_template(), result.runlog)
        assert report.ok

    def test_corrupt_line_raises_with_number(self):
        config, result = run_some_search()
        lines = list(result.runlog)
        lines[1] = "{broken json\n"
        with pytest.raises(ArchiveError, match="line 2"):
            replay_verify(config.build_template(), lines)


class TestExportBest:
    def test_export_contains_architecture(self):
        config, result = run_some_search()
        doc = export_best(result.final_state, config.build_template())
        assert doc["accuracy"] == result.final_state.best().accuracy
        assert len(doc["paths"]) == 8  # 2 cells x 2 nodes x 2 inputs
        mask_paths = {(p["cell_id"], p["dst_node"], p["source"]) for p in doc["paths"]}
        assert len(mask_paths) == 8

    def test_tie_breaks_to_lower_id(self):
        import dataclasses

        from cellsearch.candidate import CandidateRecord, Mask, sample_mask

        _, result = run_some_search()
        state = result.final_state
        best = state.best()
        clone = CandidateRecord(
            id=best.id + 1000, mask=best.mask, accuracy=best.accuracy, iteration_evaluated=1
        )
        state = dataclasses.replace(state, population=state.population + (clone,))
        doc = export_best(state, TWO_CELL)
        assert doc["candidate_id"] == best.id
        assert doc["tie"] is True

    def test_no_evaluations_rejected(self):
        state = new_search_state(TWO_CELL, 0.5, 0)
        with pytest.raises(ArchiveError):
            export_best(state, TWO_CELL)

    def test_reexported_mask_reevaluates_identically(self):
        config, result = run_some_search()
        doc = export_best(result.final_state, TWO_CELL)
        from cellsearch.candidate import Mask

        oracle = config.build_evaluator_spec().build(TWO_CELL)
        mask = Mask.from_hex(doc["mask"], doc["mask_length"], doc["template_version"])
        assert oracle.evaluate(mask) == doc["accuracy"]
