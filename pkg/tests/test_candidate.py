import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cellsearch.candidate import (
    CandidateRecord,
    Mask,
    MaskError,
    mask_is_valid,
    mask_to_subgraph,
    repair_mask,
    sample_mask,
    validate_mask,
)
from cellsearch.supergraph import build_template

TOY = build_template("toy", 1, 0, 1)  # 12 paths, one node
TWO_CELL = build_template("toy", 1, 1, 2)  # 60 paths


def uniform(template):
    return np.ones(template.path_count)


def path_by(template, source, op_tag, cell_id=0, dst_node=0):
    for p in template.paths:
        if (p.cell_id, p.dst_node, p.source, p.op.tag) == (cell_id, dst_node, source, op_tag):
            return p.path_id
    raise AssertionError("no such path")


class TestMask:
    def test_hex_round_trip(self):
        m = sample_mask(TWO_CELL, uniform(TWO_CELL), 3)
        again = Mask.from_hex(m.to_hex(), len(m), m.template_version)
        assert again == m
        assert hash(again) == hash(m)

    def test_length_must_match_template(self):
        with pytest.raises(MaskError):
            validate_mask(TOY, Mask([1] * 11, TOY.version))

    def test_version_mismatch_rejected(self):
        m = Mask([0] * 12, template_version=99)
        with pytest.raises(MaskError):
            validate_mask(TOY, m)

    def test_record_requires_paired_fields(self):
        m = Mask([0] * 12, TOY.version)
        with pytest.raises(MaskError):
            CandidateRecord(id=0, mask=m, accuracy=0.5)


class TestSampleMask:
    def test_degenerate_distribution(self):
        probs = np.zeros(12)
        a = path_by(TOY, 0, "sep_conv_3x3")
        b = path_by(TOY, 1, "avg_pool_3x3")
        probs[[a, b]] = 1.0
        m = sample_mask(TOY, probs, 0)
        assert set(m.active()) == {a, b}

    def test_fixed_seed_reproducible(self):
        assert sample_mask(TWO_CELL, uniform(TWO_CELL), 7) == sample_mask(
            TWO_CELL, uniform(TWO_CELL), 7
        )

    def test_exactly_two_bits_per_node(self):
        m = sample_mask(TOY, uniform(TOY), 5)
        assert m.popcount == 2
        validate_mask(TOY, m)

    def test_validity_property_many_trials(self):
        # 10^4 trials over random probability tables meeting the preconditions
        rng = np.random.default_rng(0)
        groups = TWO_CELL.node_groups()
        for _ in range(10_000):
            probs = rng.random(TWO_CELL.path_count) * (rng.random(TWO_CELL.path_count) > 0.3)
            feasible = True
            for group in groups.values():
                sources = {TWO_CELL.paths[p].source for p in group if probs[p] > 0}
                if len(sources) < 2:
                    feasible = False
            if not feasible:
                continue
            m = sample_mask(TWO_CELL, probs, rng)
            assert mask_is_valid(TWO_CELL, m)

    def test_infeasible_node_rejected(self):
        probs = np.zeros(12)
        # nonzero only on source 0
        for p in TOY.paths:
            if p.source == 0:
                probs[p.path_id] = 1.0
        with pytest.raises(MaskError):
            sample_mask(TOY, probs, 0)

    def test_forced_paths_always_present(self):
        a = path_by(TWO_CELL, 0, "skip", cell_id=0, dst_node=0)
        b = path_by(TWO_CELL, 1, "max_pool_3x3", cell_id=1, dst_node=1)
        for seed in range(50):
            m = sample_mask(TWO_CELL, uniform(TWO_CELL), seed, forced={a, b})
            assert a in m.active() and b in m.active()
            validate_mask(TWO_CELL, m)


class TestRepairMask:
    def test_identity_on_valid(self):
        m = sample_mask(TWO_CELL, uniform(TWO_CELL), 11)
        assert repair_mask(TWO_CELL, m, uniform(TWO_CELL), 0) == m

    def test_idempotent(self):
        rng = np.random.default_rng(2)
        for seed in range(200):
            bits = rng.random(TWO_CELL.path_count) < 0.2
            broken = Mask(bits, TWO_CELL.version)
            once = repair_mask(TWO_CELL, broken, uniform(TWO_CELL), seed)
            twice = repair_mask(TWO_CELL, once, uniform(TWO_CELL), seed + 1)
            assert once == twice
            validate_mask(TWO_CELL, once)

    def test_surplus_keeps_top_two_by_probability(self):
        a = path_by(TOY, 0, "max_pool_3x3")
        b = path_by(TOY, 1, "max_pool_3x3")
        c = path_by(TOY, 1, "skip")
        probs = np.full(12, 1e-3)
        probs[a], probs[b], probs[c] = 0.5, 0.3, 0.2
        broken = Mask.from_paths([a, b, c], 12, TOY.version)
        fixed = repair_mask(TOY, broken, probs, 0)
        assert set(fixed.active()) == {a, b}  # drop the 0.2 path

    def test_all_zero_mask_equals_fresh_sample(self):
        empty = Mask([0] * 12, TOY.version)
        assert repair_mask(TOY, empty, uniform(TOY), 9) == sample_mask(TOY, uniform(TOY), 9)

    def test_zero_probability_bits_dropped(self):
        a = path_by(TOY, 0, "skip")
        b = path_by(TOY, 1, "skip")
        c = path_by(TOY, 1, "sep_conv_5x5")
        probs = uniform(TOY)
        probs[b] = 0.0  # pruned
        broken = Mask.from_paths([a, b], 12, TOY.version)
        fixed = repair_mask(TOY, broken, probs, 1)
        assert b not in fixed.active()
        assert a in fixed.active()
        validate_mask(TOY, fixed)
        del c

    def test_same_source_pair_resolved(self):
        a = path_by(TOY, 0, "max_pool_3x3")
        b = path_by(TOY, 0, "skip")
        broken = Mask.from_paths([a, b], 12, TOY.version)
        fixed = repair_mask(TOY, broken, uniform(TOY), 4)
        sources = {TOY.paths[p].source for p in fixed.active()}
        assert sources == {0, 1}


class TestSubgraph:
    def test_single_node_cell_four_vertices(self):
        skip0 = path_by(TOY, 0, "skip")
        conv1 = path_by(TOY, 1, "sep_conv_3x3")
        m = Mask.from_paths([skip0, conv1], 12, TOY.version)
        g = mask_to_subgraph(TOY, m)
        assert g.vertex_count == 4
        assert sorted(g.labels) == ["C3", "IN", "IN", "SK"]
        assert g.is_acyclic()
        # data flow: each cell input feeds its op
        assert (0, 2) in g.edges and (1, 3) in g.edges

    def test_equal_masks_equal_graphs(self):
        m1 = sample_mask(TWO_CELL, uniform(TWO_CELL), 21)
        m2 = Mask(m1.bits, m1.template_version)
        assert mask_to_subgraph(TWO_CELL, m1) == mask_to_subgraph(TWO_CELL, m2)

    def test_injective_over_valid_masks(self):
        seen = {}
        for seed in range(100):
            m = sample_mask(TWO_CELL, uniform(TWO_CELL), seed)
            g = mask_to_subgraph(TWO_CELL, m)
            if g in seen:
                assert seen[g] == m
            seen[g] = m
        distinct_masks = len({m for m in seen.values()})
        assert len(seen) == distinct_masks

    def test_label_differs_on_single_op_change(self):
        a1 = path_by(TOY, 0, "skip")
        a2 = path_by(TOY, 0, "avg_pool_3x3")
        b = path_by(TOY, 1, "sep_conv_3x3")
        g1 = mask_to_subgraph(TOY, Mask.from_paths([a1, b], 12, TOY.version))
        g2 = mask_to_subgraph(TOY, Mask.from_paths([a2, b], 12, TOY.version))
        assert g1 != g2
        from collections import Counter

        c1, c2 = Counter(g1.labels), Counter(g2.labels)
        assert sum(((c1 - c2) + (c2 - c1)).values()) == 2  # one label swapped

    def test_invalid_mask_rejected(self):
        with pytest.raises(MaskError):
            mask_to_subgraph(TOY, Mask([1] * 12, TOY.version))

    def test_multi_cell_graph_is_acyclic_and_chained(self):
        m = sample_mask(TWO_CELL, uniform(TWO_CELL), 33)
        g = mask_to_subgraph(TWO_CELL, m)
        assert g.is_acyclic()
        # second cell's input-0 boundary has incoming edges from cell 0 ops
        in_index = g.keys.index(("in", TWO_CELL.cells[1].cell_id, 0))
        assert any(v == in_index for _, v in g.edges)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_sampling_always_valid_hypothesis(seed):
    m = sample_mask(TWO_CELL, uniform(TWO_CELL), seed)
    assert mask_is_valid(TWO_CELL, m)
