import itertools

import numpy as np
import pytest

from cellsearch.candidate import CandidateRecord, Mask, MaskError
from cellsearch.evaluation import EvaluatorSpec
from cellsearch.evolution import (
    SearchError,
    choose_parents,
    cross_over,
    crossover_with_selector,
    evolve,
    init_fitness,
    iteration_members,
    mutate,
    new_search_state,
    population_size,
    run_search,
    seed_population,
    update_fitness,
)
from cellsearch.rng import RngHub
from cellsearch.supergraph import build_template

TOY = build_template("toy", 1, 0, 1)  # 12 paths, one cell
TWO_CELL = build_template("toy", 1, 1, 2)


def record(template, path_ids, accuracy, cid=0, iteration=1):
    mask = Mask.from_paths(path_ids, template.path_count, template.version)
    return CandidateRecord(id=cid, mask=mask, accuracy=accuracy, iteration_evaluated=iteration)


def make_oracle(template=TWO_CELL, seed=3):
    return EvaluatorSpec(kind="tabular", seed=seed, dropout_prob=0.0).build(template)


class TestFitnessTable:
    def test_init_uniform_per_group(self):
        table = init_fitness(TOY, 0.5)
        assert np.allclose(table.fitness, 1 / 12)
        assert table.frequency.sum() == 0

    def test_init_two_cells_normalized_separately(self):
        t = build_template("toy", 1, 1, 1)  # two 12-path cells
        table = init_fitness(t, 0.5)
        for group in table.groups:
            assert np.allclose(table.fitness[list(group)], 1 / 12)
            assert abs(table.fitness[list(group)].sum() - 1.0) < 1e-9

    def test_init_heterogeneous_group_sizes(self):
        # cells with 12 and 24 paths normalize to 1/12 and 1/24 respectively
        from cellsearch.supergraph import CellSpec, NodeSpec, TemplateNetwork, builtin_ops

        small = CellSpec(cell_id=0, kind="normal", nodes=(
            NodeSpec(node_id=0, allowed_inputs=(0, 1), input_ops=(builtin_ops(),) * 2),
        ))
        wide = CellSpec(cell_id=1, kind="normal", nodes=(
            NodeSpec(node_id=0, allowed_inputs=(0, 1), input_ops=(builtin_ops(),) * 2),
            NodeSpec(node_id=1, allowed_inputs=(0, 1), input_ops=(builtin_ops(),) * 2),
        ))
        t = TemplateNetwork(cells=(small, wide))
        assert t.path_count == 36
        table = init_fitness(t, 0.5)
        groups = {len(g): g for g in table.groups}
        assert np.allclose(table.fitness[list(groups[12])], 1 / 12)
        assert np.allclose(table.fitness[list(groups[24])], 1 / 24)

    def test_alpha_recorded(self):
        assert init_fitness(TOY, 0.68).alpha == 0.68  # documented full-scale setting

    def test_update_increment_arithmetic(self):
        # accuracy 0.9, alpha 0.68: pre-normalization increment is +0.22
        table = init_fitness(TOY, 0.68)
        cand = record(TOY, [0, 6], 0.9)
        updated = update_fitness(table, cand)
        raw = np.full(12, 1 / 12)
        raw[[0, 6]] += 0.22
        expected = raw / raw.sum()
        assert np.allclose(updated.fitness, expected, atol=1e-12)
        assert updated.frequency[0] == 1 and updated.frequency[6] == 1
        assert updated.frequency.sum() == 2

    def test_zero_increment_leaves_table_unchanged(self):
        table = init_fitness(TOY, 0.5)
        cand = record(TOY, [2, 7], accuracy=0.5)
        updated = update_fitness(table, cand)
        assert np.allclose(updated.fitness, table.fitness, atol=1e-12)

    def test_clamp_then_renormalize(self):
        # prior fitness 0.05 on a 20-path synthetic group; accuracy far below alpha
        t = build_template("toy", 1, 0, 1)
        table = init_fitness(t, 0.68)
        fitness = np.full(12, 1 / 12)
        fitness[3] = 0.05
        fitness = fitness / fitness.sum()
        table = table.normalized_copy(fitness.copy(), np.zeros(12, dtype=np.int64))
        pre = np.array(table.fitness)
        cand = record(t, [3, 8], accuracy=0.1)
        updated = update_fitness(table, cand)
        raw = pre.copy()
        raw[3] = max(raw[3] + (0.1 - 0.68), 1e-6)  # clamped at epsilon
        raw[8] = max(raw[8] + (0.1 - 0.68), 1e-6)
        expected = raw / raw.sum()
        assert np.allclose(updated.fitness, expected, atol=1e-15)
        assert updated.fitness[3] > 0

    def test_normalization_invariant_after_updates(self):
        table = init_fitness(TWO_CELL, 0.5)
        rng = np.random.default_rng(0)
        from cellsearch.candidate import sample_mask

        for i in range(50):
            mask = sample_mask(TWO_CELL, np.ones(60), rng)
            cand = CandidateRecord(
                id=i, mask=mask, accuracy=float(rng.random()), iteration_evaluated=1
            )
            table = update_fitness(table, cand)
            for group in table.groups:
                assert abs(table.fitness[list(group)].sum() - 1.0) <= 1e-9

    def test_version_mismatch(self):
        table = init_fitness(TOY, 0.5)
        bad = CandidateRecord(
            id=0,
            mask=Mask([1, 1] + [0] * 10, template_version=42),
            accuracy=0.7,
            iteration_evaluated=1,
        )
        with pytest.raises(MaskError):
            update_fitness(table, bad)


class TestChooseParents:
    def test_monte_carlo_frequency(self):
        # accuracies (0.9, 0.1): P(father is first) ~ (0.8 + 1e-6) / (0.8 + 2e-6)
        pop = [record(TOY, [0, 6], 0.9, cid=0), record(TOY, [1, 7], 0.1, cid=1)]
        rng = np.random.default_rng(123)
        n = 100_000
        first = sum(choose_parents(pop, rng)[0].id == 0 for _ in range(n))
        expected = (0.8 + 1e-6) / (0.8 + 2e-6)
        assert abs(first / n - expected) < 0.01

    def test_equal_accuracies_uniform(self):
        pop = [record(TOY, [0, 6], 0.5, cid=i) for i in range(4)]
        rng = np.random.default_rng(7)
        counts = np.zeros(4)
        for _ in range(40_000):
            father, _ = choose_parents(pop, rng)
            counts[father.id] += 1
        assert np.all(np.abs(counts / 40_000 - 0.25) < 0.01)

    def test_population_of_two_returns_both(self):
        pop = [record(TOY, [0, 6], 0.9, cid=0), record(TOY, [1, 7], 0.1, cid=1)]
        father, mother = choose_parents(pop, 5)
        assert {father.id, mother.id} == {0, 1}

    def test_requires_two_evaluated(self):
        with pytest.raises(SearchError):
            choose_parents([record(TOY, [0, 6], 0.9)], 0)


class TestCrossover:
    def test_hand_executed_example(self):
        father = Mask([1, 0, 1, 0], 0)
        mother = Mask([0, 1, 1, 0], 0)
        child = crossover_with_selector(father, mother, np.array([0, 0, 1, 1], dtype=bool))
        assert list(child.bits.astype(int)) == [1, 0, 1, 0]

    def test_exhaustive_selectors_closure(self):
        # every child bit equals father's or mother's for all 2^8 selectors
        rng = np.random.default_rng(1)
        for _ in range(4):
            father = Mask(rng.random(8) < 0.5, 0)
            mother = Mask(rng.random(8) < 0.5, 0)
            for bits in itertools.product([0, 1], repeat=8):
                sel = np.array(bits, dtype=bool)
                child = crossover_with_selector(father, mother, sel)
                for i in range(8):
                    expected = mother.bits[i] if sel[i] else father.bits[i]
                    assert child.bits[i] == expected

    def test_identical_parents(self):
        m = Mask([1, 0, 1, 1, 0, 0, 1, 0], 0)
        for seed in range(20):
            assert cross_over(m, m, seed) == m

    def test_length_mismatch(self):
        with pytest.raises(MaskError):
            cross_over(Mask([1, 0], 0), Mask([1, 0, 1], 0), 0)


class TestMutate:
    def test_zero_rate_identity(self):
        m = Mask(np.random.default_rng(0).random(100) < 0.5, 0)
        assert mutate(m, 0.0, 123) == m

    def test_near_one_rate_complements(self):
        m = Mask([1, 0] * 50, 0)
        flipped = mutate(m, 1 - 1e-12, 99)
        assert np.array_equal(flipped.bits, ~m.bits)

    def test_empirical_flip_rate(self):
        m = Mask(np.zeros(1_000_000, dtype=bool), 0)
        flipped = mutate(m, 0.05, 42)
        rate = flipped.bits.mean()
        assert abs(rate - 0.05) < 0.001

    def test_rate_one_rejected(self):
        with pytest.raises(SearchError):
            mutate(Mask([0, 1], 0), 1.0, 0)

    def test_flip_counts_binomial_chi_square(self):
        # flip count ~ Binomial(P, 0.05); goodness of fit at p > 0.01 over 10^4 trials
        from scipy import stats

        p_bits = 60
        rng = np.random.default_rng(7)
        base = Mask(np.zeros(p_bits, dtype=bool), 0)
        counts = np.array([mutate(base, 0.05, rng).popcount for _ in range(10_000)])
        edges = [-0.5, 0.5, 1.5, 2.5, 3.5, 4.5, 5.5, 6.5, np.inf]
        observed, _ = np.histogram(counts, bins=edges)
        binom = stats.binom(p_bits, 0.05)
        expected = np.array(
            [
                (binom.cdf(hi - 0.5) - binom.cdf(lo + 0.5 - 1)) * len(counts)
                if np.isfinite(hi)
                else (1 - binom.cdf(lo + 0.5 - 1)) * len(counts)
                for lo, hi in zip(edges[:-1], edges[1:])
            ]
        )
        chi2 = ((observed - expected) ** 2 / expected).sum()
        p_value = 1 - stats.chi2.cdf(chi2, df=len(observed) - 1)
        assert p_value > 0.01


class TestEvolve:
    def setup_method(self):
        self.oracle = make_oracle()
        self.hub = RngHub(11)
        state = new_search_state(TWO_CELL, 0.5, 11)
        self.state = seed_population(state, self.oracle, self.hub)

    def test_population_size_rule(self):
        assert population_size(TWO_CELL) == 4  # max(4, ceil(1.5 * 2))
        assert population_size(build_template("toy", 3, 1, 1)) == 6  # ceil(1.5 * 4)

    def test_seed_population_contract(self):
        assert len(self.state.population) == 4
        assert all(m.evaluated for m in self.state.population)
        assert self.state.iteration == 0
        assert len(self.state.loss_history) == 1
        assert self.state.loss_history[0][0] == 0

    def test_elitism_keeps_top_k(self):
        masks = [m.mask for m in self.state.population]
        pop = tuple(
            CandidateRecord(id=i, mask=masks[i], accuracy=acc, iteration_evaluated=0)
            for i, acc in enumerate([0.9, 0.8, 0.2, 0.1])
        )
        state = self.state.__class__(
            template=TWO_CELL,
            population=pop,
            fitness=self.state.fitness,
            iteration=0,
            loss_history=self.state.loss_history,
            seed=11,
            evaluations=pop,
            next_candidate_id=4,
        )
        new_state = evolve(state, self.oracle, self.hub, k=2)
        survivor_ids = {m.id for m in new_state.population if m.iteration_evaluated == 0}
        assert survivor_ids == {0, 1}

    def test_bookkeeping_per_iteration(self):
        state = self.state
        for expected in (1, 2, 3):
            state = evolve(state, self.oracle, self.hub)
            assert state.iteration == expected
            assert len(state.loss_history) == expected + 1
            assert state.loss_history[-1][0] == expected
            fresh = iteration_members(state)
            assert len(fresh) == 2  # N=4, default k=2

    def test_loss_triple_ordering(self):
        state = evolve(self.state, self.oracle, self.hub)
        _, mx, mean, mn = state.loss_history[-1]
        assert mx >= mean >= mn

    def test_frequency_matches_evaluations(self):
        state = self.state
        for _ in range(10):
            state = evolve(state, self.oracle, self.hub)
        counted = np.zeros(TWO_CELL.path_count, dtype=int)
        for m in state.evaluations:
            counted[list(m.mask.active())] += 1
        assert np.array_equal(counted, state.fitness.frequency)

    def test_k_bounds(self):
        with pytest.raises(SearchError):
            evolve(self.state, self.oracle, self.hub, k=4)
        with pytest.raises(SearchError):
            evolve(self.state, self.oracle, self.hub, k=0)

    def test_elitism_monotone_best(self):
        for seed in range(5):
            oracle = make_oracle(seed=seed)
            hub = RngHub(seed)
            state = seed_population(new_search_state(TWO_CELL, 0.5, seed), oracle, hub)
            best = state.best().accuracy
            for _ in range(30):
                state = evolve(state, oracle, hub)
                new_best = state.best().accuracy
                assert new_best >= best
                best = new_best


class TestRunSearch:
    def test_zero_iterations_rejected(self):
        oracle = make_oracle()
        hub = RngHub(0)
        state = seed_population(new_search_state(TWO_CELL, 0.5, 0), oracle, hub)
        with pytest.raises(SearchError):
            run_search(state, oracle, hub, 0)

    def test_stop_signal_resumable(self):
        oracle = make_oracle()
        hub = RngHub(3)
        state = seed_population(new_search_state(TWO_CELL, 0.5, 3), oracle, hub)
        calls = {"n": 0}

        def stop():
            calls["n"] += 1
            return calls["n"] > 3  # allow 3 iterations

        state = run_search(state, oracle, hub, 10, stop_signal=stop)
        assert state.iteration == 3
        resumed = run_search(state, oracle, hub, 2)
        assert resumed.iteration == 5

    def test_deterministic_across_reruns(self):
        # 200 iterations at a fixed seed: byte-identical run logs and final best
        from cellsearch.persistence import dump_line, iteration_record

        def run():
            oracle = make_oracle(seed=7)
            hub = RngHub(7)
            state = seed_population(new_search_state(TWO_CELL, 0.5, 7), oracle, hub)
            log = [dump_line(iteration_record(state, hub.digest()))]
            state = run_search(
                state,
                oracle,
                hub,
                200,
                on_iteration=lambda _p, s: log.append(dump_line(iteration_record(s, hub.digest()))),
            )
            return state.best().mask.to_hex(), state.best().accuracy, "".join(log)

        assert run() == run()

    def test_commands_applied_between_iterations(self):
        oracle = make_oracle()
        hub = RngHub(5)
        state = seed_population(new_search_state(TWO_CELL, 0.5, 5), oracle, hub)
        seen_iterations = []
        pending = [lambda s: seen_iterations.append(s.iteration) or s]

        def drain():
            out = list(pending)
            pending.clear()
            return out

        run_search(state, oracle, hub, 3, drain_commands=drain)
        assert seen_iterations == [0]  # applied before the first evolve
