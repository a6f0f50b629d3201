"""Evolutionary search core: per-path fitness, crossover, mutation, elitism.

Each evaluated candidate nudges the fitness of the paths it contains by
(accuracy - alpha), clamped at a small epsilon, and the scores are then
renormalized within each cell so they double as the sampling distribution
for new masks.  An iteration keeps the top-k candidates and refills the
population with repaired mutated crossover children of fitness-chosen
parents, appending one (max, mean, min) loss triple to the history.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Protocol

import numpy as np

from .candidate import CandidateRecord, Mask, MaskError, repair_mask, sample_mask
from .rng import RngHub, as_generator
from .supergraph import TemplateNetwork

FITNESS_EPS = 1e-6
ACCURACY_SHIFT = 1e-6
DEFAULT_MUTATION_RATE = 0.05


class SearchError(RuntimeError):
    """Raised for violated search preconditions or mid-run inconsistencies."""


class Evaluator(Protocol):
    template_version: int

    def evaluate(self, mask: Mask, rng: np.random.Generator) -> float: ...


@dataclass(frozen=True)
class FitnessTable:
    """Per-path fitness and frequency; fitness sums to 1 within each cell group."""

    fitness: np.ndarray
    frequency: np.ndarray
    alpha: float
    groups: tuple[tuple[int, ...], ...]
    template_version: int

    def __post_init__(self):
        self.fitness.setflags(write=False)
        self.frequency.setflags(write=False)

    def digest(self) -> str:
        payload = self.fitness.astype("<f8").tobytes() + self.frequency.astype("<i8").tobytes()
        return hashlib.sha256(payload).hexdigest()

    def normalized_copy(self, fitness: np.ndarray, frequency: np.ndarray) -> "FitnessTable":
        for group in self.groups:
            ix = list(group)
            total = fitness[ix].sum()
            if total > 0:
                fitness[ix] = fitness[ix] / total
        return FitnessTable(
            fitness=fitness,
            frequency=frequency,
            alpha=self.alpha,
            groups=self.groups,
            template_version=self.template_version,
        )


def init_fitness(template: TemplateNetwork, alpha: float) -> FitnessTable:
    """Uniform fitness 1/|group| within each cell, all frequencies zero."""
    if not (0.0 < alpha < 1.0):
        raise SearchError(f"alpha must be in (0, 1), got {alpha}")
    fitness = np.zeros(template.path_count, dtype=float)
    groups = tuple(tuple(g) for g in template.cell_groups().values())
    for group in groups:
        fitness[list(group)] = 1.0 / len(group)
    return FitnessTable(
        fitness=fitness,
        frequency=np.zeros(template.path_count, dtype=np.int64),
        alpha=alpha,
        groups=groups,
        template_version=template.version,
    )


def update_fitness(table: FitnessTable, candidate: CandidateRecord) -> FitnessTable:
    """Additive update on the candidate's paths, clamped, then renormalized."""
    if candidate.accuracy is None:
        raise SearchError("candidate must be evaluated before a fitness update")
    if candidate.mask.template_version != table.template_version:
        raise MaskError(
            f"candidate mask version {candidate.mask.template_version} != "
            f"table version {table.template_version}"
        )
    fitness = np.array(table.fitness, copy=True)
    frequency = np.array(table.frequency, copy=True)
    increment = candidate.accuracy - table.alpha
    for p in candidate.mask.active():
        fitness[p] = max(fitness[p] + increment, FITNESS_EPS)
        frequency[p] += 1
    return table.normalized_copy(fitness, frequency)


@dataclass(frozen=True)
class SearchState:
    """The single mutable truth of a session, snapshotted per iteration."""

    template: TemplateNetwork
    population: tuple[CandidateRecord, ...]
    fitness: FitnessTable
    iteration: int
    loss_history: tuple[tuple[int, float, float, float], ...]
    seed: int
    pruned: frozenset[int] = frozenset()
    fixed: frozenset[int] = frozenset()
    region: "object | None" = None  # steering.RegionConstraint
    evaluations: tuple[CandidateRecord, ...] = ()
    next_candidate_id: int = 0

    @property
    def template_version(self) -> int:
        return self.template.version

    @property
    def population_size(self) -> int:
        return population_size(self.template)

    def best(self) -> CandidateRecord:
        evaluated = [m for m in self.population if m.evaluated]
        if not evaluated:
            raise SearchError("no evaluated candidates yet")
        return min(evaluated, key=lambda m: (-m.accuracy, m.id))


def population_size(template: TemplateNetwork) -> int:
    # Heuristic from the population-sizing rule: 1.5x the cell count, floor 4.
    return max(4, math.ceil(1.5 * len(template.cells)))


def new_search_state(template: TemplateNetwork, alpha: float, seed: int) -> SearchState:
    return SearchState(
        template=template,
        population=(),
        fitness=init_fitness(template, alpha),
        iteration=0,
        loss_history=(),
        seed=seed,
    )


def choose_parents(
    population, rng_seed: int | np.random.Generator
) -> tuple[CandidateRecord, CandidateRecord]:
    """Two distinct members, probability proportional to shifted accuracy."""
    rng = as_generator(rng_seed)
    members = [m for m in population if m.evaluated]
    if len(members) < 2:
        raise SearchError("need at least 2 evaluated members to choose parents")
    accs = np.array([m.accuracy for m in members])
    weights = accs - accs.min() + ACCURACY_SHIFT
    first = int(rng.choice(len(members), p=weights / weights.sum()))
    rest = [i for i in range(len(members)) if i != first]
    rest_weights = weights[rest]
    second = rest[int(rng.choice(len(rest), p=rest_weights / rest_weights.sum()))]
    return members[first], members[second]


def crossover_with_selector(father: Mask, mother: Mask, selector: np.ndarray) -> Mask:
    """child bit = father bit where selector is 0, mother bit where it is 1."""
    if len(father) != len(mother) or father.template_version != mother.template_version:
        raise MaskError("parent masks must share length and template version")
    sel = np.asarray(selector, dtype=bool)
    if sel.shape != (len(father),):
        raise MaskError("selector length must match the masks")
    child = np.where(sel, mother.bits, father.bits)
    return Mask(child, father.template_version)


def cross_over(father: Mask, mother: Mask, rng_seed: int | np.random.Generator) -> Mask:
    rng = as_generator(rng_seed)
    selector = rng.integers(0, 2, size=len(father)).astype(bool)
    return crossover_with_selector(father, mother, selector)


def mutate(
    mask: Mask,
    mutation_rate: float = DEFAULT_MUTATION_RATE,
    rng_seed: int | np.random.Generator = 0,
) -> Mask:
    """Independent per-bit flip where a uniform draw falls at or below the rate."""
    if not (0.0 <= mutation_rate < 1.0):
        raise SearchError(f"mutation_rate must be in [0, 1), got {mutation_rate}")
    if mutation_rate == 0.0:
        return mask
    rng = as_generator(rng_seed)
    draws = rng.random(len(mask))
    flips = draws <= mutation_rate
    return Mask(np.logical_xor(mask.bits, flips), mask.template_version)


def _stale(state: SearchState, member: CandidateRecord) -> bool:
    return any(p in state.pruned for p in member.mask.active())


def _region_draw(
    state: SearchState, rng: np.random.Generator, exclude: set[Mask]
) -> tuple[Mask, str]:
    """Pick a region member mask, unevaluated-first, fitness-weighted."""
    region = state.region
    evaluated_masks = {m.mask for m in state.evaluations}
    tiers = (
        [m for m in region.member_masks if m not in evaluated_masks and m not in exclude],
        [m for m in region.member_masks if m not in exclude],
        list(region.member_masks),
    )
    for tier in tiers:
        if tier:
            weights = np.array(
                [state.fitness.fitness[list(m.active())].sum() for m in tier]
            )
            if weights.sum() <= 0:
                weights = np.ones(len(tier))
            pick = int(rng.choice(len(tier), p=weights / weights.sum()))
            return tier[pick], "region"
    raise SearchError("active region has no members to draw")


def seed_population(
    state: SearchState, evaluator: Evaluator, hub: RngHub
) -> SearchState:
    """Fill an empty population with evaluated samples; appends the iteration-0 loss triple."""
    if state.population:
        raise SearchError("population already seeded")
    n = state.population_size
    sampling = hub.stream("sampling")
    eval_rng = hub.stream("dropout")
    members: list[CandidateRecord] = []
    fitness = state.fitness
    evaluations = list(state.evaluations)
    next_id = state.next_candidate_id
    exclude: set[Mask] = set()
    for _ in range(n):
        if state.region is not None:
            mask, origin = _region_draw(state, sampling, exclude)
            exclude.add(mask)
        else:
            mask, origin = (
                sample_mask(state.template, fitness.fitness, sampling, forced=state.fixed),
                "init",
            )
        accuracy = float(evaluator.evaluate(mask, eval_rng))
        record = CandidateRecord(
            id=next_id, mask=mask, accuracy=accuracy, iteration_evaluated=0, origin=origin
        )
        next_id += 1
        members.append(record)
        evaluations.append(record)
        fitness = update_fitness(fitness, record)
    losses = [1.0 - m.accuracy for m in members]
    triple = (0, max(losses), float(np.mean(losses)), min(losses))
    return replace(
        state,
        population=tuple(members),
        fitness=fitness,
        loss_history=state.loss_history + (triple,),
        evaluations=tuple(evaluations),
        next_candidate_id=next_id,
    )


def evolve(
    state: SearchState,
    evaluator: Evaluator,
    hub: RngHub,
    k: int | None = None,
    mutation_rate: float = DEFAULT_MUTATION_RATE,
) -> SearchState:
    """One search iteration: elitism, children, evaluation, fitness, loss triple."""
    if getattr(evaluator, "template_version", state.template_version) != state.template_version:
        raise SearchError("evaluator was built for a different template version")
    if not state.population:
        raise SearchError("population is empty; seed it first")
    if any(not m.evaluated for m in state.population):
        raise SearchError("population must be fully evaluated before evolve")
    n = len(state.population)
    if k is None:
        k = math.ceil(n / 3)
    if not (0 < k < n):
        raise SearchError(f"k must satisfy 0 < k < {n}, got {k}")

    fresh_pool = [m for m in state.population if not _stale(state, m)]
    survivors = sorted(fresh_pool, key=lambda m: (-m.accuracy, m.id))[:k]
    slots = n - len(survivors)
    crossover_budget = min(n - k, slots)
    fresh_budget = slots - crossover_budget

    iteration = state.iteration + 1
    fitness = state.fitness
    members = list(survivors)
    evaluations = list(state.evaluations)
    next_id = state.next_candidate_id
    parents_rng = hub.stream("parents")
    crossover_rng = hub.stream("crossover")
    mutation_rng = hub.stream("mutation")
    sampling_rng = hub.stream("sampling")
    eval_rng = hub.stream("dropout")

    exclude: set[Mask] = set()
    for slot in range(slots):
        want_cross = slot < crossover_budget
        if state.region is not None:
            mask, origin = _region_draw(state, sampling_rng, exclude)
            exclude.add(mask)
        elif want_cross and len(fresh_pool) >= 2:
            father, mother = choose_parents(fresh_pool, parents_rng)
            child = cross_over(father.mask, mother.mask, crossover_rng)
            child = mutate(child, mutation_rate, mutation_rng)
            mask = repair_mask(
                state.template, child, fitness.fitness, sampling_rng, forced=state.fixed
            )
            origin = "crossover"
        else:
            mask = sample_mask(state.template, fitness.fitness, sampling_rng, forced=state.fixed)
            origin = "resample"
        accuracy = float(evaluator.evaluate(mask, eval_rng))
        record = CandidateRecord(
            id=next_id, mask=mask, accuracy=accuracy, iteration_evaluated=iteration, origin=origin
        )
        next_id += 1
        members.append(record)
        evaluations.append(record)
        fitness = update_fitness(fitness, record)

    losses = [1.0 - m.accuracy for m in members]
    triple = (iteration, max(losses), float(np.mean(losses)), min(losses))
    return replace(
        state,
        population=tuple(members),
        fitness=fitness,
        iteration=iteration,
        loss_history=state.loss_history + (triple,),
        evaluations=tuple(evaluations),
        next_candidate_id=next_id,
    )


def run_search(
    state: SearchState,
    evaluator: Evaluator,
    hub: RngHub,
    iterations: int,
    stop_signal: Callable[[], bool] | None = None,
    drain_commands: Callable[[], list] | None = None,
    on_iteration: Callable[[SearchState, SearchState], None] | None = None,
    k: int | None = None,
) -> SearchState:
    """Run evolve repeatedly; steering commands apply between iterations only.

    `drain_commands` returns callables SearchState -> SearchState queued by the
    operator; `on_iteration(previous, new)` fires once per completed evolve.
    Stopping early returns a resumable state.
    """
    if iterations < 1:
        raise SearchError(f"iterations must be >= 1, got {iterations}")
    for _ in range(iterations):
        if stop_signal is not None and stop_signal():
            break
        if drain_commands is not None:
            for command in drain_commands():
                state = command(state)
        previous = state
        state = evolve(state, evaluator, hub, k=k)
        if on_iteration is not None:
            on_iteration(previous, state)
    return state


def iteration_members(current: SearchState) -> tuple[CandidateRecord, ...]:
    """Members created by the step that produced `current` (seed or evolve)."""
    return tuple(
        m for m in current.population if m.iteration_evaluated == current.iteration
    )
