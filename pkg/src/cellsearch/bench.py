"""Headless runs and the EA-versus-random-sampling benchmark.

Both strategies get exactly the same evaluation budget: the population seed
plus (population - k) evaluations per iteration.  Random sampling draws
uniform valid masks and never updates the fitness table, which is precisely
the baseline the EA is claimed to beat.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .candidate import sample_mask
from .evaluation import EvaluatorSpec, TabularOracle, brute_force_optimum
from .evolution import new_search_state, population_size, run_search, seed_population
from .persistence import canonical_json, dump_line, header_record, iteration_record
from .rng import RngHub
from .supergraph import TemplateNetwork, build_template

DEFAULT_ALPHA = 0.5  # toy-run default; 0.68 is the documented full-scale setting


class BenchError(RuntimeError):
    pass


DEFAULT_BENCH_TEMPLATE = {
    "dataset_tag": "toy",
    "num_normal": 1,
    "num_reduction": 1,
    "nodes_per_cell": 2,
}
DEFAULT_BENCH_EVALUATOR = {"kind": "tabular", "seed": 3, "dropout_prob": 0.0}


@dataclass
class RunConfig:
    template: dict = field(default_factory=lambda: dict(DEFAULT_BENCH_TEMPLATE))
    evaluator: dict = field(default_factory=lambda: dict(DEFAULT_BENCH_EVALUATOR))
    alpha: float | None = None  # None: aspiration threshold for tabular, 0.5 otherwise
    iterations: int = 100
    seeds: tuple[int, ...] = (0,)
    strategy: str = "ea"
    k: int | None = None
    mutation_rate: float = 0.05
    train_epochs: int = 0  # supernet only: train the template before searching

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        cfg = cls(
            template=dict(doc.get("template", DEFAULT_BENCH_TEMPLATE)),
            evaluator=dict(doc.get("evaluator", DEFAULT_BENCH_EVALUATOR)),
            alpha=doc.get("alpha"),
            iterations=doc.get("iterations", 100),
            seeds=tuple(doc.get("seeds", [0])),
            strategy=doc.get("strategy", "ea"),
            k=doc.get("k"),
            mutation_rate=doc.get("mutation_rate", 0.05),
            train_epochs=doc.get("train_epochs", 0),
        )
        if cfg.iterations < 1:
            raise BenchError(f"iterations must be >= 1, got {cfg.iterations}")
        if cfg.strategy not in ("ea", "random"):
            raise BenchError(f"strategy must be 'ea' or 'random', got {cfg.strategy!r}")
        if not cfg.seeds:
            raise BenchError("need at least one seed")
        return cfg

    def build_template(self) -> TemplateNetwork:
        t = self.template
        return build_template(
            dataset_tag=t.get("dataset_tag", "toy"),
            num_normal=t.get("num_normal"),
            num_reduction=t.get("num_reduction"),
            nodes_per_cell=t.get("nodes_per_cell", 4),
        )

    def build_evaluator_spec(self) -> EvaluatorSpec:
        doc = dict(self.evaluator)
        doc.setdefault("seed", 0)
        doc.setdefault("dropout_prob", 0.0 if doc.get("kind") == "tabular" else 0.1)
        return EvaluatorSpec.from_json(doc)

    def resolve_alpha(self, template: TemplateNetwork, evaluator) -> float:
        if self.alpha is not None:
            return self.alpha
        if isinstance(evaluator, TabularOracle):
            from .evaluation import EvaluationError, recommended_alpha

            try:
                return recommended_alpha(template, evaluator)
            except EvaluationError:
                return DEFAULT_ALPHA  # landscape too large to brute force
        return DEFAULT_ALPHA


@dataclass
class RunResult:
    strategy: str
    seed: int
    best_accuracy: float
    best_mask_hex: str
    trajectory: list[float]  # best-so-far after iteration 0..T
    evaluations: int
    runlog: list[str]
    final_state: object | None = None
    training_curve: list[tuple[int, float, float]] = field(default_factory=list)


def run_ea(
    template: TemplateNetwork,
    evaluator_spec: EvaluatorSpec,
    alpha: float,
    seed: int,
    iterations: int,
    k: int | None = None,
    mutation_rate: float = 0.05,
    train_epochs: int = 0,
) -> RunResult:
    hub = RngHub(seed)
    evaluator = evaluator_spec.build(template)
    curve: list[tuple[int, float, float]] = []
    if train_epochs > 0:
        if not hasattr(evaluator, "train"):
            raise BenchError("train_epochs is only meaningful for supernet evaluators")
        curve = evaluator.train(train_epochs, hub.stream("training"))
    n = population_size(template)
    k_used = k if k is not None else math.ceil(n / 3)
    runlog = [
        dump_line(
            header_record(template, evaluator_spec, alpha, seed, "ea", n, k_used, mutation_rate)
        )
    ]
    state = seed_population(new_search_state(template, alpha, seed), evaluator, hub)
    runlog.append(dump_line(iteration_record(state, hub.digest())))
    trajectory = [state.best().accuracy]

    def on_iteration(_previous, current):
        runlog.append(dump_line(iteration_record(current, hub.digest())))
        trajectory.append(max(trajectory[-1], current.best().accuracy))

    state = run_search(state, evaluator, hub, iterations, on_iteration=on_iteration, k=k_used)
    best = max(m.accuracy for m in state.evaluations)
    best_mask = min(
        (m for m in state.evaluations if m.accuracy == best), key=lambda m: m.id
    ).mask
    return RunResult(
        strategy="ea",
        seed=seed,
        best_accuracy=best,
        best_mask_hex=best_mask.to_hex(),
        trajectory=trajectory,
        evaluations=len(state.evaluations),
        runlog=runlog,
        final_state=state,
        training_curve=curve,
    )


def run_random(
    template: TemplateNetwork,
    evaluator_spec: EvaluatorSpec,
    alpha: float,
    seed: int,
    iterations: int,
    k: int | None = None,
) -> RunResult:
    """Uniform valid-mask sampling at the EA's exact evaluation budget."""
    hub = RngHub(seed)
    evaluator = evaluator_spec.build(template)
    n = population_size(template)
    k_used = k if k is not None else math.ceil(n / 3)
    per_iteration = n - k_used
    runlog = [
        dump_line(header_record(template, evaluator_spec, alpha, seed, "random", n, k_used, 0.0))
    ]
    sampling = hub.stream("sampling")
    eval_rng = hub.stream("dropout")
    uniform = np.ones(template.path_count)

    best = -math.inf
    best_mask = None
    trajectory: list[float] = []
    evaluations = 0
    for iteration in range(iterations + 1):
        batch = n if iteration == 0 else per_iteration
        members = []
        for _ in range(batch):
            mask = sample_mask(template, uniform, sampling)
            accuracy = float(evaluator.evaluate(mask, eval_rng))
            members.append((evaluations, mask, accuracy))
            evaluations += 1
            if accuracy > best:
                best, best_mask = accuracy, mask
        losses = [1.0 - acc for _, _, acc in members]
        record = {
            "type": "iteration",
            "iteration": iteration,
            "members": [
                {"id": mid, "mask": mask.to_hex(), "accuracy": acc, "origin": "random"}
                for mid, mask, acc in members
            ],
            "survivors": [],
            "loss": [max(losses), float(np.mean(losses)), min(losses)],
            "fitness_digest": None,
            "rng_digest": hub.digest(),
        }
        runlog.append(dump_line(record))
        trajectory.append(best)
    return RunResult(
        strategy="random",
        seed=seed,
        best_accuracy=best,
        best_mask_hex=best_mask.to_hex(),
        trajectory=trajectory,
        evaluations=evaluations,
        runlog=runlog,
    )


def run_headless(config: RunConfig, seed: int | None = None) -> RunResult:
    template = config.build_template()
    spec = config.build_evaluator_spec()
    alpha = config.resolve_alpha(template, spec.build(template))
    use_seed = config.seeds[0] if seed is None else seed
    if config.strategy == "ea":
        return run_ea(
            template,
            spec,
            alpha,
            use_seed,
            config.iterations,
            config.k,
            config.mutation_rate,
            train_epochs=config.train_epochs,
        )
    return run_random(template, spec, alpha, use_seed, config.iterations, config.k)


# ---------------------------------------------------------------------------
# EA vs random comparison
# ---------------------------------------------------------------------------


@dataclass
class BenchSummary:
    seeds: tuple[int, ...]
    iterations: int
    optimum_accuracy: float | None
    ea_best: list[float]
    random_best: list[float]
    ea_hits: int
    random_hits: int
    ea_mean_trajectory: list[float]
    random_mean_trajectory: list[float]

    @property
    def ea_mean(self) -> float:
        return float(np.mean(self.ea_best))

    @property
    def random_mean(self) -> float:
        return float(np.mean(self.random_best))

    @property
    def ea_hit_rate(self) -> float:
        return self.ea_hits / len(self.seeds)

    @property
    def random_hit_rate(self) -> float:
        return self.random_hits / len(self.seeds)

    def to_json(self) -> dict:
        return {
            "schema_version": 1,
            "seeds": list(self.seeds),
            "iterations": self.iterations,
            "optimum_accuracy": self.optimum_accuracy,
            "ea": {
                "best_per_seed": self.ea_best,
                "mean_best": self.ea_mean,
                "optimum_hits": self.ea_hits,
                "hit_rate": self.ea_hit_rate,
                "mean_trajectory": self.ea_mean_trajectory,
            },
            "random": {
                "best_per_seed": self.random_best,
                "mean_best": self.random_mean,
                "optimum_hits": self.random_hits,
                "hit_rate": self.random_hit_rate,
                "mean_trajectory": self.random_mean_trajectory,
            },
        }

    def text_table(self) -> str:
        lines = [
            f"{'seed':>6}  {'ea_best':>10}  {'random_best':>12}  {'ea_hit':>6}  {'rand_hit':>8}"
        ]
        opt = self.optimum_accuracy
        for i, seed in enumerate(self.seeds):
            ea_hit = opt is not None and abs(self.ea_best[i] - opt) < 1e-12
            rd_hit = opt is not None and abs(self.random_best[i] - opt) < 1e-12
            lines.append(
                f"{seed:>6}  {self.ea_best[i]:>10.6f}  {self.random_best[i]:>12.6f}"
                f"  {str(ea_hit):>6}  {str(rd_hit):>8}"
            )
        lines.append("-" * len(lines[0]))
        lines.append(
            f"{'mean':>6}  {self.ea_mean:>10.6f}  {self.random_mean:>12.6f}"
            f"  {self.ea_hit_rate:>6.2f}  {self.random_hit_rate:>8.2f}"
        )
        if opt is not None:
            lines.append(f"brute-forced optimum accuracy: {opt:.6f}")
        return "\n".join(lines) + "\n"

    def csv_table(self) -> str:
        rows = ["seed,ea_best,random_best,ea_hit,random_hit"]
        opt = self.optimum_accuracy
        for i, seed in enumerate(self.seeds):
            ea_hit = int(opt is not None and abs(self.ea_best[i] - opt) < 1e-12)
            rd_hit = int(opt is not None and abs(self.random_best[i] - opt) < 1e-12)
            rows.append(f"{seed},{self.ea_best[i]!r},{self.random_best[i]!r},{ea_hit},{rd_hit}")
        return "\n".join(rows) + "\n"


def run_benchmark(config: RunConfig) -> BenchSummary:
    template = config.build_template()
    spec = config.build_evaluator_spec()
    evaluator = spec.build(template)
    alpha = config.resolve_alpha(template, evaluator)
    optimum = None
    if isinstance(evaluator, TabularOracle):
        from .evaluation import EvaluationError

        try:
            _, optimum = brute_force_optimum(template, evaluator)
        except EvaluationError:
            optimum = None  # too large to brute force; hit rates stay undefined

    ea_best, random_best = [], []
    ea_hits = random_hits = 0
    ea_tracks, random_tracks = [], []
    for seed in config.seeds:
        ea = run_ea(template, spec, alpha, seed, config.iterations, config.k, config.mutation_rate)
        rd = run_random(template, spec, alpha, seed, config.iterations, config.k)
        if ea.evaluations != rd.evaluations:
            raise BenchError("strategies consumed different evaluation budgets")
        ea_best.append(ea.best_accuracy)
        random_best.append(rd.best_accuracy)
        ea_tracks.append(ea.trajectory)
        random_tracks.append(rd.trajectory)
        if optimum is not None:
            ea_hits += int(abs(ea.best_accuracy - optimum) < 1e-12)
            random_hits += int(abs(rd.best_accuracy - optimum) < 1e-12)
    return BenchSummary(
        seeds=config.seeds,
        iterations=config.iterations,
        optimum_accuracy=optimum,
        ea_best=ea_best,
        random_best=random_best,
        ea_hits=ea_hits,
        random_hits=random_hits,
        ea_mean_trajectory=list(np.mean(ea_tracks, axis=0)),
        random_mean_trajectory=list(np.mean(random_tracks, axis=0)),
    )


def write_benchmark_outputs(summary: BenchSummary, out_dir: str | Path) -> dict[str, Path]:
    from . import report

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "json": out / "comparison.json",
        "txt": out / "comparison.txt",
        "csv": out / "comparison.csv",
    }
    paths["json"].write_text(canonical_json(summary.to_json()))
    paths["txt"].write_text(summary.text_table())
    paths["csv"].write_text(summary.csv_table())
    figures = out / "figures"
    figures.mkdir(exist_ok=True)
    paths["trajectory_png"] = report.save_trajectory_figure(summary, figures / "best_trajectory.png")
    paths["final_png"] = report.save_final_accuracy_figure(summary, figures / "final_accuracy.png")
    return paths
