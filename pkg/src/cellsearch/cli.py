"""Command line interface: serve, run, export, replay-verify, bench."""
from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from .bench import RunConfig, run_benchmark, run_headless, write_benchmark_outputs
from .persistence import (
    canonical_json,
    export_best,
    load_session,
    replay_verify,
    save_session,
    SessionSnapshot,
)

DATA_DIR_ENV = "CELLSEARCH_DATA_DIR"


def _data_dir() -> Path:
    return Path(os.environ.get(DATA_DIR_ENV, "."))


def _load_config(path: str, overrides: dict) -> RunConfig:
    doc = json.loads(Path(path).read_text()) if path else {}
    doc.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.from_dict(doc)


@click.group()
def main():
    """Interactive one-shot architecture search over cell-based supergraphs."""


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8321, show_default=True, type=int)
def serve(host: str, port: int):
    """Start the session service."""
    import uvicorn

    from .service import app

    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--strategy", type=click.Choice(["ea", "random"]), default=None)
@click.option("--iterations", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", type=click.Path(), default=None)
def run(config_path, strategy, iterations, seed, out_dir):
    """Headless reproducible run; writes the archive, run log, and figures."""
    overrides = {"strategy": strategy, "iterations": iterations}
    if seed is not None:
        overrides["seeds"] = [seed]
    config = _load_config(config_path, overrides)
    result = run_headless(config)
    out = Path(out_dir) if out_dir else _data_dir() / f"run-{result.strategy}-{result.seed}"
    out.mkdir(parents=True, exist_ok=True)
    (out / "runlog.jsonl").write_text("".join(result.runlog))
    summary = {
        "strategy": result.strategy,
        "seed": result.seed,
        "iterations": config.iterations,
        "evaluations": result.evaluations,
        "best_accuracy": result.best_accuracy,
        "best_mask": result.best_mask_hex,
    }
    (out / "summary.json").write_text(canonical_json(summary))
    if result.final_state is not None:
        from .rng import RngHub

        snapshot = SessionSnapshot(
            session_id=f"headless-{result.seed}",
            phase="paused",
            template=config.build_template(),
            evaluator_spec=config.build_evaluator_spec(),
            hub_state=RngHub(result.seed).state(),
            search_state=result.final_state,
            runlog=result.runlog,
            training_curve=list(result.training_curve),
            alpha=result.final_state.fitness.alpha,
        )
        save_session(snapshot, out / "session")
        from . import report

        figures = out / "figures"
        figures.mkdir(exist_ok=True)
        report.save_search_loss_figure(
            result.final_state.loss_history, figures / "search_loss.png"
        )
        if result.training_curve:
            report.save_loss_curve_figure(result.training_curve, figures / "training_loss.png")
    click.echo(f"{result.strategy} seed={result.seed} best={result.best_accuracy:.6f} -> {out}")


@main.command()
@click.option("--session", "session_dir", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
def export(session_dir, out_path):
    """Export the best candidate of a saved session as an architecture document."""
    snapshot = load_session(session_dir)
    if snapshot.search_state is None:
        raise click.ClickException("session has no search state")
    doc = export_best(snapshot.search_state, snapshot.template)
    text = canonical_json(doc)
    if out_path:
        Path(out_path).write_text(text)
        click.echo(f"wrote {out_path}")
    else:
        click.echo(text)


@main.command("replay-verify")
@click.argument("session_dir", type=click.Path(exists=True))
def replay_verify_cmd(session_dir):
    """Recompute the fitness digests of a saved run log."""
    snapshot = load_session(session_dir)
    report = replay_verify(snapshot.template, snapshot.runlog)
    click.echo(
        f"checked {report.iterations_checked} iteration records: "
        + ("ok" if report.ok else "MISMATCH")
    )
    for line in report.mismatches:
        click.echo(f"  {line}")
    if not report.ok:
        sys.exit(1)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--iterations", type=int, default=None)
@click.option("--seeds", type=str, default=None, help="comma-separated seed list")
@click.option("--out", "out_dir", type=click.Path(), default=None)
def bench(config_path, iterations, seeds, out_dir):
    """EA vs random sampling at an equal evaluation budget."""
    overrides: dict = {"iterations": iterations}
    if seeds:
        overrides["seeds"] = [int(s) for s in seeds.split(",")]
    config = _load_config(config_path, overrides)
    summary = run_benchmark(config)
    out = Path(out_dir) if out_dir else _data_dir() / "bench"
    paths = write_benchmark_outputs(summary, out)
    click.echo(summary.text_table())
    click.echo(f"wrote {paths['json']}, {paths['txt']}, {paths['csv']} and figures/")


if __name__ == "__main__":
    main()
