/** Operator console wiring: one event-stream subscription drives every view;
 * steering commands are sent to the server and the UI waits for the
 * acknowledging events rather than updating optimistically. */

import { Client } from "./api.js";
import { AppEvent, EmbeddingDoc, FitnessDoc, TemplateDoc } from "./types.js";
import {
  ViewState,
  activePaths,
  applyEvent,
  buildRegionCommand,
  buildRemoveOpEdit,
  initialViewState,
} from "./viewmodel.js";
import { FitnessFrequencyView } from "./views/fitness.js";
import { LegoView, pathBlocks } from "./views/lego.js";
import { LossChartView } from "./views/loss.js";
import { BrushRect, SearchSpaceView } from "./views/scatter.js";

const POLL_MS = 400;

class Console {
  private client = new Client();
  private sessionId: string | null = null;
  private view = initialViewState();
  private template: TemplateDoc | null = null;
  private embedding: EmbeddingDoc | null = null;
  private fitness: FitnessDoc | null = null;
  private hoveredCandidate: number | null = null;
  private hoveredPath: number | null = null;
  private lastBrush: BrushRect | null = null;

  private lego!: LegoView;
  private loss!: LossChartView;
  private scatter!: SearchSpaceView;
  private fitnessView!: FitnessFrequencyView;

  start(): void {
    this.lego = new LegoView(must("lego"), {
      onSelectPath: (p) => this.selectPath(p),
      onHoverPath: (p) => {
        // hover links the block to its candidate-information dot; a click pins it
        this.fitnessView.render(
          this.fitness,
          new Set(this.view.pruned),
          p ?? this.hoveredPath
        );
      },
    });
    this.loss = new LossChartView(must("loss"));
    this.scatter = new SearchSpaceView(must("scatter"), {
      onBrush: (rect, ids) => this.brushed(rect, ids),
      onHover: (id) => {
        this.hoveredCandidate = id;
        this.render();
      },
    });
    this.fitnessView = new FitnessFrequencyView(must("fitness"), {
      onHoverPath: (p) => {
        this.hoveredPath = p;
        this.render();
      },
    });
    this.bindControls();
    window.setInterval(() => void this.poll(), POLL_MS);
  }

  private bindControls(): void {
    on("create", async () => {
      const doc = await this.client.createSession({
        template: {
          dataset_tag: "toy",
          num_normal: int("num-normal", 1),
          num_reduction: int("num-reduction", 1),
          nodes_per_cell: int("nodes-per-cell", 2),
        },
        evaluator:
          sel("evaluator-kind") === "supernet"
            ? { kind: "supernet", seed: int("seed", 0), dropout_prob: 0.1, dataset: { name: "moons", n: 160 } }
            : { kind: "tabular", seed: int("seed", 0), dropout_prob: 0.0 },
        seed: int("seed", 0),
      });
      this.sessionId = doc.session_id;
      this.view = initialViewState();
      this.template = await this.client.template(this.sessionId);
      this.embedding = null;
      text("session-label", `${doc.session_id.slice(0, 8)} (${doc.path_count} paths)`);
      this.render();
    });
    on("train", () => this.withSession((id) => this.client.startTraining(id, int("epochs", 10))));
    on("train-stop", () => this.withSession((id) => this.client.stopTraining(id)));
    on("search", () => this.withSession((id) => this.client.startSearch(id, int("iterations", 10))));
    on("step", () => this.withSession((id) => this.client.stepSearch(id)));
    on("pause", () => this.withSession((id) => this.client.pauseSearch(id)));
    on("embed", () =>
      this.withSession(async (id) => {
        await this.client.recomputeEmbedding(id, int("embed-count", 30));
        this.embedding = await this.client.embedding(id);
        this.render();
      })
    );
    on("clear-region", () => this.withSession((id) => this.client.clearRegion(id)));
    on("finalize", () =>
      this.withSession(async (id) => {
        const report = await this.client.finalize(id);
        text("status", `finalized: ${JSON.stringify(report)}`);
      })
    );
    on("export", () =>
      this.withSession(async (id) => {
        const doc = await this.client.exportBest(id);
        text("status", `export: ${JSON.stringify(doc)}`);
      })
    );
    for (const op of ["union", "intersection", "complement"]) {
      on(`setop-${op}`, () =>
        this.withSession(async (id) => {
          if (!this.lastBrush || !this.embedding) return;
          const command = buildRegionCommand(this.lastBrush, this.embedding);
          const result = await this.client.setOperation(id, op, command.shape);
          text("status", `${op}: paths [${result.path_ids.join(", ")}]`);
          (must("prune-result") as HTMLButtonElement).dataset.paths = JSON.stringify(result.path_ids);
          (must("fix-result") as HTMLButtonElement).dataset.paths = JSON.stringify(result.path_ids);
        })
      );
    }
    on("prune-result", () =>
      this.withSession(async (id) => {
        const paths = JSON.parse((must("prune-result") as HTMLButtonElement).dataset.paths ?? "[]");
        if (paths.length) await this.client.prunePaths(id, paths);
      })
    );
    on("fix-result", () =>
      this.withSession(async (id) => {
        const paths = JSON.parse((must("fix-result") as HTMLButtonElement).dataset.paths ?? "[]");
        if (paths.length) await this.client.fixPaths(id, paths);
      })
    );
    on("remove-op", () =>
      this.withSession(async (id) => {
        if (this.hoveredPath === null || !this.template) return;
        const block = pathBlocks(this.template)[this.hoveredPath];
        await this.client.editTemplate(id, buildRemoveOpEdit(block));
        this.template = await this.client.template(id);
        this.selectPath(null);
      })
    );
    on("prune-path", () =>
      this.withSession(async (id) => {
        if (this.hoveredPath !== null) await this.client.prunePaths(id, [this.hoveredPath]);
      })
    );
    on("fix-path", () =>
      this.withSession(async (id) => {
        if (this.hoveredPath !== null) await this.client.fixPaths(id, [this.hoveredPath]);
      })
    );
    on("add-node", () =>
      this.withSession(async (id) => {
        await this.client.editTemplate(id, { kind: "add_node", cell_id: int("edit-cell", 0) });
        this.template = await this.client.template(id);
        this.render();
      })
    );
    on("replace-template", () =>
      this.withSession(async (id) => {
        const doc = (must("template-json") as HTMLTextAreaElement).value.trim();
        if (!doc) return;
        await this.client.putTemplate(id, doc);
        this.template = await this.client.template(id);
        this.embedding = null;
        this.render();
      })
    );
  }

  private async withSession(action: (id: string) => Promise<unknown>): Promise<void> {
    if (!this.sessionId) {
      text("status", "create a session first");
      return;
    }
    try {
      await action(this.sessionId);
    } catch (err) {
      text("status", String(err));
    }
  }

  private async brushed(rect: BrushRect, previewIds: number[]): Promise<void> {
    if (!this.sessionId || !this.embedding) return;
    this.lastBrush = rect;
    const command = buildRegionCommand(rect, this.embedding);
    try {
      const result = await this.client.setRegion(this.sessionId, command);
      text("status", `region set: ${result.member_ids.length} members (preview ${previewIds.length})`);
    } catch (err) {
      text("status", String(err));
    }
  }

  private selectPath(pathId: number | null): void {
    this.hoveredPath = pathId;
    if (pathId === null || !this.template) {
      text("properties", "");
      this.render();
      return;
    }
    const block = pathBlocks(this.template)[pathId];
    const lines = [
      `path ${pathId}`,
      `cell ${block.cellId}, node ${block.dstNode}`,
      `source ${block.source < 2 ? "cell input " + block.source : "node " + (block.source - 2)}`,
      `op ${block.op.tag}${block.op.name ? " " + block.op.name : ""}`,
    ];
    if (block.op.params && Object.keys(block.op.params).length) {
      lines.push(`params ${JSON.stringify(block.op.params)}`);
    }
    text("properties", lines.join("\n"));
    this.render();
  }

  private async poll(): Promise<void> {
    if (!this.sessionId) return;
    let events: AppEvent[];
    try {
      events = await this.client.events(this.sessionId, this.view.lastSeq);
    } catch {
      return; // transient; resume from lastSeq next tick
    }
    if (events.length === 0) return;
    const hadEmbedding = this.view.embeddingDigest;
    for (const event of events) this.view = applyEvent(this.view, event);
    if (this.view.embeddingDigest !== hadEmbedding && this.view.embeddingDigest) {
      this.embedding = await this.client.embedding(this.sessionId);
    }
    if (events.some((e) => e.kind === "phase_changed" && e.payload.invalidated)) {
      this.template = await this.client.template(this.sessionId);
      this.embedding = null;
    }
    if (events.some((e) => ["iteration_done", "constraint_changed"].includes(e.kind))) {
      this.fitness = await this.client.fitness(this.sessionId);
    }
    this.render();
  }

  private render(): void {
    text("phase", this.view.phase);
    text("iteration", String(this.view.iteration));
    if (this.view.lastError) text("status", `error: ${this.view.lastError}`);

    const highlighted = new Set<number>();
    if (this.hoveredCandidate !== null && this.embedding) {
      const index = this.embedding.ids.indexOf(this.hoveredCandidate);
      if (index >= 0) {
        for (const p of activePaths(this.embedding.masks[index], this.embedding.mask_length)) {
          highlighted.add(p);
        }
      }
    }
    if (this.hoveredPath !== null) highlighted.add(this.hoveredPath);

    this.lego.render(this.template, highlighted, new Set(this.view.pruned), new Set(this.view.fixed));
    this.loss.render(this.view);
    this.scatter.render(this.embedding, this.view);
    this.fitnessView.render(this.fitness, new Set(this.view.pruned), this.hoveredPath);

    const best = [...this.view.population]
      .filter((m) => m.accuracy !== null)
      .sort((a, b) => (b.accuracy ?? 0) - (a.accuracy ?? 0))[0];
    text("best", best ? `best #${best.id}: ${(best.accuracy ?? 0).toFixed(4)}` : "");
  }
}

function must(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

function on(id: string, handler: () => void): void {
  must(id).addEventListener("click", handler);
}

function int(id: string, fallback: number): number {
  const value = parseInt((must(id) as HTMLInputElement).value, 10);
  return Number.isFinite(value) ? value : fallback;
}

function sel(id: string): string {
  return (must(id) as HTMLSelectElement).value;
}

function text(id: string, value: string): void {
  must(id).textContent = value;
}

new Console().start();
