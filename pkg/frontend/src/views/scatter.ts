/** Search space view: the candidate scatterplot with rectangle brushing and
 * set operations over the brushed region. Coordinates come from the server;
 * this view never computes distances or layouts. */

import { EmbeddingDoc } from "../types.js";
import { ViewState, membersInRect, pointColors } from "../viewmodel.js";
import { accuracyColor, clear, el, extent, linearScale, Scale } from "./svg.js";

export interface BrushRect {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

export interface ScatterCallbacks {
  onBrush(rect: BrushRect, memberIds: number[]): void;
  onHover(candidateId: number | null): void;
}

export class SearchSpaceView {
  private svg: SVGSVGElement;
  private xScale: Scale | null = null;
  private yScale: Scale | null = null;
  private brushStart: [number, number] | null = null;
  private brushNode: SVGRectElement | null = null;

  constructor(
    private root: HTMLElement,
    private callbacks: ScatterCallbacks,
    private width = 420,
    private height = 320
  ) {
    this.svg = el("svg", { width: this.width, height: this.height, class: "scatter" });
    root.appendChild(this.svg);
    this.svg.addEventListener("mousedown", (e) => this.beginBrush(e));
    this.svg.addEventListener("mousemove", (e) => this.moveBrush(e));
    this.svg.addEventListener("mouseup", (e) => this.endBrush(e));
  }

  private pixel(event: MouseEvent): [number, number] {
    const box = this.svg.getBoundingClientRect();
    return [event.clientX - box.left, event.clientY - box.top];
  }

  private beginBrush(event: MouseEvent): void {
    this.brushStart = this.pixel(event);
    if (this.brushNode) this.brushNode.remove();
    this.brushNode = el("rect", { class: "brush", fill: "rgba(80,120,220,0.15)", stroke: "#567" }, this.svg);
  }

  private moveBrush(event: MouseEvent): void {
    if (!this.brushStart || !this.brushNode) return;
    const [x, y] = this.pixel(event);
    const [sx, sy] = this.brushStart;
    this.brushNode.setAttribute("x", String(Math.min(sx, x)));
    this.brushNode.setAttribute("y", String(Math.min(sy, y)));
    this.brushNode.setAttribute("width", String(Math.abs(x - sx)));
    this.brushNode.setAttribute("height", String(Math.abs(y - sy)));
  }

  private endBrush(event: MouseEvent): void {
    if (!this.brushStart || !this.xScale || !this.yScale || !this.embedding) {
      this.brushStart = null;
      return;
    }
    const [x, y] = this.pixel(event);
    const [sx, sy] = this.brushStart;
    this.brushStart = null;
    if (Math.abs(x - sx) < 4 && Math.abs(y - sy) < 4) return; // a click, not a brush
    const rect: BrushRect = {
      x0: this.xScale.invert(sx),
      y0: this.yScale.invert(sy),
      x1: this.xScale.invert(x),
      y1: this.yScale.invert(y),
    };
    this.callbacks.onBrush(rect, membersInRect(this.embedding, rect));
  }

  private embedding: EmbeddingDoc | null = null;

  render(embedding: EmbeddingDoc | null, state: ViewState): void {
    this.embedding = embedding;
    clear(this.svg);
    this.brushNode = null;
    if (!embedding) {
      el("text", { x: 12, y: 24, class: "hint" }, this.svg).textContent =
        "no embedding yet - recompute to map the space";
      return;
    }
    const xs = embedding.coords.map((c) => c[0]);
    const ys = embedding.coords.map((c) => c[1]);
    this.xScale = linearScale(extent(xs), [16, this.width - 16]);
    this.yScale = linearScale(extent(ys), [this.height - 16, 16]);
    const colors = pointColors(embedding, state);
    const regionIds = new Set(state.regionMemberIds ?? []);
    embedding.coords.forEach(([x, y], i) => {
      const id = embedding.ids[i];
      const dot = el(
        "circle",
        {
          cx: this.xScale!(x),
          cy: this.yScale!(y),
          r: regionIds.has(id) ? 6 : 4,
          fill: accuracyColor(colors[i]),
          stroke: regionIds.has(id) ? "#235" : "#999",
          "stroke-width": regionIds.has(id) ? 2 : 0.5,
          "data-id": id,
        },
        this.svg
      );
      dot.addEventListener("mouseenter", () => this.callbacks.onHover(id));
      dot.addEventListener("mouseleave", () => this.callbacks.onHover(null));
    });
  }
}
