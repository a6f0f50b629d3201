/** Candidate information view: fitness versus frequency per template path.
 * Hovering a dot highlights the corresponding block in the lego view. */

import { FitnessDoc } from "../types.js";
import { clear, el, extent, linearScale } from "./svg.js";

export interface FitnessCallbacks {
  onHoverPath(pathId: number | null): void;
}

export class FitnessFrequencyView {
  private svg: SVGSVGElement;

  constructor(root: HTMLElement, private callbacks: FitnessCallbacks, private width = 420, private height = 320) {
    this.svg = el("svg", { width: this.width, height: this.height, class: "fitness" });
    root.appendChild(this.svg);
  }

  render(doc: FitnessDoc | null, pruned: Set<number>, highlighted: number | null): void {
    clear(this.svg);
    if (!doc) {
      el("text", { x: 12, y: 24, class: "hint" }, this.svg).textContent =
        "per-path fitness vs frequency appears once the search runs";
      return;
    }
    const x = linearScale(extent(doc.frequency, 0.08), [34, this.width - 12]);
    const y = linearScale(extent(doc.fitness, 0.08), [this.height - 24, 12]);
    el("text", { x: 34, y: this.height - 6, class: "legend" }, this.svg).textContent = "frequency";
    el("text", { x: 6, y: 12, class: "legend" }, this.svg).textContent = "fitness";
    doc.fitness.forEach((fit, pathId) => {
      const dot = el(
        "circle",
        {
          cx: x(doc.frequency[pathId]),
          cy: y(fit),
          r: highlighted === pathId ? 6 : 3.5,
          fill: pruned.has(pathId) ? "#ccc" : highlighted === pathId ? "#fd5" : "#5a7",
          stroke: "#466",
          "stroke-width": 0.5,
          "data-path": pathId,
        },
        this.svg
      );
      dot.addEventListener("mouseenter", () => this.callbacks.onHoverPath(pathId));
      dot.addEventListener("mouseleave", () => this.callbacks.onHoverPath(null));
    });
  }
}
