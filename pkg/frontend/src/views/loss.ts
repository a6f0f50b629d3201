/** Loss chart: template training curve plus the per-iteration candidate loss
 * band once the search runs. */

import { ViewState } from "../viewmodel.js";
import { clear, el, extent, linearScale, polyline } from "./svg.js";

export class LossChartView {
  private svg: SVGSVGElement;

  constructor(root: HTMLElement, private width = 420, private height = 200) {
    this.svg = el("svg", { width: this.width, height: this.height, class: "loss" });
    root.appendChild(this.svg);
  }

  render(state: ViewState): void {
    clear(this.svg);
    const training = state.trainingCurve;
    const search = state.lossHistory;
    if (training.length === 0 && search.length === 0) {
      el("text", { x: 12, y: 24, class: "hint" }, this.svg).textContent =
        "loss appears here during training and search";
      return;
    }
    if (search.length > 0) {
      this.renderSearch(search);
    } else {
      this.renderTraining(training);
    }
  }

  private renderTraining(curve: number[][]): void {
    const xs = curve.map((p) => p[0]);
    const values = curve.flatMap((p) => [p[1], p[2]]);
    const x = linearScale(extent(xs, 0), [30, this.width - 10]);
    const y = linearScale(extent(values), [this.height - 20, 10]);
    el(
      "polyline",
      { points: polyline(curve.map((p) => [x(p[0]), y(p[1])])), fill: "none", stroke: "#468", "stroke-width": 2 },
      this.svg
    );
    el(
      "polyline",
      {
        points: polyline(curve.map((p) => [x(p[0]), y(p[2])])),
        fill: "none",
        stroke: "#c66",
        "stroke-width": 2,
        "stroke-dasharray": "5,3",
      },
      this.svg
    );
    el("text", { x: 32, y: 14, class: "legend" }, this.svg).textContent =
      "train / validation loss per epoch";
  }

  private renderSearch(history: number[][]): void {
    const xs = history.map((t) => t[0]);
    const values = history.flatMap((t) => [t[1], t[2], t[3]]);
    const x = linearScale(extent(xs, 0), [30, this.width - 10]);
    const y = linearScale(extent(values), [this.height - 20, 10]);
    const band =
      polyline(history.map((t) => [x(t[0]), y(t[1])])) +
      " " +
      polyline([...history].reverse().map((t) => [x(t[0]), y(t[3])]));
    el("polygon", { points: band, fill: "rgba(120,120,120,0.15)", stroke: "none" }, this.svg);
    el(
      "polyline",
      { points: polyline(history.map((t) => [x(t[0]), y(t[2])])), fill: "none", stroke: "#333", "stroke-width": 2 },
      this.svg
    );
    el("text", { x: 32, y: 14, class: "legend" }, this.svg).textContent =
      "candidate loss per iteration (max/mean/min)";
  }
}
