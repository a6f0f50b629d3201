"use strict";
/** Loss chart: template training curve plus the per-iteration candidate loss
 * band once the search runs. */
Object.defineProperty(exports, "__esModule", { value: true });
exports.LossChartView = void 0;
const svg_js_1 = require("./svg.js");
class LossChartView {
    constructor(root, width = 420, height = 200) {
        this.width = width;
        this.height = height;
        this.svg = (0, svg_js_1.el)("svg", { width: this.width, height: this.height, class: "loss" });
        root.appendChild(this.svg);
    }
    render(state) {
        (0, svg_js_1.clear)(this.svg);
        const training = state.trainingCurve;
        const search = state.lossHistory;
        if (training.length === 0 && search.length === 0) {
            (0, svg_js_1.el)("text", { x: 12, y: 24, class: "hint" }, this.svg).textContent =
                "loss appears here during training and search";
            return;
        }
        if (search.length > 0) {
            this.renderSearch(search);
        }
        else {
            this.renderTraining(training);
        }
    }
    renderTraining(curve) {
        const xs = curve.map((p) => p[0]);
        const values = curve.flatMap((p) => [p[1], p[2]]);
        const x = (0, svg_js_1.linearScale)((0, svg_js_1.extent)(xs, 0), [30, this.width - 10]);
        const y = (0, svg_js_1.linearScale)((0, svg_js_1.extent)(values), [this.height - 20, 10]);
        (0, svg_js_1.el)("polyline", { points: (0, svg_js_1.polyline)(curve.map((p) => [x(p[0]), y(p[1])])), fill: "none", stroke: "#468", "stroke-width": 2 }, this.svg);
        (0, svg_js_1.el)("polyline", {
            points: (0, svg_js_1.polyline)(curve.map((p) => [x(p[0]), y(p[2])])),
            fill: "none",
            stroke: "#c66",
            "stroke-width": 2,
            "stroke-dasharray": "5,3",
        }, this.svg);
        (0, svg_js_1.el)("text", { x: 32, y: 14, class: "legend" }, this.svg).textContent =
            "train / validation loss per epoch";
    }
    renderSearch(history) {
        const xs = history.map((t) => t[0]);
        const values = history.flatMap((t) => [t[1], t[2], t[3]]);
        const x = (0, svg_js_1.linearScale)((0, svg_js_1.extent)(xs, 0), [30, this.width - 10]);
        const y = (0, svg_js_1.linearScale)((0, svg_js_1.extent)(values), [this.height - 20, 10]);
        const band = (0, svg_js_1.polyline)(history.map((t) => [x(t[0]), y(t[1])])) +
            " " +
            (0, svg_js_1.polyline)([...history].reverse().map((t) => [x(t[0]), y(t[3])]));
        (0, svg_js_1.el)("polygon", { points: band, fill: "rgba(120,120,120,0.15)", stroke: "none" }, this.svg);
        (0, svg_js_1.el)("polyline", { points: (0, svg_js_1.polyline)(history.map((t) => [x(t[0]), y(t[2])])), fill: "none", stroke: "#333", "stroke-width": 2 }, this.svg);
        (0, svg_js_1.el)("text", { x: 32, y: 14, class: "legend" }, this.svg).textContent =
            "candidate loss per iteration (max/mean/min)";
    }
}
exports.LossChartView = LossChartView;
