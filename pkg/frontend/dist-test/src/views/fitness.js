"use strict";
/** Candidate information view: fitness versus frequency per template path.
 * Hovering a dot highlights the corresponding block in the lego view. */
Object.defineProperty(exports, "__esModule", { value: true });
exports.FitnessFrequencyView = void 0;
const svg_js_1 = require("./svg.js");
class FitnessFrequencyView {
    constructor(root, callbacks, width = 420, height = 320) {
        this.callbacks = callbacks;
        this.width = width;
        this.height = height;
        this.svg = (0, svg_js_1.el)("svg", { width: this.width, height: this.height, class: "fitness" });
        root.appendChild(this.svg);
    }
    render(doc, pruned, highlighted) {
        (0, svg_js_1.clear)(this.svg);
        if (!doc) {
            (0, svg_js_1.el)("text", { x: 12, y: 24, class: "hint" }, this.svg).textContent =
                "per-path fitness vs frequency appears once the search runs";
            return;
        }
        const x = (0, svg_js_1.linearScale)((0, svg_js_1.extent)(doc.frequency, 0.08), [34, this.width - 12]);
        const y = (0, svg_js_1.linearScale)((0, svg_js_1.extent)(doc.fitness, 0.08), [this.height - 24, 12]);
        (0, svg_js_1.el)("text", { x: 34, y: this.height - 6, class: "legend" }, this.svg).textContent = "frequency";
        (0, svg_js_1.el)("text", { x: 6, y: 12, class: "legend" }, this.svg).textContent = "fitness";
        doc.fitness.forEach((fit, pathId) => {
            const dot = (0, svg_js_1.el)("circle", {
                cx: x(doc.frequency[pathId]),
                cy: y(fit),
                r: highlighted === pathId ? 6 : 3.5,
                fill: pruned.has(pathId) ? "#ccc" : highlighted === pathId ? "#fd5" : "#5a7",
                stroke: "#466",
                "stroke-width": 0.5,
                "data-path": pathId,
            }, this.svg);
            dot.addEventListener("mouseenter", () => this.callbacks.onHoverPath(pathId));
            dot.addEventListener("mouseleave", () => this.callbacks.onHoverPath(null));
        });
    }
}
exports.FitnessFrequencyView = FitnessFrequencyView;
