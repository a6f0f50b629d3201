"use strict";
/** Search space view: the candidate scatterplot with rectangle brushing and
 * set operations over the brushed region. Coordinates come from the server;
 * this view never computes distances or layouts. */
Object.defineProperty(exports, "__esModule", { value: true });
exports.SearchSpaceView = void 0;
const viewmodel_js_1 = require("../viewmodel.js");
const svg_js_1 = require("./svg.js");
class SearchSpaceView {
    constructor(root, callbacks, width = 420, height = 320) {
        this.root = root;
        this.callbacks = callbacks;
        this.width = width;
        this.height = height;
        this.xScale = null;
        this.yScale = null;
        this.brushStart = null;
        this.brushNode = null;
        this.embedding = null;
        this.svg = (0, svg_js_1.el)("svg", { width: this.width, height: this.height, class: "scatter" });
        root.appendChild(this.svg);
        this.svg.addEventListener("mousedown", (e) => this.beginBrush(e));
        this.svg.addEventListener("mousemove", (e) => this.moveBrush(e));
        this.svg.addEventListener("mouseup", (e) => this.endBrush(e));
    }
    pixel(event) {
        const box = this.svg.getBoundingClientRect();
        return [event.clientX - box.left, event.clientY - box.top];
    }
    beginBrush(event) {
        this.brushStart = this.pixel(event);
        if (this.brushNode)
            this.brushNode.remove();
        this.brushNode = (0, svg_js_1.el)("rect", { class: "brush", fill: "rgba(80,120,220,0.15)", stroke: "#567" }, this.svg);
    }
    moveBrush(event) {
        if (!this.brushStart || !this.brushNode)
            return;
        const [x, y] = this.pixel(event);
        const [sx, sy] = this.brushStart;
        this.brushNode.setAttribute("x", String(Math.min(sx, x)));
        this.brushNode.setAttribute("y", String(Math.min(sy, y)));
        this.brushNode.setAttribute("width", String(Math.abs(x - sx)));
        this.brushNode.setAttribute("height", String(Math.abs(y - sy)));
    }
    endBrush(event) {
        if (!this.brushStart || !this.xScale || !this.yScale || !this.embedding) {
            this.brushStart = null;
            return;
        }
        const [x, y] = this.pixel(event);
        const [sx, sy] = this.brushStart;
        this.brushStart = null;
        if (Math.abs(x - sx) < 4 && Math.abs(y - sy) < 4)
            return; // a click, not a brush
        const rect = {
            x0: this.xScale.invert(sx),
            y0: this.yScale.invert(sy),
            x1: this.xScale.invert(x),
            y1: this.yScale.invert(y),
        };
        this.callbacks.onBrush(rect, (0, viewmodel_js_1.membersInRect)(this.embedding, rect));
    }
    render(embedding, state) {
        this.embedding = embedding;
        (0, svg_js_1.clear)(this.svg);
        this.brushNode = null;
        if (!embedding) {
            (0, svg_js_1.el)("text", { x: 12, y: 24, class: "hint" }, this.svg).textContent =
                "no embedding yet - recompute to map the space";
            return;
        }
        const xs = embedding.coords.map((c) => c[0]);
        const ys = embedding.coords.map((c) => c[1]);
        this.xScale = (0, svg_js_1.linearScale)((0, svg_js_1.extent)(xs), [16, this.width - 16]);
        this.yScale = (0, svg_js_1.linearScale)((0, svg_js_1.extent)(ys), [this.height - 16, 16]);
        const colors = (0, viewmodel_js_1.pointColors)(embedding, state);
        const regionIds = new Set(state.regionMemberIds ?? []);
        embedding.coords.forEach(([x, y], i) => {
            const id = embedding.ids[i];
            const dot = (0, svg_js_1.el)("circle", {
                cx: this.xScale(x),
                cy: this.yScale(y),
                r: regionIds.has(id) ? 6 : 4,
                fill: (0, svg_js_1.accuracyColor)(colors[i]),
                stroke: regionIds.has(id) ? "#235" : "#999",
                "stroke-width": regionIds.has(id) ? 2 : 0.5,
                "data-id": id,
            }, this.svg);
            dot.addEventListener("mouseenter", () => this.callbacks.onHover(id));
            dot.addEventListener("mouseleave", () => this.callbacks.onHover(null));
        });
    }
}
exports.SearchSpaceView = SearchSpaceView;
