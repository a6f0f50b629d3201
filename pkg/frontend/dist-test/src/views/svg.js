"use strict";
/** Tiny SVG helpers shared by the views. */
Object.defineProperty(exports, "__esModule", { value: true });
exports.el = el;
exports.clear = clear;
exports.linearScale = linearScale;
exports.extent = extent;
exports.polyline = polyline;
exports.accuracyColor = accuracyColor;
const NS = "http://www.w3.org/2000/svg";
function el(tag, attrs = {}, parent) {
    const node = document.createElementNS(NS, tag);
    for (const [key, value] of Object.entries(attrs))
        node.setAttribute(key, String(value));
    if (parent)
        parent.appendChild(node);
    return node;
}
function clear(node) {
    while (node.firstChild)
        node.removeChild(node.firstChild);
}
function linearScale(domain, range) {
    const [d0, d1] = domain;
    const [r0, r1] = range;
    const span = d1 - d0 || 1;
    const scale = ((value) => r0 + ((value - d0) / span) * (r1 - r0));
    scale.invert = (pixel) => d0 + ((pixel - r0) / (r1 - r0 || 1)) * span;
    return scale;
}
function extent(values, pad = 0.05) {
    if (values.length === 0)
        return [0, 1];
    let lo = Math.min(...values);
    let hi = Math.max(...values);
    if (lo === hi) {
        lo -= 1;
        hi += 1;
    }
    const margin = (hi - lo) * pad;
    return [lo - margin, hi + margin];
}
function polyline(points) {
    return points.map(([x, y]) => `${x},${y}`).join(" ");
}
/** Accuracy to a blue-to-red ramp; null renders as the unevaluated gray. */
function accuracyColor(accuracy) {
    if (accuracy === null)
        return "#c8c8c8";
    const t = Math.max(0, Math.min(1, accuracy));
    const red = Math.round(40 + 215 * t);
    const blue = Math.round(220 - 170 * t);
    return `rgb(${red},${Math.round(70 + 40 * (1 - Math.abs(t - 0.5) * 2))},${blue})`;
}
