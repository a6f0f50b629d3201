/** Tiny SVG helpers shared by the views. */

const NS = "http://www.w3.org/2000/svg";

export function el<K extends keyof SVGElementTagNameMap>(
  tag: K,
  attrs: Record<string, string | number> = {},
  parent?: Element
): SVGElementTagNameMap[K] {
  const node = document.createElementNS(NS, tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, String(value));
  if (parent) parent.appendChild(node);
  return node;
}

export function clear(node: Element): void {
  while (node.firstChild) node.removeChild(node.firstChild);
}

export interface Scale {
  (value: number): number;
  invert(pixel: number): number;
}

export function linearScale(domain: [number, number], range: [number, number]): Scale {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const span = d1 - d0 || 1;
  const scale = ((value: number) => r0 + ((value - d0) / span) * (r1 - r0)) as Scale;
  scale.invert = (pixel: number) => d0 + ((pixel - r0) / (r1 - r0 || 1)) * span;
  return scale;
}

export function extent(values: number[], pad = 0.05): [number, number] {
  if (values.length === 0) return [0, 1];
  let lo = Math.min(...values);
  let hi = Math.max(...values);
  if (lo === hi) {
    lo -= 1;
    hi += 1;
  }
  const margin = (hi - lo) * pad;
  return [lo - margin, hi + margin];
}

export function polyline(points: [number, number][]): string {
  return points.map(([x, y]) => `${x},${y}`).join(" ");
}

/** Accuracy to a blue-to-red ramp; null renders as the unevaluated gray. */
export function accuracyColor(accuracy: number | null): string {
  if (accuracy === null) return "#c8c8c8";
  const t = Math.max(0, Math.min(1, accuracy));
  const red = Math.round(40 + 215 * t);
  const blue = Math.round(220 - 170 * t);
  return `rgb(${red},${Math.round(70 + 40 * (1 - Math.abs(t - 0.5) * 2))},${blue})`;
}
