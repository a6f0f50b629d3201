/** Lego view: the template's cells, nodes, and candidate operations as
 * stacked blocks. A hovered candidate or path highlights its blocks; clicking
 * a block selects the path for the properties sidebar. */

import { OpDoc, TemplateDoc } from "../types.js";
import { clear, el } from "./svg.js";

export interface LegoCallbacks {
  onSelectPath(pathId: number | null): void;
  onHoverPath(pathId: number | null): void;
}

const OP_LABELS: Record<string, string> = {
  max_pool_3x3: "MP3",
  avg_pool_3x3: "AP3",
  skip: "SKIP",
  sep_conv_3x3: "SC3",
  sep_conv_5x5: "SC5",
  conv_1x3_3x1: "C13",
};

export function opLabel(op: OpDoc): string {
  return op.tag === "custom" ? `X:${op.name}` : OP_LABELS[op.tag] ?? op.tag;
}

export interface PathBlock {
  pathId: number;
  cellId: number;
  dstNode: number;
  source: number;
  op: OpDoc;
}

/** Dense path ids in template order: cells, then nodes, then sources, then
 * the op order the server declares. Mirrors the wire format's ordering. */
export function pathBlocks(template: TemplateDoc): PathBlock[] {
  const blocks: PathBlock[] = [];
  for (const cell of template.cells) {
    for (const node of cell.nodes) {
      for (const input of node.inputs) {
        for (const op of input.ops) {
          blocks.push({
            pathId: blocks.length,
            cellId: cell.cell_id,
            dstNode: node.node_id,
            source: input.source,
            op,
          });
        }
      }
    }
  }
  return blocks;
}

export class LegoView {
  private svg: SVGSVGElement;

  constructor(private root: HTMLElement, private callbacks: LegoCallbacks, private width = 900) {
    this.svg = el("svg", { width: this.width, height: 10, class: "lego" });
    root.appendChild(this.svg);
  }

  render(
    template: TemplateDoc | null,
    highlighted: Set<number>,
    pruned: Set<number>,
    fixed: Set<number>
  ): void {
    clear(this.svg);
    if (!template) return;
    const blocks = pathBlocks(template);

    const blockW = 36;
    const blockH = 16;
    let index = 0;
    let yCursor = 18;
    for (const cell of template.cells) {
      el("text", { x: 6, y: yCursor, class: "cell-title" }, this.svg).textContent =
        `cell ${cell.cell_id} (${cell.kind})`;
      yCursor += 6;
      for (const node of cell.nodes) {
        let xCursor = 90;
        el("text", { x: 10, y: yCursor + 12, class: "node-title" }, this.svg).textContent =
          `node ${node.node_id}`;
        for (const input of node.inputs) {
          const sourceName = input.source < 2 ? `in${input.source}` : `n${input.source - 2}`;
          el("text", { x: xCursor, y: yCursor + 12, class: "src-title" }, this.svg).textContent =
            sourceName;
          xCursor += 26;
          for (const op of input.ops) {
            const block = blocks[index];
            index += 1;
            const onPath = highlighted.has(block.pathId);
            const isPruned = pruned.has(block.pathId);
            const isFixed = fixed.has(block.pathId);
            const rect = el(
              "rect",
              {
                x: xCursor,
                y: yCursor,
                width: blockW,
                height: blockH,
                rx: 3,
                fill: isPruned ? "#eee" : onPath ? "#fd5" : "#bcd4e6",
                stroke: isFixed ? "#b3261e" : "#678",
                "stroke-width": isFixed ? 2 : 0.7,
                opacity: isPruned ? 0.4 : 1,
                "data-path": block.pathId,
              },
              this.svg
            );
            el(
              "text",
              { x: xCursor + blockW / 2, y: yCursor + 12, "text-anchor": "middle", class: "op" },
              this.svg
            ).textContent = opLabel(op);
            rect.addEventListener("click", () => this.callbacks.onSelectPath(block.pathId));
            rect.addEventListener("mouseenter", () => this.callbacks.onHoverPath(block.pathId));
            rect.addEventListener("mouseleave", () => this.callbacks.onHoverPath(null));
            xCursor += blockW + 4;
          }
          xCursor += 10;
        }
        yCursor += blockH + 8;
      }
      yCursor += 14;
    }
    this.svg.setAttribute("height", String(yCursor));
  }
}
