/**
 * Schematic swimlane rendering: lanes as rows, nodes as boxes placed by
 * topological position, edges as arrows. Pure layout + SVG string assembly
 * so it is testable without a DOM.
 */

import { DiagramGraph } from "./api.js";

export interface Placement {
  id: string;
  label: string;
  type: string;
  lane: string;
  row: number;
  col: number;
  x: number;
  y: number;
}

export interface Layout {
  placements: Placement[];
  laneRows: { slug: string; name: string; row: number }[];
  width: number;
  height: number;
}

export const CELL_W = 170;
export const CELL_H = 90;
export const LANE_LABEL_W = 120;
const BOX_W = 140;
const BOX_H = 54;

export function layoutDiagram(graph: DiagramGraph): Layout {
  const laneRows = graph.lanes.map((lane, i) => ({ ...lane, row: i }));
  const rowOf = new Map(laneRows.map((l) => [l.slug, l.row]));
  // Column = topological position when acyclic, declaration order otherwise.
  const order = graph.order ?? graph.nodes.map((n) => n.id);
  const colOf = new Map(order.map((id, i) => [id, i]));
  const placements: Placement[] = graph.nodes.map((n) => {
    const row = rowOf.get(n.lane) ?? laneRows.length;
    const col = colOf.get(n.id) ?? 0;
    return {
      id: n.id,
      label: n.label,
      type: n.type,
      lane: n.lane,
      row,
      col,
      x: LANE_LABEL_W + col * CELL_W + (CELL_W - BOX_W) / 2,
      y: row * CELL_H + (CELL_H - BOX_H) / 2,
    };
  });
  const rows = Math.max(laneRows.length, 1);
  return {
    placements,
    laneRows,
    width: LANE_LABEL_W + Math.max(order.length, 1) * CELL_W,
    height: rows * CELL_H,
  };
}

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;").replace(/"/g, "&quot;");
}

const EDGE_COLORS: Record<string, string> = {
  to: "#555",
  yes: "#1a7f37",
  no: "#b35900",
  maybe: "#8250df",
};

export function renderSchematic(graph: DiagramGraph, currentNode?: string | null): string {
  const layout = layoutDiagram(graph);
  const byId = new Map(layout.placements.map((pl) => [pl.id, pl]));
  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${layout.width} ${layout.height}" ` +
      `width="${layout.width}" height="${layout.height}" class="schematic">`,
  );
  parts.push(
    `<defs><marker id="arrow" viewBox="0 0 8 8" refX="7" refY="4" markerWidth="7" ` +
      `markerHeight="7" orient="auto"><path d="M0,0 L8,4 L0,8 z" fill="#555"/></marker></defs>`,
  );
  for (const lane of layout.laneRows) {
    const y = lane.row * CELL_H;
    const fill = lane.row % 2 === 0 ? "#f7f7f9" : "#eef0f4";
    parts.push(`<rect x="0" y="${y}" width="${layout.width}" height="${CELL_H}" fill="${fill}"/>`);
    parts.push(
      `<text x="10" y="${y + CELL_H / 2}" dominant-baseline="middle" ` +
        `font-size="13" font-weight="600" fill="#333">${esc(lane.name)}</text>`,
    );
  }
  for (const [source, label, target] of graph.edges) {
    const a = byId.get(source);
    const b = byId.get(target);
    if (!a || !b) continue;
    const x1 = a.x + BOX_W;
    const y1 = a.y + BOX_H / 2;
    const x2 = b.x;
    const y2 = b.y + BOX_H / 2;
    const color = EDGE_COLORS[label] ?? "#555";
    const back = b.col <= a.col;
    const mid = back ? `M${x1 - BOX_W / 2},${a.y} C ${x1},${a.y - 40} ${x2},${b.y - 40} ${x2 + BOX_W / 2},${b.y}` : `M${x1},${y1} L${x2},${y2}`;
    parts.push(
      `<path d="${mid}" stroke="${color}" fill="none" stroke-width="1.6" marker-end="url(#arrow)"/>`,
    );
    if (label !== "to") {
      const lx = (x1 + x2) / 2;
      const ly = back ? Math.min(a.y, b.y) - 30 : (y1 + y2) / 2 - 6;
      parts.push(`<text x="${lx}" y="${ly}" font-size="11" fill="${color}">${label}</text>`);
    }
  }
  for (const pl of layout.placements) {
    const current = pl.id === currentNode;
    const stroke = current ? "#0969da" : "#888";
    const strokeWidth = current ? 3 : 1.2;
    const shape =
      pl.type === "decision"
        ? `<rect x="${pl.x}" y="${pl.y}" width="${BOX_W}" height="${BOX_H}" rx="26" ` +
          `fill="#fff" stroke="${stroke}" stroke-width="${strokeWidth}"/>`
        : `<rect x="${pl.x}" y="${pl.y}" width="${BOX_W}" height="${BOX_H}" rx="6" ` +
          `fill="#fff" stroke="${stroke}" stroke-width="${strokeWidth}"/>`;
    parts.push(`<g data-node="${esc(pl.id)}">`);
    parts.push(shape);
    parts.push(
      `<text x="${pl.x + BOX_W / 2}" y="${pl.y + 18}" text-anchor="middle" font-size="10" ` +
        `fill="#666">${esc(pl.id)} · ${esc(pl.type)}</text>`,
    );
    parts.push(
      `<text x="${pl.x + BOX_W / 2}" y="${pl.y + 36}" text-anchor="middle" font-size="11" ` +
        `fill="#111">${esc(truncate(pl.label, 24))}</text>`,
    );
    parts.push("</g>");
  }
  parts.push("</svg>");
  return parts.join("");
}

function truncate(s: string, n: number): string {
  return s.length <= n ? s : s.slice(0, n - 1) + "…";
}
