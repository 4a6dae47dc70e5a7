/**
 * Scene construction and SVG rendering for the neighborhood view.
 *
 * The scene is a plain data structure so tests can assert on it without a
 * DOM; renderSvg serializes it for the browser. Node colors follow the
 * display role; incoming edges of intervened nodes draw dimmed, mirroring
 * the twin-graph cut.
 */

import { layoutSlice } from "./layout.js";
import { playbackView } from "./playback.js";
import type { DisplayRole } from "./playback.js";
import type { GraphSlice, WhatIfResult } from "./types.js";

export const ROLE_COLORS: Record<DisplayRole, string> = {
  observed: "#2e86de",
  intervened: "#e67e22",
  abduced: "#c0392b",
  predicted: "#27ae60",
  target: "#8e44ad",
  latent: "#95a5a6",
};

export interface SceneNode {
  id: string;
  label: string;
  x: number;
  y: number;
  role: DisplayRole;
  color: string;
  value: string | null;
  active: boolean;
  highlighted: boolean;
  contextualInformation: string | null;
}

export interface SceneEdge {
  cause: string;
  effect: string;
  description: string;
  cut: boolean;
}

export interface Scene {
  empty: boolean;
  nodes: SceneNode[];
  edges: SceneEdge[];
  targetPanel: { value: string; contextualInformation: string } | null;
  stepCounter: { executed: number; total: number };
}

export function buildSliceScene(slice: GraphSlice, highlight: Set<string> = new Set()): Scene {
  if (slice.nodes.length === 0) {
    return { empty: true, nodes: [], edges: [], targetPanel: null, stepCounter: { executed: 0, total: 0 } };
  }
  const positions = new Map(
    layoutSlice({
      nodeIds: slice.nodes.map((n) => n.id),
      edges: slice.edges.map((e) => [e.cause, e.effect] as [string, string]),
    }).map((p) => [p.id, p]),
  );
  const nodes = slice.nodes.map((n) => {
    const p = positions.get(n.id)!;
    return {
      id: n.id,
      label: n.name,
      x: p.x,
      y: p.y,
      role: "latent" as DisplayRole,
      color: ROLE_COLORS.latent,
      value: null,
      active: false,
      highlighted: highlight.has(n.id),
      contextualInformation: null,
    };
  });
  const edges = slice.edges.map((e) => ({
    cause: e.cause,
    effect: e.effect,
    description: e.description,
    cut: false,
  }));
  return { empty: false, nodes, edges, targetPanel: null, stepCounter: { executed: 0, total: 0 } };
}

export function buildResultScene(
  result: WhatIfResult,
  cursor: number,
  highlight: Set<string> = new Set(),
): Scene {
  const graph = result.query.query_graph;
  if (graph.nodes.length === 0) {
    return { empty: true, nodes: [], edges: [], targetPanel: null, stepCounter: { executed: 0, total: 0 } };
  }
  const view = playbackView(result, cursor);
  const positions = new Map(
    layoutSlice({
      nodeIds: graph.nodes.map((n) => n.id),
      edges: graph.edges.map((e) => [e.cause, e.effect] as [string, string]),
    }).map((p) => [p.id, p]),
  );
  const intervened = new Set(Object.keys(result.query.interventions));
  const nodes = graph.nodes.map((qn) => {
    const display = view.nodes.get(qn.id)!;
    const p = positions.get(qn.id)!;
    return {
      id: qn.id,
      label: qn.name,
      x: p.x,
      y: p.y,
      role: display.role,
      color: ROLE_COLORS[display.role],
      value: display.value,
      active: display.active,
      highlighted: highlight.has(qn.id),
      contextualInformation: display.contextualInformation,
    };
  });
  const edges = graph.edges.map((e) => ({
    cause: e.cause,
    effect: e.effect,
    description: e.description,
    cut: intervened.has(e.effect),
  }));
  return {
    empty: false,
    nodes,
    edges,
    targetPanel: view.targetPanel,
    stepCounter: { executed: view.executed.length, total: result.result.trace.steps.length },
  };
}

function escapeXml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderSvg(scene: Scene, width = 900, height = 560): string {
  if (scene.empty) {
    return (
      `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}">` +
      `<text x="${width / 2}" y="${height / 2}" text-anchor="middle" class="empty-state">` +
      `Nothing to show: the current slice is empty</text></svg>`
    );
  }
  const byId = new Map(scene.nodes.map((n) => [n.id, n]));
  const parts: string[] = [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}">`,
    `<defs><marker id="arrow" viewBox="0 0 10 10" refX="9" refY="5" markerWidth="7" markerHeight="7" orient="auto-start-reverse">` +
      `<path d="M 0 0 L 10 5 L 0 10 z" fill="#666"/></marker></defs>`,
  ];
  for (const edge of scene.edges) {
    const a = byId.get(edge.cause);
    const b = byId.get(edge.effect);
    if (!a || !b) continue;
    const opacity = edge.cut ? 0.25 : 1.0;
    const dash = edge.cut ? ` stroke-dasharray="6 4"` : "";
    parts.push(
      `<g class="edge${edge.cut ? " cut" : ""}" data-cause="${escapeXml(edge.cause)}" data-effect="${escapeXml(edge.effect)}">` +
        `<line x1="${a.x}" y1="${a.y}" x2="${b.x}" y2="${b.y}" stroke="#666" stroke-width="1.6" opacity="${opacity}"${dash} marker-end="url(#arrow)">` +
        `<title>${escapeXml(edge.description)}</title></line></g>`,
    );
  }
  for (const node of scene.nodes) {
    const ring = node.highlighted
      ? `<circle cx="${node.x}" cy="${node.y}" r="30" fill="none" stroke="#f1c40f" stroke-width="4"/>`
      : "";
    const pulse = node.active
      ? `<circle cx="${node.x}" cy="${node.y}" r="26" fill="none" stroke="${node.color}" stroke-width="2" opacity="0.5"/>`
      : "";
    const valueText =
      node.value !== null
        ? `<text x="${node.x}" y="${node.y + 36}" text-anchor="middle" class="value" font-size="12">${escapeXml(node.value)}</text>`
        : "";
    parts.push(
      `<g class="node role-${node.role}" data-id="${escapeXml(node.id)}" data-role="${node.role}"${
        node.value !== null ? ` data-value="${escapeXml(node.value)}"` : ""
      }>` +
        ring +
        pulse +
        `<circle cx="${node.x}" cy="${node.y}" r="20" fill="${node.color}"/>` +
        `<text x="${node.x}" y="${node.y - 26}" text-anchor="middle" font-size="12">${escapeXml(node.label)}</text>` +
        valueText +
        `</g>`,
    );
  }
  parts.push("</svg>");
  return parts.join("");
}
