/**
 * Deterministic layered layout. Positions depend only on the slice content:
 * a hash of the node/edge ids seeds the jitter, nodes sit in longest-path
 * layers ordered by id. The same slice always renders at the same spot.
 */

export interface LayoutNode {
  id: string;
  x: number;
  y: number;
}

export interface LayoutInput {
  nodeIds: string[];
  edges: [string, string][];
  width?: number;
  height?: number;
}

/** FNV-1a over a canonical serialization of the slice. */
export function sliceHash(nodeIds: string[], edges: [string, string][]): number {
  const text =
    [...nodeIds].sort().join("|") +
    "#" +
    edges
      .map(([a, b]) => `${a}>${b}`)
      .sort()
      .join("|");
  let hash = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    hash ^= text.charCodeAt(i);
    hash = Math.imul(hash, 0x01000193) >>> 0;
  }
  return hash >>> 0;
}

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** Longest-path layering; cycles fall back to insertion depth. */
function layerOf(nodeIds: string[], edges: [string, string][]): Map<string, number> {
  const preds = new Map<string, string[]>();
  for (const id of nodeIds) preds.set(id, []);
  for (const [a, b] of edges) {
    if (preds.has(a) && preds.has(b)) preds.get(b)!.push(a);
  }
  const layer = new Map<string, number>();
  const visiting = new Set<string>();
  const resolve = (id: string): number => {
    const known = layer.get(id);
    if (known !== undefined) return known;
    if (visiting.has(id)) return 0; // cycle guard
    visiting.add(id);
    const parents = preds.get(id) ?? [];
    const depth = parents.length
      ? 1 + Math.max(...parents.map(resolve))
      : 0;
    visiting.delete(id);
    layer.set(id, depth);
    return depth;
  };
  for (const id of [...nodeIds].sort()) resolve(id);
  return layer;
}

export function layoutSlice(input: LayoutInput): LayoutNode[] {
  const width = input.width ?? 900;
  const height = input.height ?? 560;
  const ids = [...input.nodeIds].sort();
  if (ids.length === 0) return [];
  const rand = mulberry32(sliceHash(input.nodeIds, input.edges));
  const layers = layerOf(ids, input.edges);
  const maxLayer = Math.max(...ids.map((id) => layers.get(id) ?? 0));
  const byLayer = new Map<number, string[]>();
  for (const id of ids) {
    const l = layers.get(id) ?? 0;
    if (!byLayer.has(l)) byLayer.set(l, []);
    byLayer.get(l)!.push(id);
  }
  const placed: LayoutNode[] = [];
  for (const [l, members] of [...byLayer.entries()].sort((a, b) => a[0] - b[0])) {
    members.sort();
    const x = maxLayer === 0 ? width / 2 : 80 + (l / maxLayer) * (width - 160);
    for (let i = 0; i < members.length; i++) {
      const y = ((i + 1) / (members.length + 1)) * height;
      const jitter = (rand() - 0.5) * 24;
      placed.push({ id: members[i], x: Math.round(x * 100) / 100, y: Math.round((y + jitter) * 100) / 100 });
    }
  }
  placed.sort((a, b) => (a.id < b.id ? -1 : 1));
  return placed;
}
