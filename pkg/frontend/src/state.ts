/**
 * Explorer view state: selected world, focused neighborhood, pending
 * interventions, the last inference result with a playback cursor, and a
 * session history so successive what-ifs can be diffed.
 *
 * Invariants enforced here: interventions may only reference nodes of the
 * current slice, and the playback cursor never exceeds the trace length.
 */

import type { GraphSlice, WhatIfResult } from "./types.js";

export interface HistoryEntry {
  label: string;
  interventions: Record<string, string>;
  result: WhatIfResult;
}

export class ViewState {
  world: string | null = null;
  focusNode: string | null = null;
  radius = 2;
  slice: GraphSlice | null = null;
  interventions = new Map<string, string>();
  lastResult: WhatIfResult | null = null;
  playbackCursor = 0;
  history: HistoryEntry[] = [];
  inFlight = false;

  visibleNodeIds(): Set<string> {
    return new Set((this.slice?.nodes ?? []).map((n) => n.id));
  }

  setSlice(slice: GraphSlice): void {
    this.slice = slice;
    const visible = this.visibleNodeIds();
    for (const id of [...this.interventions.keys()]) {
      if (!visible.has(id)) this.interventions.delete(id);
    }
  }

  setIntervention(nodeId: string, value: string): void {
    if (!this.visibleNodeIds().has(nodeId)) {
      throw new Error(`cannot intervene on ${nodeId}: not in the visible slice`);
    }
    this.interventions.set(nodeId, value);
  }

  clearIntervention(nodeId: string): void {
    this.interventions.delete(nodeId);
  }

  /** The submit affordance is disabled until at least one intervention is set. */
  canSubmit(): boolean {
    return this.interventions.size > 0 && !this.inFlight && this.world !== null;
  }

  traceLength(): number {
    return this.lastResult?.result.trace.steps.length ?? 0;
  }

  recordResult(result: WhatIfResult): void {
    this.lastResult = result;
    this.playbackCursor = 0;
    const pairs = Object.entries(result.query.interventions)
      .map(([k, v]) => `${k}=${v}`)
      .join(", ");
    this.history.push({
      label: `do(${pairs})`,
      interventions: { ...result.query.interventions },
      result,
    });
  }

  advanceCursor(): number {
    this.playbackCursor = Math.min(this.playbackCursor + 1, this.traceLength());
    return this.playbackCursor;
  }

  resetCursor(): void {
    this.playbackCursor = 0;
  }

  playbackDone(): boolean {
    return this.playbackCursor >= this.traceLength();
  }
}

/**
 * Node ids whose resolved values differ between two runs. Values compare as
 * the verbatim strings the service returned.
 */
export function diffResults(a: WhatIfResult, b: WhatIfResult): string[] {
  const changed = new Set<string>();
  const left = a.result.resolved;
  const right = b.result.resolved;
  for (const key of new Set([...Object.keys(left), ...Object.keys(right)])) {
    if (left[key] !== right[key]) changed.add(key);
  }
  return [...changed].sort();
}
