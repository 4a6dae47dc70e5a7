/**
 * Step-granular trace playback. At cursor t the first t steps of the trace
 * have executed; a node's displayed role and value derive from the query
 * roles and the executed steps only. Every value string is lifted verbatim
 * from an API payload field, never computed here.
 */

import type { StepPayload, WhatIfResult } from "./types.js";

export type DisplayRole =
  | "observed"
  | "intervened"
  | "abduced"
  | "predicted"
  | "target"
  | "latent";

export interface NodeDisplay {
  id: string;
  role: DisplayRole;
  value: string | null;
  /** true for the node whose step executed at cursor-1 */
  active: boolean;
  contextualInformation: string | null;
}

export interface PlaybackView {
  nodes: Map<string, NodeDisplay>;
  executed: StepPayload[];
  done: boolean;
  /** target value plus context, shown once the playback completes */
  targetPanel: { value: string; contextualInformation: string } | null;
}

export function playbackView(result: WhatIfResult, cursor: number): PlaybackView {
  const steps = result.result.trace.steps;
  const bounded = Math.max(0, Math.min(cursor, steps.length));
  const executed = steps.slice(0, bounded);
  const lastNode = bounded > 0 ? executed[bounded - 1].node : null;

  const nodes = new Map<string, NodeDisplay>();
  for (const qn of result.query.query_graph.nodes) {
    let role: DisplayRole = qn.role;
    let value: string | null = qn.value;
    if (qn.role === "intervened") {
      value = result.query.interventions[qn.id] ?? qn.value;
    } else if (qn.role === "observed") {
      value = result.query.observations[qn.id] ?? qn.value;
    } else if (qn.role === "latent" || qn.role === "target") {
      value = null;
    }
    nodes.set(qn.id, {
      id: qn.id,
      role: role === "latent" ? "latent" : role,
      value,
      active: false,
      contextualInformation: qn.contextual_information,
    });
  }

  for (const step of executed) {
    const display = nodes.get(step.node);
    if (!display) continue;
    const isTarget = step.node === result.query.target;
    display.role = isTarget
      ? "target"
      : step.direction === "anticausal"
        ? "abduced"
        : "predicted";
    display.value = step.value;
    display.contextualInformation = step.contextual_information ?? display.contextualInformation;
    display.active = step.node === lastNode;
  }

  const done = bounded >= steps.length;
  let targetPanel: PlaybackView["targetPanel"] = null;
  if (done) {
    const lastTargetStep = [...executed]
      .reverse()
      .find((s) => s.node === result.query.target);
    targetPanel = {
      value: result.result.target_value,
      contextualInformation: lastTargetStep?.contextual_information ?? "",
    };
    const targetDisplay = nodes.get(result.query.target);
    if (targetDisplay) {
      targetDisplay.value = result.result.target_value;
    }
  }
  return { nodes, executed, done, targetPanel };
}
