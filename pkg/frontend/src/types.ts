/**
 * Wire types for the graph exploration service.
 *
 * Every field mirrors the JSON the service emits; the explorer displays
 * these values verbatim and never derives causal values on its own.
 */

export interface WorldAssignment {
  causal_effect: string | null;
  contextual_information: string;
  current_value: string;
  supporting_text_snippets: string[];
}

export interface NodeSnapshot {
  description: string;
  id: string;
  name: string;
  type: string;
  values: string;
  worlds: Record<string, WorldAssignment>;
}

export interface EdgeSnapshot {
  cause: string;
  effect: string;
  description: string;
  type: string;
  strength?: string | null;
  confidence?: string | null;
  contextual_information?: string | null;
}

export interface GraphSlice {
  nodes: NodeSnapshot[];
  edges: EdgeSnapshot[];
  total: number;
  next_after: string | null;
  worlds: Record<string, { source?: string | null }>;
}

export type NodeRole = "observed" | "intervened" | "latent" | "target";

export interface QueryNodePayload {
  contextual_information: string | null;
  description: string;
  id: string;
  name: string;
  role: NodeRole;
  type: string;
  value: string | null;
  values: string;
}

export interface QueryEdgePayload {
  cause: string;
  description: string;
  effect: string;
  type: string;
}

export interface QueryPayload {
  counterfactual_world: string | null;
  factual_world: string;
  ground_truth: string;
  ground_truth_type: string;
  interventions: Record<string, string>;
  k: number;
  kind: string;
  matched: string[];
  observations: Record<string, string>;
  query_graph: { edges: QueryEdgePayload[]; nodes: QueryNodePayload[] };
  query_id: string;
  target: string;
}

export interface PlanPayload {
  abduction_steps: { node: string; from_children: string[] }[];
  cut_edges: [string, string][];
  prediction_steps: { node: string; from_parents: string[] }[];
  target: string;
  transfer: string[];
}

export interface StepPayload {
  ambiguous: boolean;
  contextual_information: string;
  direction: "causal" | "anticausal";
  inputs: string[];
  node: string;
  retries: number;
  value: string;
}

export interface TracePayload {
  input_tokens: number;
  output_tokens: number;
  retries: number;
  steps: StepPayload[];
}

export interface InferencePayload {
  resolved: Record<string, string>;
  target_value: string;
  trace: TracePayload;
}

/** Body of a finished what-if job. */
export interface WhatIfResult {
  query: QueryPayload;
  plan: PlanPayload;
  result: InferencePayload;
}

export interface JobBody {
  job_id: string;
  status: "queued" | "running" | "done" | "error" | "canceled";
  result?: WhatIfResult;
  error?: ApiError;
}

export interface ApiError {
  code: string;
  message: string;
  detail?: string;
}

export interface WhatIfRequest {
  target: string;
  interventions: Record<string, string>;
  factual_world: string;
  reasoner: string;
}
