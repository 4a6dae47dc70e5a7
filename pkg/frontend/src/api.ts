/**
 * Typed client for the exploration service. The fetch function is
 * injectable so tests can mount a mocked network.
 */

import type { ApiError, GraphSlice, JobBody, WhatIfRequest } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiFailure extends Error {
  readonly code: string;
  readonly detail?: string;

  constructor(error: ApiError) {
    super(error.message);
    this.code = error.code;
    this.detail = error.detail;
  }
}

export class TimeoutFailure extends Error {
  constructor(message: string) {
    super(message);
  }
}

async function readError(reply: Response): Promise<ApiFailure> {
  try {
    const body = (await reply.json()) as ApiError;
    if (body && body.code) return new ApiFailure(body);
  } catch {
    // fall through to the generic error below
  }
  return new ApiFailure({ code: `HTTP_${reply.status}`, message: reply.statusText });
}

export interface PollOptions {
  intervalMs?: number;
  timeoutMs?: number;
  sleep?: (ms: number) => Promise<void>;
}

const defaultSleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

export class ExplorerApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async get<T>(path: string): Promise<T> {
    const reply = await this.fetchFn(this.baseUrl + path);
    if (!reply.ok) throw await readError(reply);
    return (await reply.json()) as T;
  }

  async getGraph(params: {
    world?: string;
    neighborhoodOf?: string;
    radius?: number;
  } = {}): Promise<GraphSlice> {
    const query = new URLSearchParams();
    if (params.world) query.set("world", params.world);
    if (params.neighborhoodOf) query.set("neighborhood_of", params.neighborhoodOf);
    if (params.radius !== undefined) query.set("radius", String(params.radius));
    const suffix = query.toString() ? `?${query.toString()}` : "";
    return this.get<GraphSlice>(`/api/graph${suffix}`);
  }

  async submitWhatIf(request: WhatIfRequest): Promise<string> {
    const reply = await this.fetchFn(`${this.baseUrl}/api/whatif`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(request),
    });
    if (!reply.ok) throw await readError(reply);
    const body = (await reply.json()) as { job_id: string };
    return body.job_id;
  }

  async getJob(jobId: string): Promise<JobBody> {
    return this.get<JobBody>(`/api/jobs/${jobId}`);
  }

  /** Poll until the job leaves the queue; rejects with TimeoutFailure when the budget runs out. */
  async pollJob(jobId: string, options: PollOptions = {}): Promise<JobBody> {
    const interval = options.intervalMs ?? 500;
    const budget = options.timeoutMs ?? 60_000;
    const sleep = options.sleep ?? defaultSleep;
    const started = Date.now();
    for (;;) {
      const body = await this.getJob(jobId);
      if (body.status === "done" || body.status === "error" || body.status === "canceled") {
        return body;
      }
      if (Date.now() - started >= budget) {
        throw new TimeoutFailure(`job ${jobId} still ${body.status} after ${budget}ms`);
      }
      await sleep(interval);
    }
  }
}
