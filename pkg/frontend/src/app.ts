/**
 * Explorer controller: wires the API client, view state, playback, and
 * renderer together. The DOM layer at the bottom is a thin shell; all
 * behavior lives in ExplorerApp so tests can drive it against a mocked
 * network with instant timers.
 */

import { ApiFailure, ExplorerApi, TimeoutFailure } from "./api.js";
import { buildResultScene, buildSliceScene, renderSvg } from "./render.js";
import type { Scene } from "./render.js";
import { ViewState, diffResults } from "./state.js";
import type { HistoryEntry } from "./state.js";
import type { WhatIfResult } from "./types.js";

export interface ErrorDisplay {
  code: string;
  message: string;
  retryable: boolean;
}

export interface AppHooks {
  render(scene: Scene): void;
  showError(error: ErrorDisplay): void;
  clearError(): void;
  controlsChanged(state: ViewState): void;
  historyChanged(entries: HistoryEntry[], highlighted: string[]): void;
}

export interface AppOptions {
  stepMs?: number;
  pollIntervalMs?: number;
  pollTimeoutMs?: number;
  sleep?: (ms: number) => Promise<void>;
}

const defaultSleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

export class ExplorerApp {
  readonly state = new ViewState();
  private readonly sleep: (ms: number) => Promise<void>;
  private readonly stepMs: number;
  private readonly pollIntervalMs: number;
  private readonly pollTimeoutMs: number;
  private pendingJobId: string | null = null;
  private highlight = new Set<string>();
  private selectedHistory: number[] = [];

  constructor(
    private readonly api: ExplorerApi,
    private readonly hooks: AppHooks,
    options: AppOptions = {},
  ) {
    this.sleep = options.sleep ?? defaultSleep;
    this.stepMs = options.stepMs ?? 600;
    this.pollIntervalMs = options.pollIntervalMs ?? 500;
    this.pollTimeoutMs = options.pollTimeoutMs ?? 60_000;
  }

  async loadNeighborhood(params: {
    world?: string;
    focus?: string;
    radius?: number;
  }): Promise<void> {
    this.state.world = params.world ?? this.state.world;
    this.state.focusNode = params.focus ?? this.state.focusNode;
    this.state.radius = params.radius ?? this.state.radius;
    try {
      const slice = await this.api.getGraph({
        world: this.state.world ?? undefined,
        neighborhoodOf: this.state.focusNode ?? undefined,
        radius: this.state.focusNode ? this.state.radius : undefined,
      });
      this.state.setSlice(slice);
      this.hooks.clearError();
      this.hooks.render(buildSliceScene(slice, this.highlight));
      this.hooks.controlsChanged(this.state);
    } catch (error) {
      this.surfaceError(error, false);
    }
  }

  setIntervention(nodeId: string, value: string): void {
    this.state.setIntervention(nodeId, value);
    this.hooks.controlsChanged(this.state);
  }

  clearIntervention(nodeId: string): void {
    this.state.clearIntervention(nodeId);
    this.hooks.controlsChanged(this.state);
  }

  /** Submit the pending interventions; poll; animate the trace step by step. */
  async submit(target: string): Promise<void> {
    if (!this.state.canSubmit() || !this.state.world) return;
    this.state.inFlight = true;
    this.hooks.clearError();
    this.hooks.controlsChanged(this.state);
    try {
      const jobId = await this.api.submitWhatIf({
        target,
        interventions: Object.fromEntries(this.state.interventions),
        factual_world: this.state.world,
        reasoner: "det",
      });
      this.pendingJobId = jobId;
      await this.resumePolling();
    } catch (error) {
      this.state.inFlight = false;
      this.hooks.controlsChanged(this.state);
      this.surfaceError(error, false);
    }
  }

  /** Retry affordance after a poll timeout: same job, state preserved. */
  async retry(): Promise<void> {
    if (!this.pendingJobId) return;
    this.state.inFlight = true;
    this.hooks.clearError();
    this.hooks.controlsChanged(this.state);
    await this.resumePolling();
  }

  private async resumePolling(): Promise<void> {
    if (!this.pendingJobId) return;
    try {
      const job = await this.api.pollJob(this.pendingJobId, {
        intervalMs: this.pollIntervalMs,
        timeoutMs: this.pollTimeoutMs,
        sleep: this.sleep,
      });
      if (job.status === "error" && job.error) {
        throw new ApiFailure(job.error);
      }
      if (job.status !== "done" || !job.result) {
        throw new ApiFailure({ code: "JOB_CANCELED", message: "job was canceled" });
      }
      this.pendingJobId = null;
      await this.playResult(job.result);
    } catch (error) {
      this.surfaceError(error, error instanceof TimeoutFailure);
    } finally {
      this.state.inFlight = false;
      this.hooks.controlsChanged(this.state);
    }
  }

  private async playResult(result: WhatIfResult): Promise<void> {
    this.state.recordResult(result);
    this.hooks.historyChanged(this.state.history, [...this.highlight]);
    this.hooks.render(buildResultScene(result, this.state.playbackCursor, this.highlight));
    while (!this.state.playbackDone()) {
      await this.sleep(this.stepMs);
      this.state.advanceCursor();
      this.hooks.render(
        buildResultScene(result, this.state.playbackCursor, this.highlight),
      );
    }
  }

  /** Toggle a history entry; with two selected, highlight the differing nodes. */
  selectHistoryEntry(index: number): string[] {
    if (index < 0 || index >= this.state.history.length) return [];
    const position = this.selectedHistory.indexOf(index);
    if (position >= 0) {
      this.selectedHistory.splice(position, 1);
    } else {
      this.selectedHistory.push(index);
      if (this.selectedHistory.length > 2) this.selectedHistory.shift();
    }
    if (this.selectedHistory.length === 2) {
      const [a, b] = this.selectedHistory;
      this.highlight = new Set(
        diffResults(this.state.history[a].result, this.state.history[b].result),
      );
    } else {
      this.highlight = new Set();
    }
    const last = this.state.lastResult;
    if (last) {
      this.hooks.render(
        buildResultScene(last, this.state.playbackCursor, this.highlight),
      );
    }
    this.hooks.historyChanged(this.state.history, [...this.highlight]);
    return [...this.highlight].sort();
  }

  private surfaceError(error: unknown, retryable: boolean): void {
    if (error instanceof ApiFailure) {
      this.hooks.showError({ code: error.code, message: error.message, retryable });
      return;
    }
    if (error instanceof TimeoutFailure) {
      this.hooks.showError({
        code: "TIMEOUT",
        message: `${error.message}; the job may still finish — retry to keep polling`,
        retryable: true,
      });
      return;
    }
    this.hooks.showError({ code: "UNEXPECTED", message: String(error), retryable });
  }
}

// --- browser shell ----------------------------------------------------------

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function bootstrap(): void {
  const api = new ExplorerApi("");
  const svgHost = el<HTMLDivElement>("graph");
  const errorBox = el<HTMLDivElement>("error");
  const retryButton = el<HTMLButtonElement>("retry");
  const submitButton = el<HTMLButtonElement>("submit");
  const historyList = el<HTMLUListElement>("history");
  const targetPanel = el<HTMLDivElement>("target-panel");
  const stepCounter = el<HTMLSpanElement>("step-counter");

  const hooks: AppHooks = {
    render(scene) {
      svgHost.innerHTML = renderSvg(scene);
      stepCounter.textContent = `${scene.stepCounter.executed}/${scene.stepCounter.total}`;
      if (scene.targetPanel) {
        targetPanel.textContent = `${scene.targetPanel.value} — ${scene.targetPanel.contextualInformation}`;
        targetPanel.hidden = false;
      } else {
        targetPanel.hidden = true;
      }
    },
    showError(error) {
      errorBox.textContent = `${error.code}: ${error.message}`;
      errorBox.hidden = false;
      retryButton.hidden = !error.retryable;
    },
    clearError() {
      errorBox.hidden = true;
      retryButton.hidden = true;
    },
    controlsChanged(state) {
      submitButton.disabled = !state.canSubmit();
      el<HTMLUListElement>("interventions").innerHTML = [...state.interventions]
        .map(([k, v]) => `<li>do(${k} = ${v})</li>`)
        .join("");
    },
    historyChanged(entries, highlighted) {
      historyList.innerHTML = entries
        .map((e, i) => `<li data-index="${i}">${e.label} → ${e.result.result.target_value}</li>`)
        .join("");
      el<HTMLDivElement>("diff").textContent = highlighted.length
        ? `changed: ${highlighted.join(", ")}`
        : "";
    },
  };
  const app = new ExplorerApp(api, hooks);

  el<HTMLButtonElement>("load").addEventListener("click", () => {
    void app.loadNeighborhood({
      world: el<HTMLInputElement>("world").value || undefined,
      focus: el<HTMLInputElement>("focus").value || undefined,
      radius: Number(el<HTMLInputElement>("radius").value || "2"),
    });
  });
  el<HTMLButtonElement>("add-intervention").addEventListener("click", () => {
    const node = el<HTMLInputElement>("iv-node").value.trim();
    const value = el<HTMLInputElement>("iv-value").value.trim();
    if (node && value) {
      try {
        app.setIntervention(node, value);
      } catch (error) {
        hooks.showError({ code: "VALIDATION", message: String(error), retryable: false });
      }
    }
  });
  submitButton.addEventListener("click", () => {
    void app.submit(el<HTMLInputElement>("target").value.trim());
  });
  retryButton.addEventListener("click", () => void app.retry());
  historyList.addEventListener("click", (event) => {
    const item = (event.target as HTMLElement).closest("li[data-index]");
    if (item) app.selectHistoryEntry(Number(item.getAttribute("data-index")));
  });
}

const doc = (globalThis as { document?: Document }).document;
if (doc && doc.getElementById("graph")) {
  bootstrap();
}
