/**
 * Console state: the latest poll result plus transient UI concerns
 * (optimistic edits awaiting confirmation, the error banner). Server
 * truth always wins on the next poll.
 */

import {
  ApiClient,
  Progress,
  ServiceError,
  ValidationReport,
} from "./api.js";

export interface ConsoleState {
  progress: Progress | null;
  validation: ValidationReport | null;
  // optimistic priority edits by dataset id, cleared once the poll agrees
  pendingPriorities: Map<number, string>;
  banner: string | null;
  polling: boolean;
}

export function initialState(): ConsoleState {
  return {
    progress: null,
    validation: null,
    pendingPriorities: new Map(),
    banner: null,
    polling: false,
  };
}

/** Priority shown for a row: the optimistic edit until the server confirms. */
export function effectivePriority(
  state: ConsoleState,
  datasetId: number,
  serverValue: string | null,
): string | null {
  const pending = state.pendingPriorities.get(datasetId);
  return pending ?? serverValue;
}

export class ConsoleController {
  state: ConsoleState = initialState();
  // at most one in-flight request per action kind
  private inFlight = new Set<string>();

  constructor(private api: ApiClient) {}

  private async action(kind: string, run: () => Promise<void>): Promise<void> {
    if (this.inFlight.has(kind)) return;
    this.inFlight.add(kind);
    try {
      await run();
      this.state.banner = null;
    } catch (err) {
      this.state.banner =
        err instanceof ServiceError
          ? `${err.code}: ${err.message}`
          : `network failure: ${String(err)}`;
    } finally {
      this.inFlight.delete(kind);
    }
  }

  async poll(): Promise<void> {
    await this.action("poll", async () => {
      const progress = await this.api.getProgress();
      this.state.progress = progress;
      // drop optimistic edits the server has confirmed
      for (const row of progress.datasets) {
        if (this.state.pendingPriorities.get(row.dataset_id) === row.priority) {
          this.state.pendingPriorities.delete(row.dataset_id);
        }
      }
    });
  }

  async setPriority(datasetId: number, priority: string): Promise<void> {
    await this.action("priority", async () => {
      this.state.pendingPriorities.set(datasetId, priority);
      await this.api.setPriority(datasetId, priority);
    });
  }

  async runPlan(planId: number): Promise<void> {
    await this.action("run", async () => {
      await this.api.runPlan(planId);
    });
  }

  async pausePlan(planId: number): Promise<void> {
    await this.action("pause", async () => {
      await this.api.pausePlan(planId);
    });
  }

  async retryDerivation(derivationId: number): Promise<void> {
    await this.action("retry", async () => {
      await this.api.retryDerivation(derivationId);
    });
  }

  async loadValidation(validationId: number): Promise<void> {
    await this.action("validation", async () => {
      this.state.validation = await this.api.getValidation(validationId);
    });
  }
}
