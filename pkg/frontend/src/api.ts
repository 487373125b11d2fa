/**
 * Thin client over the /v1 HTTP API. The console holds no authoritative
 * state: everything rendered comes back out of these calls.
 */

export interface DatasetRow {
  dataset_id: number;
  process: string | null;
  priority: string | null;
  group_in_charge: string | null;
  status: string | null;
  events_requested: number;
  events_generated: number;
  events_simulated: number;
  time_per_event_si95s: number | null;
}

export interface SiteRow {
  processors: number;
  capacity_si95: number;
  busy_seconds: number;
  utilization: number;
  events: number;
}

export interface Progress {
  simulated_time: number;
  finished: boolean;
  datasets: DatasetRow[];
  sites: Record<string, SiteRow>;
  retries: number;
  expired_invocations: number;
  derivations_done: number;
  derivations_total: number;
}

export interface ValidationReport {
  passed: boolean;
  threshold: number;
  results: { name: string; chi2: number; ndf: number; chi2_per_ndf: number }[];
  chart: [string, number][];
}

export interface ApiError {
  code: string;
  message: string;
}

export class ServiceError extends Error {
  code: string;
  constructor(err: ApiError) {
    super(err.message);
    this.code = err.code;
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private fetchImpl: FetchLike;
  private base: string;

  constructor(base = "", fetchImpl: FetchLike = fetch.bind(globalThis)) {
    this.base = base;
    this.fetchImpl = fetchImpl;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: {} };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const resp = await this.fetchImpl(this.base + path, init);
    const payload = await resp.json();
    if (!resp.ok) {
      throw new ServiceError(
        payload.error ?? { code: "unknown", message: resp.statusText },
      );
    }
    return payload as T;
  }

  getProgress(): Promise<Progress> {
    return this.request("GET", "/v1/progress");
  }

  setPriority(datasetId: number, priority: string): Promise<unknown> {
    return this.request("PATCH", `/v1/datasets/${datasetId}/priority`, {
      priority,
    });
  }

  runPlan(planId: number): Promise<{ state: string }> {
    return this.request("POST", `/v1/plans/${planId}/run`, { seed: 0 });
  }

  pausePlan(planId: number): Promise<{ state: string }> {
    return this.request("POST", `/v1/plans/${planId}/pause`);
  }

  retryDerivation(derivationId: number): Promise<unknown> {
    return this.request("POST", `/v1/derivations/${derivationId}/retry`);
  }

  getValidation(validationId: number): Promise<ValidationReport> {
    return this.request("GET", `/v1/validation/${validationId}`);
  }
}
