/**
 * Typed client for the simulation service. Every number the console shows is
 * fetched through here; the console computes no metrics of its own.
 */

import type {
  CreateRunBody,
  DimensionSchema,
  EventSummary,
  ForkBody,
  MetricReport,
  RunRecord,
  TrajectoryResponse,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let detail = response.statusText;
  try {
    const body = await response.json();
    if (body && typeof body.detail === "string") detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(response.status, detail);
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`);
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as T;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as T;
  }

  listEvents(): Promise<EventSummary[]> {
    return this.get("/api/events");
  }

  getSchema(): Promise<DimensionSchema> {
    return this.get("/api/schema");
  }

  listRuns(): Promise<RunRecord[]> {
    return this.get("/api/runs");
  }

  getRun(runId: string): Promise<RunRecord> {
    return this.get(`/api/runs/${runId}`);
  }

  getTrajectory(runId: string): Promise<TrajectoryResponse> {
    return this.get(`/api/runs/${runId}/trajectory`);
  }

  getMetrics(runId: string, baseline?: string): Promise<MetricReport> {
    const query = baseline ? `?baseline=${encodeURIComponent(baseline)}` : "";
    return this.get(`/api/runs/${runId}/metrics${query}`);
  }

  createRun(body: CreateRunBody): Promise<{ run_id: string }> {
    return this.post("/api/runs", body);
  }

  forkRun(runId: string, body: ForkBody): Promise<{ run_id: string }> {
    return this.post(`/api/runs/${runId}/fork`, body);
  }
}
