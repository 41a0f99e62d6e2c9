/**
 * In-memory fixture implementing the service's HTTP endpoints behind a
 * fetch-like function, so every console flow runs without a live backend.
 */

import type {
  DimensionSchema,
  MetricReport,
  RunRecord,
  Schedule,
  StepDict,
  TrajectoryResponse,
} from "../src/types.js";
import type { FetchLike } from "../src/api.js";

const SCHEMA: DimensionSchema = {
  dimensions: [
    { name: "rumor", labels: ["spread", "counter"] },
    { name: "sentiment", labels: ["angry", "calm", "happy", "sad", "fear", "surprise"] },
    { name: "attitude", labels: ["positive", "negative", "neutral"] },
    { name: "behavior", labels: ["comment", "share"] },
    { name: "stance", labels: ["support", "oppose", "neutral"] },
    { name: "belief", labels: ["believe", "doubt"] },
    { name: "subjectivity", labels: ["subjective", "objective"] },
    { name: "intent", labels: ["question", "promotion", "opinion"] },
  ],
};

const CANNED_METRICS: MetricReport = {
  per_dimension: { rumor: { kl: 0.1, wasserstein: 0.05, dtw: 0.02, macro_f1: 0.9, micro_f1: 0.95 } },
  aggregate: { kl: 0.1, wasserstein: 0.05, dtw: 0.02, macro_f1: 0.9, micro_f1: 0.95 },
  nll: null,
  judge_failures: 0,
  radar: null,
};

interface StoredRun {
  record: RunRecord;
  steps: StepDict[];
  pollsUntilDone: number;
}

export interface MockOptions {
  horizon?: number;
  batch?: number;
  pollsUntilDone?: number;
}

export class MockService {
  runs = new Map<string, StoredRun>();
  private counter = 0;
  readonly horizon: number;
  readonly batch: number;
  private pollsUntilDone: number;

  constructor(options: MockOptions = {}) {
    this.horizon = options.horizon ?? 12;
    this.batch = options.batch ?? 2;
    this.pollsUntilDone = options.pollsUntilDone ?? 0;
  }

  private makeSteps(fromParent: StepDict[] | null, forkStep: number,
                    schedule: Schedule | null): StepDict[] {
    const steps: StepDict[] = [];
    for (let t = 0; t < this.horizon; t++) {
      if (fromParent && t < forkStep) {
        steps.push(JSON.parse(JSON.stringify(fromParent[t])));
        continue;
      }
      const states = Array.from({ length: this.batch }, () => ({
        topic: "mock topic",
        rendered_state: "mock state",
      }));
      const actions = states.map((_, i) => ({
        text: String((t + i) % 4),
        author_index: i,
        step: t,
        provenance: "generated" as const,
      }));
      for (const entry of schedule?.entries ?? []) {
        if (entry.step !== t) continue;
        if (entry.kind === "seed_agents") {
          for (let i = 0; i < entry.count && i < actions.length; i++) {
            actions[i] = { text: entry.actions[i % entry.actions.length],
                           author_index: i, step: t, provenance: "injected" };
          }
        } else {
          for (const text of entry.actions) {
            actions.push({ text, author_index: actions.length, step: t,
                           provenance: "injected" });
          }
        }
      }
      steps.push({ states, actions, mean_field: { content: "", step: t } });
    }
    return steps;
  }

  createRun(eventId: string, schedule: Schedule | null = null,
            parentRun: string | null = null, forkStep: number | null = null): string {
    const runId = `run-${this.counter++}`;
    const parent = parentRun ? this.runs.get(parentRun)! : null;
    const record: RunRecord = {
      run_id: runId,
      event_id: eventId,
      config: { horizon: this.horizon, batch_size: this.batch, warmup_steps: 2,
                seed: 0, context_strategy: "mean_field", k: 0, temperature: 1.0,
                mf_temperature: 0.0, resample_states: false },
      status: this.pollsUntilDone > 0 ? "running" : "done",
      trajectory_path: `/tmp/${runId}.jsonl`,
      parent_run: parentRun,
      fork_step: forkStep,
      schedule,
      error: null,
    };
    this.runs.set(runId, {
      record,
      steps: this.makeSteps(parent?.steps ?? null, forkStep ?? 0, schedule),
      pollsUntilDone: this.pollsUntilDone,
    });
    return runId;
  }

  fetch: FetchLike = async (url, init) => {
    const { pathname, searchParams } = new URL(url, "http://mock");
    const method = init?.method ?? "GET";
    const json = (status: number, body: unknown) =>
      new Response(JSON.stringify(body), {
        status,
        headers: { "Content-Type": "application/json" },
      });

    if (pathname === "/api/events") {
      return json(200, [{ event_id: "ev-0", topic: "mock topic",
                          domain_tag: "synthetic", timeline_entries: 24 }]);
    }
    if (pathname === "/api/schema") return json(200, SCHEMA);
    if (pathname === "/api/runs" && method === "GET") {
      return json(200, [...this.runs.values()].map((r) => r.record));
    }
    if (pathname === "/api/runs" && method === "POST") {
      const body = JSON.parse(String(init?.body ?? "{}"));
      return json(200, { run_id: this.createRun(body.event_id, body.schedule ?? null) });
    }

    const runMatch = pathname.match(/^\/api\/runs\/([^/]+)(\/.*)?$/);
    if (!runMatch) return json(404, { detail: `no route ${pathname}` });
    const stored = this.runs.get(runMatch[1]);
    if (!stored) return json(404, { detail: `unknown run_id '${runMatch[1]}'` });
    const tail = runMatch[2] ?? "";

    if (tail === "" && method === "GET") {
      if (stored.record.status === "running") {
        stored.pollsUntilDone -= 1;
        if (stored.pollsUntilDone <= 0) stored.record.status = "done";
      }
      return json(200, stored.record);
    }
    if (tail === "/trajectory") {
      const body: TrajectoryResponse = {
        event_id: stored.record.event_id,
        config: stored.record.config,
        fork_step: stored.record.fork_step,
        steps: stored.steps,
      };
      return json(200, body);
    }
    if (tail === "/metrics") {
      if (stored.record.status !== "done") {
        return json(409, { detail: `run is ${stored.record.status}, not done` });
      }
      const baseline = searchParams.get("baseline");
      if (baseline && !this.runs.has(baseline)) {
        return json(404, { detail: `unknown run_id '${baseline}'` });
      }
      return json(200, CANNED_METRICS);
    }
    if (tail === "/fork" && method === "POST") {
      const body = JSON.parse(String(init?.body ?? "{}"));
      const startStep = body.start_step;
      if (startStep > this.horizon) {
        return json(422, { detail: `start_step: ${startStep} outside [0, ${this.horizon}]` });
      }
      for (const entry of body.schedule?.entries ?? []) {
        if (entry.step >= this.horizon) {
          return json(422, { detail: `schedule: intervention step ${entry.step} outside horizon` });
        }
      }
      return json(200, {
        run_id: this.createRun(stored.record.event_id, body.schedule ?? null,
                               runMatch[1], startStep),
      });
    }
    return json(404, { detail: `no route ${method} ${pathname}` });
  };
}
