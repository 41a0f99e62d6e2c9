/**
 * Console state machine: run browser, intervention planner, and run
 * comparison. DOM-free so the whole workflow is testable against a mock
 * service; main.ts wires it to the page.
 */

import { ApiClient, ApiError } from "./api.js";
import { lineageDepth, parentChain } from "./lineage.js";
import { pollRun } from "./poll.js";
import { divergenceStep, proportionSeries } from "./series.js";
import type {
  DimensionSchema,
  MetricReport,
  RunRecord,
  Schedule,
  ScheduleEntry,
  TrajectoryResponse,
} from "./types.js";

export const DEFAULT_DIMENSION = "rumor";
export const DEFAULT_LABEL = "spread";

export interface RunView {
  runId: string;
  topic: string;
  status: string;
  lineage: string[];
  dimension: string;
  labels: string[];
  series: Record<string, number[]>;
  interventionSteps: number[];
  forkStep: number | null;
  warmupSteps: number;
  horizon: number;
}

export interface CompareEntry {
  runId: string;
  series: number[];
  prefixEnd: number;
  forkStep: number | null;
}

export interface DivergenceMarker {
  from: string;
  to: string;
  step: number | null;
}

export interface CompareView {
  disabled: boolean;
  reason?: string;
  dimension: string;
  label: string;
  entries: CompareEntry[];
  divergence: DivergenceMarker[];
  metrics: Record<string, MetricReport>;
}

export interface FieldErrors {
  [field: string]: string;
}

export class InterventionConsole {
  runs: RunRecord[] = [];
  errorBanner: string | null = null;
  selected: RunView | null = null;
  compare: CompareView | null = null;
  fieldErrors: FieldErrors = {};
  forkInFlight = false;

  private schema: DimensionSchema | null = null;
  private trajectories = new Map<string, TrajectoryResponse>();
  private topics = new Map<string, string>();

  constructor(private client: ApiClient) {}

  /** Refresh the run browser; a dead service shows a banner, no retry loop. */
  async refreshRuns(): Promise<void> {
    try {
      this.runs = await this.client.listRuns();
      this.errorBanner = null;
    } catch (error) {
      this.errorBanner = `service unreachable: ${(error as Error).message}`;
    }
  }

  private async loadSchema(): Promise<DimensionSchema> {
    if (this.schema === null) {
      this.schema = await this.client.getSchema();
    }
    return this.schema;
  }

  private labelsOf(schema: DimensionSchema, dimension: string): string[] {
    const entry = schema.dimensions.find((d) => d.name === dimension);
    if (!entry) throw new Error(`unknown dimension ${dimension}`);
    return entry.labels;
  }

  private async topicOf(eventId: string): Promise<string> {
    if (!this.topics.size) {
      for (const event of await this.client.listEvents()) {
        this.topics.set(event.event_id, event.topic);
      }
    }
    return this.topics.get(eventId) ?? eventId;
  }

  private async trajectoryOf(runId: string): Promise<TrajectoryResponse> {
    const cached = this.trajectories.get(runId);
    if (cached) return cached;
    const trajectory = await this.client.getTrajectory(runId);
    this.trajectories.set(runId, trajectory);
    return trajectory;
  }

  /** Load one run's record and trajectory into the detail view. */
  async openRun(runId: string, dimension: string = DEFAULT_DIMENSION): Promise<RunView> {
    const record = await this.client.getRun(runId);
    const [schema, trajectory, topic] = await Promise.all([
      this.loadSchema(),
      this.trajectoryOf(runId),
      this.topicOf(record.event_id),
    ]);
    const labels = this.labelsOf(schema, dimension);
    const series: Record<string, number[]> = {};
    for (const label of labels) {
      series[label] = proportionSeries(trajectory.steps, labels, label);
    }
    const view: RunView = {
      runId,
      topic,
      status: record.status,
      lineage: parentChain(this.runs.length ? this.runs : [record], runId),
      dimension,
      labels,
      series,
      interventionSteps: (record.schedule?.entries ?? []).map((e) => e.step),
      forkStep: record.fork_step,
      warmupSteps: record.config.warmup_steps,
      horizon: record.config.horizon,
    };
    this.selected = view;
    return view;
  }

  async setDimension(dimension: string): Promise<RunView> {
    if (!this.selected) throw new Error("no run open");
    return this.openRun(this.selected.runId, dimension);
  }

  private validateSchedule(startStep: number, horizon: number,
                           entries: ScheduleEntry[]): FieldErrors {
    const errors: FieldErrors = {};
    if (!Number.isInteger(startStep) || startStep < 0 || startStep > horizon) {
      errors.start_step = `must be an integer in [0, ${horizon}]`;
    }
    entries.forEach((entry, index) => {
      if (!Number.isInteger(entry.step) || entry.step < 0 || entry.step >= horizon) {
        errors[`entries.${index}.step`] = `must be an integer in [0, ${horizon})`;
      }
      if (!entry.actions.length || entry.actions.every((a) => !a.trim())) {
        errors[`entries.${index}.actions`] = "at least one action text required";
      }
      if (entry.kind === "seed_agents" && entry.count < 1) {
        errors[`entries.${index}.count`] = "seed_agents needs count >= 1";
      }
    });
    return errors;
  }

  /**
   * Fork a run with an intervention schedule and poll the child to
   * completion. Submissions are disabled while one is in flight; validation
   * problems land in fieldErrors instead of throwing.
   */
  async planIntervention(
    runId: string,
    startStep: number,
    entries: ScheduleEntry[],
    pollTimeoutMs = 60_000,
  ): Promise<RunRecord | null> {
    if (this.forkInFlight) {
      this.fieldErrors = { form: "a fork is already in flight" };
      return null;
    }
    this.forkInFlight = true;
    try {
      const parent = await this.client.getRun(runId);
      this.fieldErrors = this.validateSchedule(startStep, parent.config.horizon,
                                               entries);
      if (Object.keys(this.fieldErrors).length > 0) return null;
      const schedule: Schedule | undefined =
        entries.length > 0 ? { entries } : undefined;
      const { run_id } = await this.client.forkRun(runId, {
        start_step: startStep,
        schedule,
      });
      const child = await pollRun(this.client, run_id, { timeoutMs: pollTimeoutMs });
      await this.refreshRuns();
      return child;
    } catch (error) {
      if (error instanceof ApiError && error.status === 422) {
        this.fieldErrors = { form: error.detail };
        return null;
      }
      throw error;
    } finally {
      this.forkInFlight = false;
    }
  }

  /**
   * Overlay one label's proportion curve for each run, mark pairwise
   * divergence steps, and attach the service's pairwise metric reports
   * (each later run scored against the first).
   */
  async compareRuns(
    runIds: string[],
    dimension: string = DEFAULT_DIMENSION,
    label: string = DEFAULT_LABEL,
  ): Promise<CompareView> {
    if (runIds.length < 2) {
      this.compare = { disabled: true, reason: "select at least two runs",
                       dimension, label, entries: [], divergence: [], metrics: {} };
      return this.compare;
    }
    const records = await Promise.all(runIds.map((id) => this.client.getRun(id)));
    const eventIds = new Set(records.map((r) => r.event_id));
    if (eventIds.size > 1) {
      this.compare = {
        disabled: true,
        reason: `runs span different events: ${[...eventIds].join(", ")}`,
        dimension, label, entries: [], divergence: [], metrics: {},
      };
      return this.compare;
    }
    const schema = await this.loadSchema();
    const labels = this.labelsOf(schema, dimension);
    const trajectories = await Promise.all(runIds.map((id) => this.trajectoryOf(id)));

    const entries: CompareEntry[] = records.map((record, i) => ({
      runId: record.run_id,
      series: proportionSeries(trajectories[i].steps, labels, label),
      prefixEnd: record.fork_step ?? record.config.warmup_steps,
      forkStep: record.fork_step,
    }));
    const divergence: DivergenceMarker[] = [];
    for (let i = 0; i < runIds.length; i++) {
      for (let j = i + 1; j < runIds.length; j++) {
        divergence.push({
          from: runIds[i],
          to: runIds[j],
          step: divergenceStep(trajectories[i].steps, trajectories[j].steps),
        });
      }
    }
    const metrics: Record<string, MetricReport> = {};
    for (let i = 1; i < runIds.length; i++) {
      metrics[runIds[i]] = await this.client.getMetrics(runIds[i], runIds[0]);
    }
    this.compare = { disabled: false, dimension, label, entries, divergence, metrics };
    return this.compare;
  }

  depthOf(runId: string): number {
    return lineageDepth(this.runs, runId);
  }
}
