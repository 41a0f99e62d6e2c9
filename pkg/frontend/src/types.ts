/**
 * Wire types for the simulation service HTTP API.
 */

export type RunStatus = "pending" | "running" | "done" | "failed";

export interface SimulationConfig {
  horizon: number;
  batch_size: number;
  warmup_steps: number;
  seed: number;
  context_strategy: string;
  k: number;
  temperature: number;
  mf_temperature: number | null;
  resample_states: boolean;
}

export interface ScheduleEntry {
  step: number;
  kind: "seed_agents" | "broadcast";
  actions: string[];
  count: number;
}

export interface Schedule {
  entries: ScheduleEntry[];
}

export interface RunRecord {
  run_id: string;
  event_id: string;
  config: SimulationConfig;
  status: RunStatus;
  trajectory_path: string;
  parent_run: string | null;
  fork_step: number | null;
  schedule: Schedule | null;
  error: string | null;
}

export interface ActionDict {
  text: string;
  author_index: number;
  step: number;
  provenance: "ground_truth" | "generated" | "injected";
}

export interface StepDict {
  states: { topic: string; rendered_state: string }[];
  actions: ActionDict[];
  mean_field: { content: string | number; step: number };
}

export interface TrajectoryResponse {
  event_id: string;
  config: SimulationConfig;
  fork_step: number | null;
  steps: StepDict[];
}

export interface MetricReport {
  per_dimension: Record<string, Record<string, number>>;
  aggregate: Record<string, number>;
  nll: number | null;
  judge_failures: number;
  radar: Record<string, number> | null;
}

export interface EventSummary {
  event_id: string;
  topic: string;
  domain_tag: string;
  timeline_entries: number;
}

export interface DimensionSchema {
  dimensions: { name: string; labels: string[] }[];
}

export interface CreateRunBody {
  event_id: string;
  config: Partial<SimulationConfig> & { horizon: number };
  schedule?: Schedule;
}

export interface ForkBody {
  start_step: number;
  schedule?: Schedule;
  config_overrides?: Partial<SimulationConfig>;
}
