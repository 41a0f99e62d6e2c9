/**
 * Interval polling for run status. Polls are idempotent reads; a transport
 * failure rejects immediately rather than retrying silently.
 */

import type { ApiClient } from "./api.js";
import type { RunRecord } from "./types.js";

export interface PollOptions {
  intervalMs?: number;
  timeoutMs?: number;
  onUpdate?: (record: RunRecord) => void;
}

const sleep = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms));

export async function pollRun(
  client: ApiClient,
  runId: string,
  options: PollOptions = {},
): Promise<RunRecord> {
  const interval = options.intervalMs ?? 250;
  const timeout = options.timeoutMs ?? 60_000;
  const deadline = Date.now() + timeout;
  for (;;) {
    const record = await client.getRun(runId);
    options.onUpdate?.(record);
    if (record.status === "done" || record.status === "failed") {
      return record;
    }
    if (Date.now() > deadline) {
      throw new Error(`run ${runId} still ${record.status} after ${timeout}ms`);
    }
    await sleep(interval);
  }
}
