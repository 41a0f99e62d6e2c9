/**
 * Fork lineage helpers: parent chains, depth, and the run browser tree.
 */

import type { RunRecord } from "./types.js";

/** Chain from the root ancestor down to the given run; throws on cycles. */
export function parentChain(runs: RunRecord[], runId: string): string[] {
  const byId = new Map(runs.map((r) => [r.run_id, r]));
  const chain: string[] = [];
  const seen = new Set<string>();
  let current: string | null = runId;
  while (current !== null) {
    if (seen.has(current)) {
      throw new Error(`lineage cycle at run ${current}`);
    }
    seen.add(current);
    chain.push(current);
    const record = byId.get(current);
    if (!record) break;
    current = record.parent_run;
  }
  return chain.reverse();
}

/** Number of fork hops above the run (0 for a root run). */
export function lineageDepth(runs: RunRecord[], runId: string): number {
  return parentChain(runs, runId).length - 1;
}

export interface LineageNode {
  record: RunRecord;
  children: LineageNode[];
}

/** Roots-first tree of all runs, children ordered by run_id. */
export function lineageTree(runs: RunRecord[]): LineageNode[] {
  const nodes = new Map<string, LineageNode>(
    runs.map((r) => [r.run_id, { record: r, children: [] }]),
  );
  const roots: LineageNode[] = [];
  for (const node of nodes.values()) {
    const parent = node.record.parent_run;
    if (parent !== null && nodes.has(parent)) {
      nodes.get(parent)!.children.push(node);
    } else {
      roots.push(node);
    }
  }
  const byId = (a: LineageNode, b: LineageNode) =>
    a.record.run_id.localeCompare(b.record.run_id);
  for (const node of nodes.values()) node.children.sort(byId);
  roots.sort(byId);
  return roots;
}
