/**
 * Display transforms over fetched trajectories: per-step label proportion
 * curves for the charts and divergence markers between runs. Metric values
 * (KL, F1, ...) always come from the service, never from here.
 */

import type { StepDict } from "./types.js";

/** Population actions exclude broadcast injections appended past the agents. */
export function populationActions(step: StepDict) {
  return step.actions.filter((a) => a.author_index < step.states.length);
}

/**
 * Toy corpora encode actions as symbol indices; a symbol maps into a
 * dimension's label list by index (mirroring the service's mock judge).
 * Free-text actions map to null and drop out of the proportions.
 */
export function labelOfAction(text: string, labels: string[]): string | null {
  const trimmed = text.trim();
  if (!/^-?\d+$/.test(trimmed)) return null;
  const symbol = parseInt(trimmed, 10);
  if (symbol < 0) return null;
  return labels[symbol % labels.length];
}

/** Share of the step's population actions carrying the label, one value per
 * step (series length always equals the trajectory length). */
export function proportionSeries(
  steps: StepDict[],
  labels: string[],
  label: string,
): number[] {
  return steps.map((step) => {
    const actions = populationActions(step);
    if (actions.length === 0) return 0;
    const hits = actions.filter((a) => labelOfAction(a.text, labels) === label);
    return hits.length / actions.length;
  });
}

/** First step at which the two runs' population actions differ; null if they
 * agree over the shared horizon. */
export function divergenceStep(a: StepDict[], b: StepDict[]): number | null {
  const horizon = Math.min(a.length, b.length);
  for (let t = 0; t < horizon; t++) {
    const left = populationActions(a[t]).map((x) => x.text);
    const right = populationActions(b[t]).map((x) => x.text);
    if (left.length !== right.length || left.some((x, i) => x !== right[i])) {
      return t;
    }
  }
  return a.length === b.length ? null : horizon;
}
