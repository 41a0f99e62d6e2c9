import { describe, expect, it } from "vitest";

import { divergenceStep, labelOfAction, proportionSeries } from "../src/series.js";
import type { StepDict } from "../src/types.js";

function step(texts: string[], broadcast: string[] = []): StepDict {
  const states = texts.map(() => ({ topic: "t", rendered_state: "s" }));
  const actions = texts.map((text, i) => ({
    text, author_index: i, step: 0, provenance: "generated" as const,
  }));
  for (const text of broadcast) {
    actions.push({ text, author_index: actions.length, step: 0,
                   provenance: "injected" as const });
  }
  return { states, actions, mean_field: { content: "", step: 0 } };
}

describe("labelOfAction", () => {
  it("maps toy symbols into the label list by index", () => {
    const labels = ["l0", "l1", "l2", "l3"];
    expect(labelOfAction("2", labels)).toBe("l2");
    expect(labelOfAction("5", labels)).toBe("l1");
  });

  it("returns null for free text", () => {
    expect(labelOfAction("hello", ["a", "b"])).toBeNull();
  });
});

describe("proportionSeries", () => {
  it("has one value per step", () => {
    const steps = [step(["0", "1"]), step(["0", "0"]), step(["1", "1"])];
    const series = proportionSeries(steps, ["spread", "counter"], "spread");
    expect(series).toHaveLength(3);
    expect(series).toEqual([0.5, 1.0, 0.0]);
  });

  it("excludes broadcast injections from the proportions", () => {
    const steps = [step(["0", "0"], ["1", "1", "1"])];
    const series = proportionSeries(steps, ["spread", "counter"], "spread");
    expect(series).toEqual([1.0]);
  });
});

describe("divergenceStep", () => {
  it("finds the first differing step", () => {
    const a = [step(["0", "1"]), step(["0", "1"]), step(["2", "1"])];
    const b = [step(["0", "1"]), step(["0", "1"]), step(["3", "1"])];
    expect(divergenceStep(a, b)).toBe(2);
  });

  it("returns null for identical runs", () => {
    const a = [step(["0"]), step(["1"])];
    const b = [step(["0"]), step(["1"])];
    expect(divergenceStep(a, b)).toBeNull();
  });
});
