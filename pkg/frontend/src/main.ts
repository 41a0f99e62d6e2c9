/**
 * Page wiring for the intervention console. All state lives in
 * InterventionConsole; this file only renders it and forwards form events.
 */

import { ApiClient } from "./api.js";
import {
  DEFAULT_DIMENSION,
  DEFAULT_LABEL,
  InterventionConsole,
} from "./console.js";
import { lineageTree, type LineageNode } from "./lineage.js";
import type { ScheduleEntry } from "./types.js";

const SERVICE_URL = (window as any).MFSIM_SERVICE_URL ?? "";
const client = new ApiClient(SERVICE_URL);
const app = new InterventionConsole(client);

const el = (id: string) => document.getElementById(id)!;

function chartSvg(series: Record<string, number[]> | Map<string, number[]>,
                  markers: number[], width = 640, height = 160): string {
  const entries = series instanceof Map ? [...series.entries()] : Object.entries(series);
  const horizon = Math.max(1, ...entries.map(([, s]) => s.length));
  const x = (t: number) => (t / Math.max(1, horizon - 1)) * (width - 20) + 10;
  const y = (v: number) => height - 10 - v * (height - 20);
  const palette = ["#c0392b", "#2980b9", "#27ae60", "#8e44ad", "#f39c12", "#16a085"];
  const lines = entries.map(([name, values], i) => {
    const points = values.map((v, t) => `${x(t).toFixed(1)},${y(v).toFixed(1)}`).join(" ");
    return `<polyline fill="none" stroke="${palette[i % palette.length]}" ` +
      `stroke-width="1.5" points="${points}"><title>${name}</title></polyline>`;
  });
  const marks = markers.map((t) =>
    `<line x1="${x(t).toFixed(1)}" y1="10" x2="${x(t).toFixed(1)}" y2="${height - 10}" ` +
    `stroke="#555" stroke-dasharray="4 3"/>`);
  return `<svg viewBox="0 0 ${width} ${height}" width="${width}" height="${height}">` +
    `${marks.join("")}${lines.join("")}</svg>`;
}

function renderBanner(): void {
  const banner = el("error-banner");
  banner.textContent = app.errorBanner ?? "";
  banner.style.display = app.errorBanner ? "block" : "none";
}

function renderTree(nodes: LineageNode[], depth: number): string {
  return nodes.map((node) => {
    const record = node.record;
    const pad = "&nbsp;".repeat(depth * 4);
    const fork = record.fork_step !== null ? ` fork@${record.fork_step}` : "";
    return `<div class="run-row" data-run="${record.run_id}">` +
      `${pad}<a href="#">${record.run_id}</a> ` +
      `<span class="status ${record.status}">${record.status}</span>${fork}</div>` +
      renderTree(node.children, depth + 1);
  }).join("");
}

function renderRuns(): void {
  el("run-list").innerHTML = app.runs.length
    ? renderTree(lineageTree(app.runs), 0)
    : "<em>no runs yet</em>";
  for (const row of document.querySelectorAll<HTMLElement>(".run-row a")) {
    row.addEventListener("click", async (event) => {
      event.preventDefault();
      const runId = (row.closest(".run-row") as HTMLElement).dataset.run!;
      await openRun(runId);
    });
  }
}

async function openRun(runId: string): Promise<void> {
  const dimension =
    (el("dimension-select") as HTMLSelectElement).value || DEFAULT_DIMENSION;
  const view = await app.openRun(runId, dimension);
  el("detail-title").textContent =
    `${view.runId} - ${view.topic} (${view.status}), lineage: ${view.lineage.join(" -> ")}`;
  el("detail-chart").innerHTML = chartSvg(view.series, view.interventionSteps);
  (el("fork-run-id") as HTMLInputElement).value = view.runId;
}

async function submitFork(event: Event): Promise<void> {
  event.preventDefault();
  const runId = (el("fork-run-id") as HTMLInputElement).value;
  const startStep = Number((el("fork-start") as HTMLInputElement).value);
  const step = Number((el("fork-step") as HTMLInputElement).value);
  const kind = (el("fork-kind") as HTMLSelectElement).value as ScheduleEntry["kind"];
  const actions = (el("fork-actions") as HTMLInputElement).value
    .split("|").map((s) => s.trim()).filter(Boolean);
  const count = Number((el("fork-count") as HTMLInputElement).value);
  const button = el("fork-submit") as HTMLButtonElement;
  button.disabled = true;
  try {
    const child = await app.planIntervention(runId, startStep,
      [{ step, kind, actions, count }]);
    el("fork-errors").textContent = Object.entries(app.fieldErrors)
      .map(([field, message]) => `${field}: ${message}`).join("; ");
    if (child) {
      renderRuns();
      await openRun(child.run_id);
    }
  } finally {
    button.disabled = false;
  }
}

async function submitCompare(event: Event): Promise<void> {
  event.preventDefault();
  const ids = (el("compare-ids") as HTMLInputElement).value
    .split(",").map((s) => s.trim()).filter(Boolean);
  const label = (el("label-select") as HTMLSelectElement).value || DEFAULT_LABEL;
  const dimension =
    (el("dimension-select") as HTMLSelectElement).value || DEFAULT_DIMENSION;
  const view = await app.compareRuns(ids, dimension, label);
  if (view.disabled) {
    el("compare-chart").innerHTML = `<em>${view.reason}</em>`;
    el("compare-table").innerHTML = "";
    return;
  }
  const overlay = new Map(view.entries.map((e) => [e.runId, e.series]));
  const markers = view.divergence.flatMap((d) => (d.step === null ? [] : [d.step]));
  el("compare-chart").innerHTML = chartSvg(overlay, markers);
  const rows = Object.entries(view.metrics).map(([id, report]) => {
    const cells = Object.entries(report.aggregate)
      .map(([metric, value]) => `<td>${metric}: ${value.toFixed(4)}</td>`).join("");
    return `<tr><td>${id}</td>${cells}<td>nll: ${report.nll ?? "--"}</td></tr>`;
  });
  const divergences = view.divergence
    .map((d) => `${d.from} vs ${d.to}: ${d.step ?? "never"}`).join(", ");
  el("compare-table").innerHTML =
    `<table>${rows.join("")}</table><p>divergence: ${divergences}</p>`;
}

async function bootstrap(): Promise<void> {
  await app.refreshRuns();
  renderBanner();
  renderRuns();
  try {
    const schema = await client.getSchema();
    const dimensionSelect = el("dimension-select") as HTMLSelectElement;
    dimensionSelect.innerHTML = schema.dimensions
      .map((d) => `<option ${d.name === DEFAULT_DIMENSION ? "selected" : ""}>${d.name}</option>`)
      .join("");
    const renderLabels = () => {
      const chosen = schema.dimensions.find((d) => d.name === dimensionSelect.value)!;
      (el("label-select") as HTMLSelectElement).innerHTML = chosen.labels
        .map((l) => `<option ${l === DEFAULT_LABEL ? "selected" : ""}>${l}</option>`)
        .join("");
    };
    dimensionSelect.addEventListener("change", renderLabels);
    renderLabels();
  } catch {
    // schema fetch failure already covered by the banner on refresh
  }
  el("fork-form").addEventListener("submit", submitFork);
  el("compare-form").addEventListener("submit", submitCompare);
  el("refresh").addEventListener("click", async () => {
    await app.refreshRuns();
    renderBanner();
    renderRuns();
  });
  setInterval(async () => {
    await app.refreshRuns();
    renderBanner();
    renderRuns();
  }, 5000);
}

bootstrap();
