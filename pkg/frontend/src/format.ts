/** Pure formatting helpers. Everything here is presentation of a value the
 * gateway sent — padding, units, labels — never new information. */

import type { DriftReportEvent } from "./api.js";

export function escapeHtml(value: string): string {
  return value
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

export function formatAccuracy(accuracy: number | null): string {
  if (accuracy === null) {
    return "n/a";
  }
  return `${(accuracy * 100).toFixed(1)}%`;
}

export function formatMagnitude(magnitude: number): string {
  return magnitude.toFixed(3);
}

/** Ten-segment text gauge for the drift magnitude, domain [0, 1]. */
export function magnitudeGauge(magnitude: number): string {
  const clamped = Math.min(1, Math.max(0, magnitude));
  const filled = Math.round(clamped * 10);
  return "█".repeat(filled) + "░".repeat(10 - filled);
}

export function formatVersion(versionId: number | null): string {
  return versionId === null ? "none" : `v${versionId}`;
}

export function pipelineStateLabel(state: string): string {
  switch (state) {
    case "serving":
      return "Serving";
    case "validating":
      return "Awaiting review";
    default:
      return state.replaceAll("_", " ");
  }
}

export function versionStatusLabel(status: string): string {
  switch (status) {
    case "candidate":
      return "Candidate";
    case "deployed":
      return "Deployed";
    case "rejected":
      return "Rejected";
    case "rolled_back":
      return "Rolled back";
    case "archived":
      return "Archived";
    default:
      return status.replaceAll("_", " ");
  }
}

export function verdictLabel(verdict: string | null): string {
  switch (verdict) {
    case "accepted":
      return "Accepted";
    case "rejected":
      return "Rejected";
    case "pending_manual":
      return "Pending review";
    case null:
      return "n/a";
    default:
      return verdict.replaceAll("_", " ");
  }
}

export function scenarioLabel(scenario: string): string {
  switch (scenario) {
    case "NC":
      return "NC (new classes)";
    case "NI":
      return "NI (new instances)";
    case "NIC":
      return "NIC (mixed)";
    case "OFFLINE":
      return "Offline bootstrap";
    default:
      return scenario;
  }
}

export function formatAsOf(at: Date): string {
  const hh = String(at.getHours()).padStart(2, "0");
  const mm = String(at.getMinutes()).padStart(2, "0");
  const ss = String(at.getSeconds()).padStart(2, "0");
  return `as of ${hh}:${mm}:${ss}`;
}

const SPARK_LEVELS = "▁▂▃▄▅▆▇█";

/** Magnitude sparkline over the fixed [0, 1] domain so shape is comparable
 * across polls (an auto-scaled axis would invent trends). */
export function sparkline(values: number[]): string {
  return values
    .map((value) => {
      const clamped = Math.min(1, Math.max(0, value));
      const idx = Math.min(SPARK_LEVELS.length - 1, Math.floor(clamped * SPARK_LEVELS.length));
      return SPARK_LEVELS[idx];
    })
    .join("");
}

/** CSV of the drift-report series exactly as received, for offline plotting. */
export function driftReportsCsv(reports: DriftReportEvent[]): string {
  const header = "t_ms,window_id,magnitude,eddm_level,new_class_fraction,triggered";
  const rows = reports.map((r) =>
    [r.t_ms, r.window_id, r.magnitude, r.eddm_level, r.new_class_fraction, r.triggered].join(","),
  );
  return [header, ...rows].join("\n") + "\n";
}

export function formatCell(value: number): string {
  return value.toFixed(3);
}

/** Background intensity for an accuracy-matrix heat cell (pure styling). */
export function heatAlpha(value: number): string {
  return Math.min(1, Math.max(0, value)).toFixed(2);
}
