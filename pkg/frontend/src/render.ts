/** Pure HTML renderers, one per console region. Every number printed here
 * comes from a gateway response field; the only client-side work is
 * formatting. Action buttons are disabled exactly when the corresponding
 * gateway call would be refused. */

import type { DriftReportEvent, ModelCard, ServiceStatus, VersionRow } from "./api.js";
import {
  escapeHtml,
  formatAccuracy,
  formatAsOf,
  formatCell,
  formatMagnitude,
  formatVersion,
  heatAlpha,
  magnitudeGauge,
  pipelineStateLabel,
  scenarioLabel,
  sparkline,
  verdictLabel,
  versionStatusLabel,
} from "./format.js";
import { InlineError, canRollBack, pendingCandidate, sortedHistory } from "./state.js";

/** Region 1: live service status. */
export function renderStatusPanel(status: ServiceStatus, asOf: Date): string {
  return [
    `<h2>${escapeHtml(status.service_name)}</h2>`,
    `<dl class="status-grid">`,
    `<dt>Deployed version</dt><dd id="status-version">${formatVersion(status.deployed_version)}</dd>`,
    `<dt>Learned classes</dt><dd id="status-classes">${status.learned_classes}</dd>`,
    `<dt>Rolling accuracy</dt><dd id="status-accuracy">${formatAccuracy(status.current_accuracy)}</dd>`,
    `<dt>Drift magnitude</dt><dd id="status-magnitude"><span class="gauge">${magnitudeGauge(status.drift_magnitude)}</span> ${formatMagnitude(status.drift_magnitude)}</dd>`,
    `<dt>Pipeline state</dt><dd id="status-state">${pipelineStateLabel(status.pipeline_state)}</dd>`,
    `</dl>`,
    `<p class="as-of">${formatAsOf(asOf)}</p>`,
  ].join("\n");
}

/** Drift magnitude sparkline and the raw-series download. */
export function renderDriftPanel(reports: DriftReportEvent[]): string {
  if (reports.length === 0) {
    return `<p class="empty">No drift reports yet.</p>`;
  }
  const latest = reports[reports.length - 1];
  const fired = reports.filter((r) => r.triggered).length;
  return [
    `<div class="sparkline" title="drift magnitude, oldest to newest">${sparkline(reports.map((r) => r.magnitude))}</div>`,
    `<p>${reports.length} windows, ${fired} triggered; latest magnitude ${formatMagnitude(latest.magnitude)}, error-spacing level ${escapeHtml(latest.eddm_level)}</p>`,
    `<button type="button" data-action="download-drift">Download series (CSV)</button>`,
  ].join("\n");
}

/** Region 2: update history, every version ever registered. */
export function renderHistory(history: VersionRow[], newestFirst: boolean, cardFor: number | null): string {
  if (history.length === 0) {
    return `<p class="empty">No versions yet.</p>`;
  }
  const rows = sortedHistory(history, newestFirst)
    .map((row) => {
      const selected = row.version_id === cardFor ? ` class="selected"` : "";
      return [
        `<tr data-version="${row.version_id}"${selected}>`,
        `<td>${formatVersion(row.version_id)}</td>`,
        `<td>t=${row.created_at}</td>`,
        `<td><span class="badge badge-${row.status}">${versionStatusLabel(row.status)}</span></td>`,
        `<td>${escapeHtml(scenarioLabel(row.scenario))}</td>`,
        `<td>${escapeHtml(verdictLabel(row.verdict))}</td>`,
        `</tr>`,
      ].join("");
    })
    .join("\n");
  const arrow = newestFirst ? "↓" : "↑";
  return [
    `<table class="history">`,
    `<thead><tr><th>Version</th><th><button type="button" data-action="sort-history">Registered ${arrow}</button></th><th>Status</th><th>Scenario</th><th>Verdict</th></tr></thead>`,
    `<tbody>${rows}</tbody>`,
    `</table>`,
  ].join("\n");
}

/** Region 3: the model card for the selected version. */
export function renderCard(card: ModelCard): string {
  const loss = Object.entries(card.loss_config)
    .map(([key, value]) => `<dt>${escapeHtml(key)}</dt><dd>${escapeHtml(String(value))}</dd>`)
    .join("");
  const bench = card.benchmark;
  const matrix = bench
    ? bench.acc_matrix
        .map((row) => {
          const cells = row
            .map(
              (value) =>
                `<td class="heat" style="--heat:${heatAlpha(value)}">${formatCell(value)}</td>`,
            )
            .join("");
          return `<tr>${cells}</tr>`;
        })
        .join("")
    : "";
  const benchBlock = bench
    ? [
        `<table class="acc-matrix"><tbody>${matrix}</tbody></table>`,
        `<dl class="bench">`,
        `<dt>Backward transfer</dt><dd>${bench.bwt === null ? "n/a" : formatCell(bench.bwt)}</dd>`,
        `<dt>Final accuracy</dt><dd>${formatCell(bench.final_acc)}</dd>`,
        `<dt>Memory-stability efficiency</dt><dd>${formatCell(bench.ms_efficiency)}</dd>`,
        `<dt>Compute efficiency</dt><dd>${formatCell(bench.ce_efficiency)}</dd>`,
        `</dl>`,
      ].join("\n")
    : `<p class="empty">No benchmark recorded.</p>`;
  const counts = card.data_manifest.counts;
  return [
    `<h3>Model card ${formatVersion(card.version_id)}</h3>`,
    `<p>parent ${card.parent_id === null ? "none" : formatVersion(card.parent_id)}, ` +
      `${escapeHtml(scenarioLabel(card.scenario))}, ` +
      `${escapeHtml(versionStatusLabel(card.status))}, ` +
      `verdict ${escapeHtml(verdictLabel(card.verdict))}</p>`,
    `<h4>Loss configuration</h4>`,
    `<dl class="loss-config">${loss}</dl>`,
    `<h4>Benchmark</h4>`,
    benchBlock,
    `<h4>Training data</h4>`,
    `<p>${counts.new} new records + ${counts.rehearsal} rehearsal records` +
      `${card.data_manifest.selection.shortfall > 0 ? `, rehearsal shortfall ${card.data_manifest.selection.shortfall}` : ""}</p>`,
    `<button type="button" data-action="close-card">Close</button>`,
  ].join("\n");
}

/** Region 4: the manifest's audit query. */
export function renderManifest(card: ModelCard): string {
  return [
    `<h4>Data manifest ${escapeHtml(card.data_manifest.manifest_id)}</h4>`,
    `<pre class="sql"><code>${escapeHtml(card.sql)}</code></pre>`,
    `<button type="button" data-action="copy-sql">Copy SQL</button>`,
    `<p class="digest">content digest <code>${escapeHtml(card.data_manifest.content_digest)}</code></p>`,
  ].join("\n");
}

function inlineError(error: InlineError | null, forField?: string): string {
  if (error === null) {
    return "";
  }
  if (forField !== undefined && error.field !== forField) {
    return "";
  }
  const where = error.field ? `<code>${escapeHtml(error.field)}</code>: ` : "";
  return `<p class="error" role="alert">${where}${escapeHtml(error.message)}</p>`;
}

/** Region 5: validation controls — approve/reject, rollback, thresholds. */
export function renderValidation(
  history: VersionRow[],
  card: ModelCard | null,
  actionError: InlineError | null,
  policyError: InlineError | null,
  policyNotice: string | null,
  busy: boolean,
): string {
  const pending = pendingCandidate(history);
  const rollbackOk = canRollBack(history);
  const decisionBlock = pending
    ? [
        `<p>Version ${formatVersion(pending.version_id)} is awaiting review` +
          `${card && card.version_id === pending.version_id
            ? `: holdout accuracy ${formatAccuracy(card.validation.holdout_acc_new)} new / ${formatAccuracy(card.validation.holdout_acc_old)} old` +
              (card.validation.reasons.length > 0
                ? ` (${card.validation.reasons.map(escapeHtml).join("; ")})`
                : "")
            : ""}</p>`,
        `<label>Acting as <input id="actor" type="text" placeholder="your name" required></label>`,
        `<button type="button" data-action="approve" data-version="${pending.version_id}"${busy ? " disabled" : ""}>Approve</button>`,
        `<button type="button" data-action="reject" data-version="${pending.version_id}"${busy ? " disabled" : ""}>Reject</button>`,
      ].join("\n")
    : [
        `<p class="empty">No candidate awaiting review.</p>`,
        `<label>Acting as <input id="actor" type="text" placeholder="your name" required></label>`,
      ].join("\n");
  return [
    `<h4>Review</h4>`,
    decisionBlock,
    inlineError(actionError),
    `<h4>Rollback</h4>`,
    `<button type="button" data-action="rollback"${rollbackOk && !busy ? "" : " disabled"}>Roll back to previous version</button>`,
    rollbackOk ? "" : `<p class="hint">Nothing archived to roll back to.</p>`,
    `<h4>Drift policy</h4>`,
    `<form id="policy-form">`,
    `<label>Trigger threshold <input id="magnitude-threshold" name="magnitude_threshold" type="number" step="0.01" min="0" max="1"></label>`,
    inlineError(policyError, "drift_policy.magnitude_threshold"),
    `<button type="submit"${busy ? " disabled" : ""}>Apply</button>`,
    `</form>`,
    inlineError(
      policyError && policyError.field === "drift_policy.magnitude_threshold" ? null : policyError,
    ),
    policyNotice ? `<p class="notice">Policy updated: ${escapeHtml(policyNotice)}</p>` : "",
  ]
    .filter((part) => part !== "")
    .join("\n");
}

export interface AppView {
  status: ServiceStatus | null;
  history: VersionRow[];
  drift: DriftReportEvent[];
  card: ModelCard | null;
  cardFor: number | null;
  newestFirst: boolean;
  asOf: Date | null;
  pollError: InlineError | null;
  actionError: InlineError | null;
  policyError: InlineError | null;
  policyNotice: string | null;
  busy: boolean;
}

/** Whole-console render from the confirmed view model. */
export function renderApp(vm: AppView): string {
  const status = vm.status && vm.asOf
    ? renderStatusPanel(vm.status, vm.asOf)
    : `<p class="empty">Waiting for the first status poll…</p>`;
  const cardBlock = vm.card
    ? [renderCard(vm.card), renderManifest(vm.card)].join("\n")
    : `<p class="empty">Select a version to open its model card.</p>`;
  return [
    `<section id="region-status" class="panel">${status}${inlineError(vm.pollError)}</section>`,
    `<section id="region-drift" class="panel">${renderDriftPanel(vm.drift)}</section>`,
    `<section id="region-history" class="panel">${renderHistory(vm.history, vm.newestFirst, vm.cardFor)}</section>`,
    `<section id="region-card" class="panel">${cardBlock}</section>`,
    `<section id="region-validation" class="panel">${renderValidation(
      vm.history,
      vm.card,
      vm.actionError,
      vm.policyError,
      vm.policyNotice,
      vm.busy,
    )}</section>`,
  ].join("\n");
}
