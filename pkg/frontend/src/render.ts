/**
 * Pure view functions: state in, HTML string out. Keeping these free of
 * document access makes the render layer testable without a browser.
 */

import { Progress, ValidationReport } from "./api.js";
import { ConsoleState, effectivePriority } from "./state.js";

const PRIORITIES = ["low", "medium", "high", "very_high"];

function esc(value: unknown): string {
  return String(value ?? "")
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderBanner(state: ConsoleState): string {
  if (!state.banner) return "";
  return `<div class="banner" data-role="banner">${esc(state.banner)}</div>`;
}

export function renderDatasetTable(state: ConsoleState): string {
  const progress = state.progress;
  if (!progress) return `<p class="empty">waiting for first poll…</p>`;
  const rows = progress.datasets
    .map((d) => {
      const priority = effectivePriority(state, d.dataset_id, d.priority);
      const options = PRIORITIES.map(
        (p) =>
          `<option value="${p}"${p === priority ? " selected" : ""}>${p}</option>`,
      ).join("");
      return (
        `<tr data-dataset="${d.dataset_id}">` +
        `<td>${d.dataset_id}</td>` +
        `<td>${esc(d.process)}</td>` +
        `<td><select data-action="priority" data-dataset="${d.dataset_id}">` +
        `${options}</select></td>` +
        `<td>${esc(d.group_in_charge)}</td>` +
        `<td class="status-${esc(d.status)}">${esc(d.status)}</td>` +
        `<td class="num">${d.events_requested}</td>` +
        `<td class="num">${d.events_generated}</td>` +
        `<td class="num">${d.events_simulated}</td>` +
        `</tr>`
      );
    })
    .join("");
  return (
    `<table class="datasets"><thead><tr>` +
    `<th>id</th><th>process</th><th>priority</th><th>group</th>` +
    `<th>status</th><th>requested</th><th>generated</th><th>simulated</th>` +
    `</tr></thead><tbody>${rows}</tbody></table>`
  );
}

export function renderSites(progress: Progress | null): string {
  if (!progress) return "";
  const rows = Object.entries(progress.sites)
    .sort(([a], [b]) => a.localeCompare(b))
    .map(([name, site]) => {
      const pct = Math.round(site.utilization * 100);
      return (
        `<div class="site" data-site="${esc(name)}">` +
        `<span class="site-name">${esc(name)}</span>` +
        `<span class="bar"><span class="fill" style="width:${pct}%"></span></span>` +
        `<span class="pct">${pct}%</span>` +
        `<span class="detail">${site.events} events / ` +
        `${site.processors} processors</span>` +
        `</div>`
      );
    })
    .join("");
  return `<div class="sites">${rows}</div>`;
}

export function renderCounters(progress: Progress | null): string {
  if (!progress) return "";
  return (
    `<dl class="counters">` +
    `<dt>simulated time</dt><dd>${progress.simulated_time.toFixed(0)} s</dd>` +
    `<dt>derivations</dt><dd>${progress.derivations_done}/` +
    `${progress.derivations_total}</dd>` +
    `<dt>retries</dt><dd data-role="retries">${progress.retries}</dd>` +
    `<dt>expired leases</dt><dd>${progress.expired_invocations}</dd>` +
    `<dt>state</dt><dd>${progress.finished ? "finished" : "running"}</dd>` +
    `</dl>`
  );
}

/**
 * Worst-first chi2/ndf rows, exactly the order the API's summary chart
 * uses (descending chi2/ndf, name as tiebreak).
 */
export function chartRows(report: ValidationReport): [string, number][] {
  return [...report.chart];
}

export function renderChiSquaredChart(report: ValidationReport | null): string {
  if (!report) return `<p class="empty">no validation loaded</p>`;
  const top = Math.max(...report.chart.map(([, v]) => v), 1e-12);
  const bars = chartRows(report)
    .map(([name, value]) => {
      const pct = Math.max(1, Math.round((value / top) * 100));
      const alarm = value > report.threshold ? " alarm" : "";
      return (
        `<div class="chi2-row${alarm}" data-hist="${esc(name)}">` +
        `<span class="hist-name">${esc(name)}</span>` +
        `<span class="bar"><span class="fill" style="width:${pct}%"></span></span>` +
        `<span class="value">${value.toFixed(3)}</span>` +
        `</div>`
      );
    })
    .join("");
  const verdict = report.passed ? "PASS" : "FAIL";
  return (
    `<div class="chi2-chart">${bars}` +
    `<div class="verdict verdict-${verdict.toLowerCase()}">${verdict} ` +
    `(threshold chi2/ndf &le; ${report.threshold})</div></div>`
  );
}

export function renderConsole(state: ConsoleState): string {
  return (
    renderBanner(state) +
    `<section><h2>datasets</h2>${renderDatasetTable(state)}</section>` +
    `<section><h2>sites</h2>${renderSites(state.progress)}</section>` +
    `<section><h2>campaign</h2>${renderCounters(state.progress)}</section>` +
    `<section><h2>validation</h2>` +
    `${renderChiSquaredChart(state.validation)}</section>`
  );
}
