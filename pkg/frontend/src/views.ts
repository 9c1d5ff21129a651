/** Pure render functions: API records in, HTML strings out. No fetches,
 * no timers, no document access, so they run under node:test as-is. */

import {
  PIPELINE_STEPS,
  type HostRecord,
  type RequestRecord,
  type ScoredHost,
  type SimulateResult,
  type SubStatus,
  type VmImage,
} from "./model.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function formatCountdown(totalSeconds: number): string {
  const seconds = Math.max(0, Math.floor(totalSeconds));
  const h = Math.floor(seconds / 3600);
  const m = Math.floor((seconds % 3600) / 60);
  const s = seconds % 60;
  return `${h}h ${String(m).padStart(2, "0")}m ${String(s).padStart(2, "0")}s`;
}

export function formatAge(lastSeen: number, now: number): string {
  const age = Math.max(0, Math.round(now - lastSeen));
  return age < 120 ? `${age}s ago` : `${Math.round(age / 60)}m ago`;
}

const STEP_ICON: Record<SubStatus, string> = {
  PASSED: "✓",
  PENDING: "…",
  FAILED: "✗",
};

export function renderChecklist(record: RequestRecord): string {
  const items = PIPELINE_STEPS.map(({ key, label }) => {
    const state = record[key] as SubStatus;
    return (
      `<li class="step step-${state.toLowerCase()}" data-step="${key}" data-state="${state}">` +
      `<span class="icon">${STEP_ICON[state]}</span> ${label}</li>`
    );
  });
  return `<ol class="checklist">${items.join("")}</ol>`;
}

export function doneStepCount(record: RequestRecord): number {
  return PIPELINE_STEPS.filter(({ key }) => record[key] === "PASSED").length;
}

function statusChip(status: string): string {
  return `<span class="chip chip-${status.toLowerCase()}">${status}</span>`;
}

export function renderConnectionPanel(record: RequestRecord): string {
  // address and login are revealed only while the instance is running
  const running = record.status === "LIVE" || record.status === "REMINDER1" || record.status === "REMINDER2";
  if (!running || !record.credentials) {
    return "";
  }
  return (
    `<div class="connect">` +
    `<div class="ip">Address: <code>${escapeHtml(record.ip_address)}</code></div>` +
    `<div class="login">Login: <code>${escapeHtml(record.credentials.username)}</code> / ` +
    `<code>${escapeHtml(record.credentials.password)}</code></div>` +
    `<div class="countdown">Lease remaining: <b data-countdown="${record.time_remaining_seconds}">` +
    `${formatCountdown(record.time_remaining_seconds)}</b></div>` +
    `</div>`
  );
}

export function renderReminderBanner(record: RequestRecord): string {
  if (record.status === "REMINDER1") {
    return `<div class="banner banner-warn">Lease is three-quarters used; save your work.</div>`;
  }
  if (record.status === "REMINDER2") {
    return `<div class="banner banner-urgent">Lease nearly over; the instance stops soon.</div>`;
  }
  return "";
}

export function renderStatusPage(record: RequestRecord): string {
  const failedDetail =
    record.status === "INCOMPLETE" || record.status === "UNASSIGNED"
      ? `<div class="reason">${escapeHtml(record.status_reason)}</div>`
      : "";
  const stoppable =
    record.status === "LIVE" || record.status === "REMINDER1" || record.status === "REMINDER2";
  const stopButton = stoppable
    ? `<button class="stop" data-job="${record.job_id}">Stop instance</button>`
    : "";
  return (
    `<section class="request" data-status="${record.status}">` +
    `<h2>Request #${record.job_id} ${statusChip(record.status)}</h2>` +
    renderReminderBanner(record) +
    renderChecklist(record) +
    renderConnectionPanel(record) +
    failedDetail +
    stopButton +
    `</section>`
  );
}

export function renderImageOptions(images: VmImage[]): string {
  return images
    .map((im) => `<option value="${im.vm_id}">${escapeHtml(im.display_name)} (${im.os_family})</option>`)
    .join("");
}

function memoryBar(host: HostRecord): string {
  const used = host.total_mem - host.avail_mem;
  const percent = host.total_mem > 0 ? Math.round((100 * used) / host.total_mem) : 0;
  return (
    `<div class="membar" title="${host.avail_mem} of ${host.total_mem} MB free">` +
    `<div class="membar-used" style="width:${percent}%"></div></div>`
  );
}

export function renderHostsTable(hosts: HostRecord[], now: number): string {
  if (hosts.length === 0) {
    return `<p class="empty">No hosts have registered yet.</p>`;
  }
  const rows = hosts.map(
    (h) =>
      `<tr data-node="${h.node_id}">` +
      `<td>${h.node_id}</td>` +
      `<td>${escapeHtml(h.hostname)}</td>` +
      `<td>${h.cpu_model}</td>` +
      `<td>${statusChip(h.machine_status)}</td>` +
      `<td>${memoryBar(h)}</td>` +
      `<td>${h.runningvms} / ${h.max_instances}</td>` +
      `<td>${formatAge(h.last_seen, now)}</td>` +
      `</tr>`,
  );
  return (
    `<table class="fleet"><thead><tr>` +
    `<th>node</th><th>host</th><th>cpu</th><th>status</th>` +
    `<th>memory</th><th>instances</th><th>last seen</th>` +
    `</tr></thead><tbody>${rows.join("")}</tbody></table>`
  );
}

function scoreCell(host: ScoredHost): string {
  if (!host.eligible) {
    return `<td class="score score-na">not eligible</td>`;
  }
  return `<td class="score">${host.set} ${host.score?.toFixed(4) ?? ""}</td>`;
}

export function renderDryRunPanel(result: SimulateResult): string {
  const { decision } = result;
  const headline = decision.outcome === "QUEUE"
    ? `<p class="decision decision-queue">Would queue: no eligible host.</p>`
    : `<p class="decision decision-chosen" data-node="${decision.node_id}">` +
      `Would choose <b>node ${decision.node_id}</b> via ${decision.set_label} ` +
      `(score ${decision.score?.toFixed(4)})</p>`;
  const rows = result.hosts.map(
    (h) =>
      `<tr class="${h.node_id === decision.node_id ? "chosen" : ""}" data-node="${h.node_id}">` +
      `<td>${h.node_id}</td>` +
      `<td>${h.runningvms}</td>` +
      `<td>${h.memory_factor?.toFixed(4) ?? "-"}</td>` +
      `<td>${h.vm_distribution_factor?.toFixed(4) ?? "-"}</td>` +
      scoreCell(h) +
      `</tr>`,
  );
  return (
    headline +
    `<table class="dryrun"><thead><tr>` +
    `<th>node</th><th>running</th><th>memory factor</th><th>instance share</th><th>score</th>` +
    `</tr></thead><tbody>${rows.join("")}</tbody></table>`
  );
}
