/**
 * HTML/SVG renderers: pure string builders over the view model, so they are
 * testable without a DOM. main.ts assigns the results to container elements.
 */

import {
  BODY_REGIONS,
  FORCE_LIMIT_N,
  SAFE_FORCE_MAX_N,
  SAFE_FORCE_MIN_N,
} from "./types.js";
import type { TimelineEntry, ViewModel } from "./view-model.js";

export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

export const REGION_LABELS: Record<string, string> = {
  neck: "Neck (thyroid)",
  neck_carotid: "Neck (carotid)",
  chest_cardiac: "Chest (cardiac)",
  abdomen_liver: "Abdomen (liver)",
  abdomen_gallbladder: "Abdomen (gallbladder)",
  abdomen_kidney: "Abdomen (kidney)",
};

// Hotspot centers on the stylized body schematic (viewBox 0 0 120 220).
const REGION_SPOTS: Record<string, { x: number; y: number }> = {
  neck: { x: 60, y: 44 },
  neck_carotid: { x: 74, y: 40 },
  chest_cardiac: { x: 52, y: 78 },
  abdomen_liver: { x: 48, y: 112 },
  abdomen_gallbladder: { x: 58, y: 122 },
  abdomen_kidney: { x: 74, y: 118 },
};

function observationHtml(entry: TimelineEntry): string {
  if (!entry.observation) {
    return "";
  }
  const badge = entry.observation.ok
    ? '<span class="badge ok">ok</span>'
    : '<span class="badge fail">fail</span>';
  return `<div class="observation">${badge} ${escapeHtml(entry.observation.text)}</div>`;
}

export function renderTimelineEntry(entry: TimelineEntry): string {
  const parts: string[] = [`<li class="turn ${entry.kind}" data-index="${entry.index}">`];
  parts.push(`<div class="turn-head">turn ${entry.index}</div>`);
  if (entry.kind === "parse_error") {
    parts.push(
      `<div class="parse-error">model output not parseable: ${escapeHtml(entry.parseDetail ?? "")}</div>`,
    );
  } else {
    parts.push(`<div class="thought">${escapeHtml(entry.thought)}</div>`);
  }
  if (entry.kind === "action" && entry.actionName) {
    const args = escapeHtml(JSON.stringify(entry.actionArgs ?? {}));
    parts.push(`<span class="action-chip">${escapeHtml(entry.actionName)} ${args}</span>`);
  }
  if (entry.kind === "final") {
    parts.push(`<div class="final">Final: ${escapeHtml(entry.finalSummary ?? "")}</div>`);
  }
  parts.push(observationHtml(entry));
  parts.push("</li>");
  return parts.join("");
}

export function renderTimeline(model: ViewModel): string {
  return `<ol class="timeline">${model.timeline.map(renderTimelineEntry).join("")}</ol>`;
}

export function renderBodyMap(model: ViewModel): string {
  const robot = model.robot;
  const spots = BODY_REGIONS.map((region) => {
    const spot = REGION_SPOTS[region];
    const gel = robot?.gel_applied.includes(region) ?? false;
    const active = robot?.scanning?.region === region;
    const classes = ["hotspot", gel ? "gel" : "", active ? "scanning" : ""].filter(Boolean).join(" ");
    return `<circle class="${classes}" data-region="${region}" cx="${spot.x}" cy="${spot.y}" r="7"><title>${REGION_LABELS[region]}</title></circle>`;
  });
  let probeMarker = "";
  if (robot?.probe_at) {
    const spot = REGION_SPOTS[robot.probe_at];
    probeMarker = `<rect class="probe-marker" data-probe="${robot.probe ?? "none"}" x="${spot.x - 5}" y="${spot.y - 14}" width="10" height="8" />`;
  }
  return (
    `<svg class="body-map" viewBox="0 0 120 220" role="img" aria-label="body regions">` +
    `<circle class="body-outline" cx="60" cy="22" r="14"/>` + // head
    `<rect class="body-outline" x="38" y="38" width="44" height="100" rx="16"/>` + // torso
    `<rect class="body-outline" x="44" y="140" width="12" height="56" rx="6"/>` +
    `<rect class="body-outline" x="64" y="140" width="12" height="56" rx="6"/>` +
    spots.join("") +
    probeMarker +
    `</svg>`
  );
}

export function renderCoverageBars(model: ViewModel): string {
  const coverage = model.robot?.coverage ?? {};
  const rows = BODY_REGIONS.map((region) => {
    const value = coverage[region] ?? 0;
    const percent = Math.round(value * 100);
    return (
      `<div class="coverage-row" data-region="${region}">` +
      `<span class="coverage-label">${REGION_LABELS[region]}</span>` +
      `<div class="coverage-track"><div class="coverage-fill" style="width:${percent}%"></div></div>` +
      `<span class="coverage-value">${value.toFixed(2)}</span>` +
      `</div>`
    );
  });
  return `<div class="coverage">${rows.join("")}</div>`;
}

export function renderForceGauge(model: ViewModel): string {
  const force = model.robot?.contact_force_n ?? 0;
  const position = Math.min(100, (force / FORCE_LIMIT_N) * 100);
  const bandLeft = (SAFE_FORCE_MIN_N / FORCE_LIMIT_N) * 100;
  const bandWidth = ((SAFE_FORCE_MAX_N - SAFE_FORCE_MIN_N) / FORCE_LIMIT_N) * 100;
  const inBand = force >= SAFE_FORCE_MIN_N && force <= SAFE_FORCE_MAX_N;
  return (
    `<div class="force-gauge" data-in-band="${inBand}">` +
    `<div class="force-track">` +
    `<div class="force-safe-band" style="left:${bandLeft}%;width:${bandWidth}%"></div>` +
    `<div class="force-needle" style="left:${position}%"></div>` +
    `</div>` +
    `<span class="force-value">${force.toFixed(1)} N</span>` +
    `</div>`
  );
}

export function renderRobotPanel(model: ViewModel): string {
  const robot = model.robot;
  const probe = robot?.probe ?? "none";
  const scanning = robot?.scanning ? `${robot.scanning.region} / ${robot.scanning.pattern}` : "no";
  const images = robot?.images.length ?? 0;
  return (
    `<div class="robot-facts">` +
    `<span>probe: <strong>${escapeHtml(probe)}</strong></span>` +
    `<span>scanning: <strong>${escapeHtml(scanning)}</strong></span>` +
    `<span>images: <strong>${images}</strong></span>` +
    `</div>` +
    renderBodyMap(model) +
    renderForceGauge(model) +
    renderCoverageBars(model)
  );
}

export type ConnectionState = "connecting" | "live" | "closed" | "reconnecting" | "error";

export function renderBanner(model: ViewModel, connection: ConnectionState, detail = ""): string {
  const summary = model.summary;
  const chunks: string[] = [];
  chunks.push(`<span class="conn conn-${connection}">${connection}</span>`);
  chunks.push(`<span class="session-state">session: ${escapeHtml(model.sessionState)}</span>`);
  if (summary) {
    const outcome = summary.overall_ok ? "success" : summary.status;
    chunks.push(`<span class="outcome outcome-${summary.overall_ok ? "ok" : "bad"}">${escapeHtml(outcome)}</span>`);
    if (summary.abort_reason) {
      chunks.push(`<span class="abort">${escapeHtml(summary.abort_reason)}</span>`);
    }
  }
  if (detail) {
    chunks.push(`<span class="banner-detail">${escapeHtml(detail)}</span>`);
  }
  return chunks.join(" ");
}
