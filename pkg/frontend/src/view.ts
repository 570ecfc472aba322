/**
 * DOM rendering. Pure functions from the model to innerHTML/canvas;
 * all interaction state stays in the model so a render is always a
 * full redraw of what changed.
 */

import type { ChatEntry, ConsoleModel, SeriesPoint, TimelineRow } from "./model.js";
import { PHASES } from "./types.js";

export interface ViewRefs {
  chat: HTMLElement;
  timeline: HTMLElement;
  chart: HTMLCanvasElement;
  workspace: HTMLElement;
  banner: HTMLElement;
  connection: HTMLElement;
}

export function collectRefs(doc: Document): ViewRefs {
  const get = (id: string) => {
    const el = doc.getElementById(id);
    if (!el) throw new Error(`missing element #${id}`);
    return el;
  };
  return {
    chat: get("chat"),
    timeline: get("timeline"),
    chart: get("chart") as HTMLCanvasElement,
    workspace: get("workspace"),
    banner: get("banner"),
    connection: get("connection"),
  };
}

function esc(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

function chatBubble(entry: ChatEntry, pendingBadge: boolean): string {
  if (entry.direction === "out") {
    return `<div class="bubble out"><div class="text">${esc(entry.text)}</div><span class="marker">tick ${entry.tick}</span></div>`;
  }
  const marker =
    entry.status === "staged"
      ? '<span class="marker staged">staged&hellip;</span>'
      : `<span class="marker consumed">consumed @ tick ${entry.tick}</span>`;
  const badge = pendingBadge ? '<span class="badge-pending">response pending</span>' : "";
  return `<div class="bubble in"><div class="text">${esc(entry.text)}</div>${marker}${badge}</div>`;
}

export function renderChat(el: HTMLElement, model: ConsoleModel): void {
  const lastIn = [...model.chat].reverse().find((e) => e.direction === "in");
  el.innerHTML =
    model.chat.map((e) => chatBubble(e, model.pendingAfterLast && e === lastIn)).join("") ||
    '<div class="empty">no messages yet</div>';
  el.scrollTop = el.scrollHeight;
}

function timelineRow(row: TimelineRow): string {
  const chips = PHASES.map((phase) => {
    const done = row.phases.includes(phase);
    return `<span class="chip${done ? " done" : ""}">${phase}</span>`;
  }).join("");
  let detail = "";
  if (row.record) {
    const a = row.record.arbitration;
    detail += `<div class="verdict">winner ${a.winner_index} &middot; ${esc(a.transition)} &middot; ${esc(a.rationale)}</div>`;
    detail += `<div class="thought">${esc(row.record.winning_thought)}</div>`;
    if (row.record.dispatched_output) {
      detail += `<div class="output-bubble">${esc(row.record.dispatched_output)}</div>`;
    }
    if (row.record.compressed) {
      const c = row.compression;
      const note = c ? `: ${c.tokens_before} &rarr; ${c.tokens_after} tokens` : "";
      detail += `<div class="compressed">working memory compressed${note}</div>`;
    }
  } else if (row.error) {
    detail += `<div class="abort">aborted in ${esc(row.error.phase)}: ${esc(row.error.error)} &middot; ${esc(row.error.message)}</div>`;
  }
  return `<div class="tick-row${row.committed ? " committed" : ""}" data-tick="${row.tick}"><div class="tick-head">tick ${row.tick}${chips}</div>${detail}</div>`;
}

export function renderTimeline(el: HTMLElement, model: ConsoleModel): void {
  el.innerHTML =
    model.timeline.map(timelineRow).join("") || '<div class="empty">no ticks yet</div>';
  el.scrollTop = el.scrollHeight;
}

/** Dual-axis line chart: entropy on the left scale, temperature on the right. */
export function renderChart(canvas: HTMLCanvasElement, series: SeriesPoint[]): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const w = canvas.width;
  const h = canvas.height;
  const pad = 28;
  ctx.clearRect(0, 0, w, h);
  ctx.font = "10px monospace";
  if (series.length === 0) {
    ctx.fillStyle = "#666";
    ctx.fillText("no committed ticks yet", pad, h / 2);
    return;
  }
  const hMax = Math.max(0.1, ...series.map((p) => p.entropy));
  const tMin = Math.min(...series.map((p) => p.temperature));
  const tMax = Math.max(tMin + 0.1, ...series.map((p) => p.temperature));
  const x = (i: number) => pad + (i / Math.max(1, series.length - 1)) * (w - 2 * pad);
  const yH = (v: number) => h - pad - (v / hMax) * (h - 2 * pad);
  const yT = (v: number) => h - pad - ((v - tMin) / (tMax - tMin)) * (h - 2 * pad);
  const line = (value: (p: SeriesPoint) => number, scale: (v: number) => number, color: string) => {
    ctx.strokeStyle = color;
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    series.forEach((p, i) => {
      const px = x(i);
      const py = scale(value(p));
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    ctx.stroke();
    ctx.fillStyle = color;
    series.forEach((p, i) => {
      ctx.beginPath();
      ctx.arc(x(i), scale(value(p)), 2.5, 0, 2 * Math.PI);
      ctx.fill();
    });
  };
  line((p) => p.entropy, yH, "#4dabf7");
  line((p) => p.temperature, yT, "#ffa94d");
  ctx.fillStyle = "#4dabf7";
  ctx.fillText(`entropy 0..${hMax.toFixed(2)}`, pad, 12);
  ctx.fillStyle = "#ffa94d";
  ctx.fillText(`temperature ${tMin.toFixed(2)}..${tMax.toFixed(2)}`, w / 2, 12);
  ctx.fillStyle = "#666";
  const first = series[0].tick;
  const last = series[series.length - 1].tick;
  ctx.fillText(`tick ${first}`, pad, h - 8);
  ctx.fillText(`tick ${last}`, w - pad - 40, h - 8);
}

export function renderWorkspace(el: HTMLElement, model: ConsoleModel): void {
  const ws = model.workspace;
  if (!ws) {
    el.innerHTML = '<div class="empty">state not loaded</div>';
    return;
  }
  el.innerHTML =
    `<div class="stats">` +
    `<span>pending: ${ws.pending}</span>` +
    `<span>archive: ${ws.ltm_size}</span>` +
    `<span>clusters: ${ws.cluster_count}</span>` +
    `</div><pre>${esc(ws.stm_rendered)}</pre>`;
}

export function renderAll(model: ConsoleModel, refs: ViewRefs): void {
  renderChat(refs.chat, model);
  renderTimeline(refs.timeline, model);
  renderChart(refs.chart, model.series);
  renderWorkspace(refs.workspace, model);
  refs.banner.textContent = model.banner ?? "";
  refs.banner.style.display = model.banner ? "block" : "none";
  refs.connection.textContent = model.connection;
  refs.connection.className = `conn ${model.connection}`;
}
