/**
 * SVG/HTML renderers. Pure string builders so they are testable without a
 * browser; main.ts injects the markup into the page.
 *
 * Node positions come from airport lat/lon projected linearly into the
 * viewport (abstract scatter, no basemap). Delta colors use a diverging
 * scale symmetric around zero so delay increases (negative reduction)
 * stay visible.
 */

import { NetworkView, ScenarioDiff } from "./scenario.js";

const WIDTH = 680;
const HEIGHT = 440;
const MARGIN = 40;

function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;").replace(/"/g, "&quot;");
}

/** Diverging blue-white-red: negative blue, zero white, positive red. */
export function divergingColor(value: number, maxAbs: number): string {
  if (maxAbs <= 0) return "rgb(255,255,255)";
  const t = Math.max(-1, Math.min(1, value / maxAbs));
  const other = Math.round(255 * (1 - Math.abs(t)));
  return t >= 0 ? `rgb(255,${other},${other})` : `rgb(${other},${other},255)`;
}

function project(values: number[], lo: number, hi: number): (v: number) => number {
  const min = Math.min(...values);
  const max = Math.max(...values);
  const span = max - min || 1;
  return (v) => lo + ((v - min) / span) * (hi - lo);
}

export function renderNetworkMap(view: NetworkView, width = WIDTH, height = HEIGHT): string {
  const x = project(view.nodes.map((n) => n.lon), MARGIN, width - MARGIN);
  const y = project(view.nodes.map((n) => n.lat), height - MARGIN, MARGIN); // lat grows upward
  const maxAbs = Math.max(...view.nodes.map((n) => Math.abs(n.value)), 0);
  const circles = view.nodes
    .map((n) => {
      const fill = divergingColor(n.value, maxAbs);
      const cx = x(n.lon).toFixed(1);
      const cy = y(n.lat).toFixed(1);
      return (
        `<g class="node" data-code="${esc(n.code)}" data-value="${n.value}">` +
        `<circle cx="${cx}" cy="${cy}" r="14" fill="${fill}" stroke="#334"/>` +
        `<text x="${cx}" y="${cy}" dy="28" text-anchor="middle">${esc(n.code)}</text>` +
        `<title>${esc(n.code)}: ${n.value.toFixed(2)} min</title>` +
        `</g>`
      );
    })
    .join("");
  const subtitle = view.horizonTime ?? `step ${view.step + 1}`;
  const channel = view.channel === 0 ? "arrival" : "departure";
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${width} ${height}" class="network-map">` +
    `<text x="${MARGIN}" y="20" class="caption">${esc(channel)} delay reduction, ${esc(subtitle)} ` +
    `(window ${esc(view.windowStart)})</text>` +
    circles +
    `</svg>`
  );
}

export function renderDeltaSeries(
  horizonTimes: (string | null)[],
  seriesByAirport: Map<string, number[]>,
  width = WIDTH,
  height = 220,
): string {
  const all = [...seriesByAirport.values()].flat();
  if (all.length === 0) return `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${width} ${height}"/>`;
  const maxAbs = Math.max(...all.map(Math.abs), 1e-9);
  const steps = horizonTimes.length;
  const xAt = (i: number) => MARGIN + (i / Math.max(1, steps - 1)) * (width - 2 * MARGIN);
  const yAt = (v: number) => height / 2 - (v / maxAbs) * (height / 2 - MARGIN);
  const palette = ["#c0392b", "#2980b9", "#27ae60", "#8e44ad", "#d35400", "#16a085"];
  let k = 0;
  const lines = [...seriesByAirport.entries()]
    .map(([code, series]) => {
      const points = series.map((v, i) => `${xAt(i).toFixed(1)},${yAt(v).toFixed(1)}`).join(" ");
      const color = palette[k++ % palette.length];
      return (
        `<polyline class="series" data-code="${esc(code)}" fill="none" stroke="${color}" points="${points}"/>` +
        `<text x="${width - MARGIN + 4}" y="${yAt(series[series.length - 1] ?? 0).toFixed(1)}" fill="${color}">${esc(code)}</text>`
      );
    })
    .join("");
  const axis = `<line x1="${MARGIN}" y1="${height / 2}" x2="${width - MARGIN}" y2="${height / 2}" stroke="#999" stroke-dasharray="4 3"/>`;
  return `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${width} ${height}" class="delta-series">${axis}${lines}</svg>`;
}

export function renderDiffTable(diff: ScenarioDiff): string {
  const warn = diff.windowMismatch
    ? `<p class="warn">windows differ between scenarios; comparing anyway</p>`
    : "";
  const rows = diff.rows
    .map(
      (r) =>
        `<tr data-code="${esc(r.code)}"><td>${esc(r.code)}</td>` +
        `<td>${r.a.toFixed(2)}</td><td>${r.b.toFixed(2)}</td>` +
        `<td class="diff">${r.diff.toFixed(2)}</td></tr>`,
    )
    .join("");
  return (
    warn +
    `<table class="diff-table"><thead><tr><th>airport</th><th>A</th><th>B</th><th>A-B</th></tr></thead>` +
    `<tbody>${rows}</tbody></table>`
  );
}
