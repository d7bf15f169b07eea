/** Minimal SVG time-series chart for metric samples, plus freshness text. */

import { MetricSample } from "./api.js";

export interface ChartScale {
  points: { x: number; y: number; value: number | null; at: number }[];
  yMin: number;
  yMax: number;
}

const W = 520;
const H = 160;
const PAD = 28;

export function scaleSamples(samples: MetricSample[]): ChartScale {
  const numeric = samples.filter((s) => s.value !== null);
  if (numeric.length === 0) {
    return { points: [], yMin: 0, yMax: 1 };
  }
  const values = numeric.map((s) => s.value as number);
  const times = numeric.map((s) => s.at);
  let yMin = Math.min(...values);
  let yMax = Math.max(...values);
  if (yMin === yMax) {
    yMax = yMin + 1;
    yMin = Math.min(0, yMin);
  }
  const tMin = Math.min(...times);
  const tMax = Math.max(...times);
  const span = tMax - tMin || 1;
  const points = numeric.map((s) => ({
    x: PAD + ((s.at - tMin) / span) * (W - 2 * PAD),
    y: H - PAD - (((s.value as number) - yMin) / (yMax - yMin)) * (H - 2 * PAD),
    value: s.value,
    at: s.at,
  }));
  return { points, yMin, yMax };
}

export function sampleAge(samples: MetricSample[], now: number): number | null {
  if (samples.length === 0) return null;
  const last = samples[samples.length - 1];
  return last === undefined ? null : Math.max(0, now - last.at);
}

export function formatAge(seconds: number | null): string {
  if (seconds === null) return "no samples yet";
  if (seconds < 90) return `${Math.round(seconds)}s ago`;
  if (seconds < 5400) return `${Math.round(seconds / 60)}m ago`;
  return `${Math.round(seconds / 3600)}h ago`;
}

export function renderChart(samples: MetricSample[], now: number): string {
  const { points, yMin, yMax } = scaleSamples(samples);
  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${W} ${H}" width="${W}" height="${H}" class="chart">`,
  );
  parts.push(`<rect x="0" y="0" width="${W}" height="${H}" fill="#fafbfc"/>`);
  if (points.length === 0) {
    parts.push(
      `<text x="${W / 2}" y="${H / 2}" text-anchor="middle" fill="#999" font-size="13">no samples</text>`,
    );
  } else {
    const path = points.map((p, i) => `${i === 0 ? "M" : "L"}${p.x.toFixed(1)},${p.y.toFixed(1)}`).join(" ");
    parts.push(`<path d="${path}" fill="none" stroke="#0969da" stroke-width="2"/>`);
    for (const p of points) {
      parts.push(`<circle cx="${p.x.toFixed(1)}" cy="${p.y.toFixed(1)}" r="3" fill="#0969da"/>`);
    }
    parts.push(`<text x="4" y="${H - PAD}" font-size="10" fill="#666">${yMin}</text>`);
    parts.push(`<text x="4" y="${PAD}" font-size="10" fill="#666">${yMax}</text>`);
  }
  parts.push(
    `<text x="${W - 6}" y="${H - 6}" text-anchor="end" font-size="10" fill="#888">` +
      `last sample: ${formatAge(sampleAge(samples, now))}</text>`,
  );
  parts.push("</svg>");
  return parts.join("");
}
