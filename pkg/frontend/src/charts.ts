/** Canvas painters for the live panels. Pure draw-from-snapshot functions,
 * no state of their own; the caller clears and repaints per frame.
 */

import { TimedSample } from "./ring.js";
import { BAND_NAMES, CHANNEL_NAMES, CHART_HORIZON_S } from "./state.js";

const TRACE_COLORS = ["#7fd1b9", "#e8a87c", "#85a8e8", "#d98ec0", "#c9d87f"];
const GRID = "#2a3138";
const TEXT = "#8a949e";

function clear(ctx: CanvasRenderingContext2D): void {
  const { width, height } = ctx.canvas;
  ctx.clearRect(0, 0, width, height);
}

/** Five stacked traces sharing one time axis, newest sample at the right
 * edge. Each lane is scaled by the largest magnitude currently visible in
 * that channel so a noisy lane cannot flatten the others. */
export function drawStripChart(
  ctx: CanvasRenderingContext2D,
  samples: TimedSample<number[]>[],
): void {
  clear(ctx);
  const { width, height } = ctx.canvas;
  const lanes = CHANNEL_NAMES.length;
  const laneH = height / lanes;

  ctx.strokeStyle = GRID;
  ctx.lineWidth = 1;
  for (let i = 1; i < lanes; i++) {
    ctx.beginPath();
    ctx.moveTo(0, i * laneH);
    ctx.lineTo(width, i * laneH);
    ctx.stroke();
  }
  ctx.fillStyle = TEXT;
  ctx.font = "11px monospace";
  for (let i = 0; i < lanes; i++) {
    ctx.fillText(CHANNEL_NAMES[i], 4, i * laneH + 12);
  }
  if (samples.length < 2) return;

  const tEnd = samples[samples.length - 1].t;
  const tStart = tEnd - CHART_HORIZON_S;
  const xOf = (t: number) => ((t - tStart) / CHART_HORIZON_S) * width;

  for (let ch = 0; ch < lanes; ch++) {
    let peak = 1e-9;
    for (const s of samples) {
      const a = Math.abs(s.v[ch]);
      if (a > peak) peak = a;
    }
    const mid = ch * laneH + laneH / 2;
    const gain = (laneH / 2 - 2) / peak;
    ctx.strokeStyle = TRACE_COLORS[ch];
    ctx.lineWidth = 1;
    ctx.beginPath();
    let started = false;
    for (const s of samples) {
      const x = xOf(s.t);
      const y = mid - s.v[ch] * gain;
      if (started) {
        ctx.lineTo(x, y);
      } else {
        ctx.moveTo(x, y);
        started = true;
      }
    }
    ctx.stroke();
  }
}

/** 5x5 band-power bars, one group per channel, log-compressed height. */
export function drawPowerBars(ctx: CanvasRenderingContext2D, powers: number[] | null): void {
  clear(ctx);
  if (powers === null) return;
  const { width, height } = ctx.canvas;
  const groups = CHANNEL_NAMES.length;
  const perGroup = BAND_NAMES.length;
  const groupW = width / groups;
  const barW = (groupW - 10) / perGroup;
  const floor = 1e-12;

  let top = floor;
  for (const p of powers) if (p > top) top = p;
  const logSpan = Math.log10(top / floor);

  ctx.font = "10px monospace";
  for (let g = 0; g < groups; g++) {
    for (let b = 0; b < perGroup; b++) {
      const p = powers[g * perGroup + b];
      const frac = logSpan > 0 ? Math.log10(Math.max(p, floor) / floor) / logSpan : 0;
      const h = Math.max(1, frac * (height - 16));
      ctx.fillStyle = TRACE_COLORS[b];
      ctx.fillRect(g * groupW + 5 + b * barW, height - 14 - h, barW - 1, h);
    }
    ctx.fillStyle = TEXT;
    ctx.fillText(CHANNEL_NAMES[g], g * groupW + 5, height - 3);
  }
}

/** Top-down flight trace plus an altitude strip on the right edge. */
export function drawFlight(
  ctx: CanvasRenderingContext2D,
  path: TimedSample<{ x: number; y: number; z: number }>[],
): void {
  clear(ctx);
  const { width, height } = ctx.canvas;
  const mapW = width - 26;

  ctx.strokeStyle = GRID;
  ctx.strokeRect(0.5, 0.5, mapW - 1, height - 1);
  ctx.strokeRect(mapW + 4.5, 0.5, 20, height - 1);
  if (path.length === 0) return;

  let span = 1;
  for (const p of path) {
    span = Math.max(span, Math.abs(p.v.x), Math.abs(p.v.y));
  }
  span *= 1.15;
  const px = (x: number) => mapW / 2 + (x / span) * (mapW / 2);
  const py = (y: number) => height / 2 - (y / span) * (height / 2);

  ctx.strokeStyle = TRACE_COLORS[2];
  ctx.beginPath();
  path.forEach((p, i) => {
    if (i === 0) ctx.moveTo(px(p.v.x), py(p.v.y));
    else ctx.lineTo(px(p.v.x), py(p.v.y));
  });
  ctx.stroke();

  const last = path[path.length - 1].v;
  ctx.fillStyle = "#e8e2d6";
  ctx.beginPath();
  ctx.arc(px(last.x), py(last.y), 3, 0, Math.PI * 2);
  ctx.fill();

  // altitude strip, 3 m full scale unless the flight went higher
  let zTop = 3;
  for (const p of path) if (p.v.z > zTop) zTop = p.v.z;
  const zh = Math.max(1, (last.z / zTop) * (height - 2));
  ctx.fillStyle = TRACE_COLORS[0];
  ctx.fillRect(mapW + 5, height - 1 - zh, 19, zh);
}
