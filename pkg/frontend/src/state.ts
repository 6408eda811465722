/** Console data model and the pure update functions that feed it.
 *
 * Everything the panels render lives here; socket callbacks only call
 * applyStreamEvent/applyTelemetry, so there is exactly one path from a
 * wire frame to the screen. Chart history is ring-bounded to CHART_HORIZON_S
 * of stream time, and the detection feed keeps timestamp order even if a
 * frame arrives late.
 */

import { TimedRing } from "./ring.js";

export const CHANNEL_NAMES = ["AF3", "T7", "Pz", "T8", "AF4"] as const;
export const BAND_NAMES = ["Delta", "Theta", "Alpha", "Beta", "Gamma"] as const;
export const MENTAL_LABELS = ["neutral", "push", "pull", "left", "right", "lift", "drop"] as const;

export const CHART_HORIZON_S = 30;
/** A link with no frames for this long is rendered stale. */
export const STALE_AFTER_MS = 2000;
export const FEED_LIMIT = 512;

export interface FeedEntry {
  readonly t: number;
  readonly stream: "com" | "fac";
  readonly label: string;
  readonly power: number;
}

export interface TelemetryRow {
  readonly mode: string;
  readonly x: number;
  readonly y: number;
  readonly z: number;
  readonly yaw: number;
  readonly battery: number;
  readonly t: number;
}

export interface ProfileInfo {
  readonly name: string | null;
  readonly neutralTrained: boolean;
  readonly trainedLabels: string[];
}

export interface TrainingInfo {
  readonly label: string | null;
  readonly state: string; // idle | recording | ready | accepted | rejected
  readonly windows: number;
}

export class ConsoleState {
  readonly eeg = new TimedRing<number[]>(CHART_HORIZON_S);
  readonly power = new TimedRing<number[]>(CHART_HORIZON_S, 64);
  readonly flightPath = new TimedRing<TelemetryRow>(CHART_HORIZON_S, 1024);
  feed: FeedEntry[] = [];
  telemetry: TelemetryRow | null = null;

  profile: ProfileInfo = { name: null, neutralTrained: false, trainedLabels: [] };
  training: TrainingInfo = { label: null, state: "idle", windows: 0 };

  /** Most recent service error text, exactly as the service sent it. */
  lastError: string | null = null;
  lastInjectStart: number | null = null;
  streamEndedAt: number | null = null;

  lastCortexMs: number | null = null;
  lastTelemetryMs: number | null = null;
  cortexConnected = false;
  telemetryConnected = false;
}

export function applyStreamEvent(
  state: ConsoleState,
  stream: string,
  time: number,
  data: unknown[],
): void {
  if (stream === "eeg") {
    if (data.length === CHANNEL_NAMES.length && data.every((v) => typeof v === "number")) {
      state.eeg.push(time, data as number[]);
    }
  } else if (stream === "pow") {
    if (data.length === CHANNEL_NAMES.length * BAND_NAMES.length) {
      state.power.push(time, data as number[]);
    }
  } else if (stream === "com" || stream === "fac") {
    const [label, power] = data;
    if (typeof label === "string" && typeof power === "number") {
      pushFeed(state, { t: time, stream, label, power });
    }
  }
}

function pushFeed(state: ConsoleState, entry: FeedEntry): void {
  const feed = state.feed;
  let i = feed.length;
  while (i > 0 && feed[i - 1].t > entry.t) i -= 1;
  feed.splice(i, 0, entry);
  if (feed.length > FEED_LIMIT) feed.splice(0, feed.length - FEED_LIMIT);
}

export function applyTelemetry(state: ConsoleState, text: string): void {
  let row: any;
  try {
    row = JSON.parse(text);
  } catch {
    return;
  }
  if (row === null || typeof row !== "object" || typeof row.mode !== "string") return;
  const parsed: TelemetryRow = {
    mode: row.mode,
    x: num(row.x),
    y: num(row.y),
    z: num(row.z),
    yaw: num(row.yaw),
    battery: num(row.battery),
    t: num(row.t),
  };
  state.telemetry = parsed;
  state.flightPath.push(parsed.t, parsed);
}

function num(v: unknown): number {
  return typeof v === "number" && Number.isFinite(v) ? v : 0;
}

export interface LinkHealth {
  readonly cortexStale: boolean;
  readonly telemetryStale: boolean;
}

/** Stale = never heard from, socket closed, or silent past the threshold. */
export function linkHealth(state: ConsoleState, nowMs: number): LinkHealth {
  const quiet = (last: number | null, connected: boolean) =>
    !connected || last === null || nowMs - last > STALE_AFTER_MS;
  return {
    cortexStale: quiet(state.lastCortexMs, state.cortexConnected),
    telemetryStale: quiet(state.lastTelemetryMs, state.telemetryConnected),
  };
}
