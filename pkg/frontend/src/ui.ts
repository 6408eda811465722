/** DOM construction and repaint for the console panels.
 *
 * buildConsole() creates the whole layout under one root and wires the
 * controls to an Actions object; render() projects a ConsoleState onto
 * it. No socket code here, and nothing below this layer mutates state,
 * so a render is always a pure function of the state snapshot.
 */

import { drawFlight, drawPowerBars, drawStripChart } from "./charts.js";
import { ConsoleState, FeedEntry, linkHealth, MENTAL_LABELS } from "./state.js";
import { WINDOWS_PER_TAKE } from "./session.js";

export interface Actions {
  profileSelect(name: string, how: "create" | "load"): void;
  profileSave(): void;
  trainStart(label: string): void;
  trainAccept(): void;
  trainReject(): void;
  inject(kind: "mental" | "facial", label: string, lengthS: number): void;
}

export interface ConsoleRefs {
  cortexLink: HTMLElement;
  telemetryLink: HTMLElement;
  errorBanner: HTMLElement;
  eegCanvas: HTMLCanvasElement;
  powCanvas: HTMLCanvasElement;
  flightCanvas: HTMLCanvasElement;
  feedList: HTMLElement;
  droneMode: HTMLElement;
  dronePose: HTMLElement;
  droneBattery: HTMLElement;
  badges: Map<string, HTMLElement>;
  trainingLabel: HTMLSelectElement;
  trainingStatus: HTMLElement;
  progressFill: HTMLElement;
  profileName: HTMLInputElement;
  profileTitle: HTMLElement;
  injectKind: HTMLSelectElement;
  injectLabel: HTMLInputElement;
  injectLength: HTMLInputElement;
  injectAck: HTMLElement;
  streamEnd: HTMLElement;
}

const FEED_ROWS_SHOWN = 40;

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  cls?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function buildConsole(root: HTMLElement, actions: Actions): ConsoleRefs {
  const doc = root.ownerDocument;
  root.textContent = "";

  const header = el(doc, "header");
  header.append(el(doc, "h1", "", "minddrone console"));
  const links = el(doc, "div", "links");
  const cortexLink = el(doc, "span", "link stale", "headset");
  cortexLink.id = "link-cortex";
  const telemetryLink = el(doc, "span", "link stale", "telemetry");
  telemetryLink.id = "link-telemetry";
  links.append(cortexLink, telemetryLink);
  header.append(links);
  const errorBanner = el(doc, "div", "error-banner hidden");
  errorBanner.id = "error-banner";
  const streamEnd = el(doc, "div", "stream-end hidden");
  root.append(header, errorBanner, streamEnd);

  const grid = el(doc, "main", "grid");
  root.append(grid);

  const panel = (title: string, id: string) => {
    const sec = el(doc, "section", "panel");
    sec.id = id;
    sec.append(el(doc, "h2", "", title));
    grid.append(sec);
    return sec;
  };

  const eegPanel = panel("EEG", "panel-eeg");
  const eegCanvas = el(doc, "canvas");
  eegCanvas.width = 560;
  eegCanvas.height = 300;
  eegPanel.append(eegCanvas);

  const powPanel = panel("Band power", "panel-pow");
  const powCanvas = el(doc, "canvas");
  powCanvas.width = 560;
  powCanvas.height = 140;
  powPanel.append(powCanvas);

  const feedPanel = panel("Detections", "panel-feed");
  const feedList = el(doc, "ul", "feed");
  feedList.id = "feed";
  feedPanel.append(feedList);

  const dronePanel = panel("Drone", "panel-drone");
  const droneMode = el(doc, "div", "drone-mode", "no telemetry");
  droneMode.id = "drone-mode";
  const dronePose = el(doc, "div", "drone-pose", "");
  dronePose.id = "drone-pose";
  const droneBattery = el(doc, "div", "drone-battery", "");
  const flightCanvas = el(doc, "canvas");
  flightCanvas.width = 260;
  flightCanvas.height = 180;
  dronePanel.append(droneMode, dronePose, droneBattery, flightCanvas);

  const trainPanel = panel("Training", "panel-training");
  const profileRow = el(doc, "div", "row");
  const profileName = el(doc, "input");
  profileName.id = "profile-name";
  profileName.placeholder = "profile name";
  const createBtn = el(doc, "button", "", "create");
  createBtn.id = "profile-create";
  createBtn.addEventListener("click", () => actions.profileSelect(profileName.value, "create"));
  const loadBtn = el(doc, "button", "", "load");
  loadBtn.id = "profile-load";
  loadBtn.addEventListener("click", () => actions.profileSelect(profileName.value, "load"));
  const saveBtn = el(doc, "button", "", "save");
  saveBtn.id = "profile-save";
  saveBtn.addEventListener("click", () => actions.profileSave());
  profileRow.append(profileName, createBtn, loadBtn, saveBtn);
  const profileTitle = el(doc, "div", "profile-title", "no profile");
  profileTitle.id = "profile-title";

  const badgeRow = el(doc, "div", "badges");
  const badges = new Map<string, HTMLElement>();
  for (const label of MENTAL_LABELS) {
    const b = el(doc, "span", "badge untrained", label);
    b.id = `badge-${label}`;
    badges.set(label, b);
    badgeRow.append(b);
  }

  const trainRow = el(doc, "div", "row");
  const trainingLabel = el(doc, "select");
  trainingLabel.id = "training-label";
  for (const label of MENTAL_LABELS) {
    const opt = el(doc, "option", "", label);
    opt.value = label;
    trainingLabel.append(opt);
  }
  const startBtn = el(doc, "button", "", "start");
  startBtn.id = "training-start";
  startBtn.addEventListener("click", () => actions.trainStart(trainingLabel.value));
  const acceptBtn = el(doc, "button", "", "accept");
  acceptBtn.id = "training-accept";
  acceptBtn.addEventListener("click", () => actions.trainAccept());
  const rejectBtn = el(doc, "button", "", "reject");
  rejectBtn.id = "training-reject";
  rejectBtn.addEventListener("click", () => actions.trainReject());
  trainRow.append(trainingLabel, startBtn, acceptBtn, rejectBtn);

  const trainingStatus = el(doc, "div", "training-status", "idle");
  trainingStatus.id = "training-status";
  const progress = el(doc, "div", "progress");
  const progressFill = el(doc, "div", "progress-fill");
  progressFill.id = "progress-fill";
  progress.append(progressFill);
  trainPanel.append(profileRow, profileTitle, badgeRow, trainRow, trainingStatus, progress);

  const injectPanel = panel("Inject episode", "panel-inject");
  const injectRow = el(doc, "div", "row");
  const injectKind = el(doc, "select");
  injectKind.id = "inject-kind";
  for (const kind of ["mental", "facial"]) {
    const opt = el(doc, "option", "", kind);
    opt.value = kind;
    injectKind.append(opt);
  }
  const injectLabel = el(doc, "input");
  injectLabel.id = "inject-label";
  injectLabel.value = "push";
  const injectLength = el(doc, "input");
  injectLength.id = "inject-length";
  injectLength.value = "4";
  const injectBtn = el(doc, "button", "", "inject");
  injectBtn.id = "inject-send";
  injectBtn.addEventListener("click", () =>
    actions.inject(
      injectKind.value === "facial" ? "facial" : "mental",
      injectLabel.value,
      Number(injectLength.value) || 4,
    ),
  );
  const injectAck = el(doc, "div", "inject-ack", "");
  injectAck.id = "inject-ack";
  injectRow.append(injectKind, injectLabel, injectLength, injectBtn);
  injectPanel.append(injectRow, injectAck);

  return {
    cortexLink,
    telemetryLink,
    errorBanner,
    eegCanvas,
    powCanvas,
    flightCanvas,
    feedList,
    droneMode,
    dronePose,
    droneBattery,
    badges,
    trainingLabel,
    trainingStatus,
    progressFill,
    profileName,
    profileTitle,
    injectKind,
    injectLabel,
    injectLength,
    injectAck,
    streamEnd,
  };
}

function feedRowText(entry: FeedEntry): string {
  return `${entry.stream}: ${entry.label}  ${entry.power.toFixed(2)}  @ ${entry.t.toFixed(1)}s`;
}

export function render(refs: ConsoleRefs, state: ConsoleState, nowMs: number): void {
  const health = linkHealth(state, nowMs);
  refs.cortexLink.classList.toggle("stale", health.cortexStale);
  refs.telemetryLink.classList.toggle("stale", health.telemetryStale);

  refs.errorBanner.classList.toggle("hidden", state.lastError === null);
  refs.errorBanner.textContent = state.lastError ?? "";

  refs.streamEnd.classList.toggle("hidden", state.streamEndedAt === null);
  if (state.streamEndedAt !== null) {
    refs.streamEnd.textContent = `stream ended at ${state.streamEndedAt.toFixed(1)}s`;
  }

  // feed: ascending stream time, newest row at the bottom
  const doc = refs.feedList.ownerDocument;
  const rows = state.feed.slice(-FEED_ROWS_SHOWN);
  refs.feedList.textContent = "";
  for (const entry of rows) {
    const li = doc.createElement("li");
    li.className = `feed-row feed-${entry.stream}`;
    li.dataset.t = String(entry.t);
    li.dataset.label = entry.label;
    li.textContent = feedRowText(entry);
    refs.feedList.append(li);
  }

  const row = state.telemetry;
  if (row !== null) {
    refs.droneMode.textContent = row.mode;
    refs.dronePose.textContent =
      `x ${row.x.toFixed(2)}  y ${row.y.toFixed(2)}  z ${row.z.toFixed(2)}  yaw ${row.yaw.toFixed(0)}`;
    refs.droneBattery.textContent = `battery ${row.battery.toFixed(0)}%  t ${row.t.toFixed(1)}s`;
  }

  refs.profileTitle.textContent = state.profile.name ?? "no profile";
  for (const [label, badge] of refs.badges) {
    const trained =
      label === "neutral"
        ? state.profile.neutralTrained
        : state.profile.trainedLabels.includes(label);
    badge.classList.toggle("trained", trained);
    badge.classList.toggle("untrained", !trained);
  }

  const tr = state.training;
  if (tr.state === "idle" || tr.label === null) {
    refs.trainingStatus.textContent = "idle";
  } else {
    refs.trainingStatus.textContent = `${tr.label}: ${tr.state} (${tr.windows}/${WINDOWS_PER_TAKE})`;
  }
  const frac = Math.min(tr.windows / WINDOWS_PER_TAKE, 1);
  refs.progressFill.style.width = `${Math.round(frac * 100)}%`;
  refs.progressFill.classList.toggle("ready", tr.state === "ready");

  if (state.lastInjectStart !== null) {
    refs.injectAck.textContent = `scheduled at ${state.lastInjectStart.toFixed(2)}s`;
  }

  paint(refs.eegCanvas, (ctx) => drawStripChart(ctx, state.eeg.toArray()));
  paint(refs.powCanvas, (ctx) => drawPowerBars(ctx, state.power.newest?.v ?? null));
  paint(refs.flightCanvas, (ctx) => drawFlight(ctx, state.flightPath.toArray()));
}

/** Headless DOMs have no 2d context; charts just skip there. */
function paint(canvas: HTMLCanvasElement, fn: (ctx: CanvasRenderingContext2D) => void): void {
  let ctx: CanvasRenderingContext2D | null = null;
  try {
    ctx = canvas.getContext("2d");
  } catch {
    return;
  }
  if (ctx) fn(ctx);
}
