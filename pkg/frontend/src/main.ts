/** Browser entry point: build the panels, open both links, repaint.
 *
 * Connection targets come from query parameters so the same static page
 * works against any local rig:
 *   ?cortex=ws://host:6868/   headset service (JSON-RPC)
 *   ?relay=ws://host:8001/    telemetry relay; "off" disables the panel
 *   ?profile=name             profile to load on startup
 */

import { ConsoleSession } from "./session.js";
import { buildConsole, render } from "./ui.js";

const params = new URLSearchParams(window.location.search);
const host = window.location.hostname || "127.0.0.1";
const cortexUrl = params.get("cortex") ?? `ws://${host}:6868/`;
const relayParam = params.get("relay") ?? `ws://${host}:8001/`;
const relayUrl = relayParam === "off" ? null : relayParam;

let repaintQueued = false;
const session = new ConsoleSession({
  cortexUrl,
  telemetryUrl: relayUrl,
  appName: params.get("app") ?? undefined,
  clientId: params.get("id") ?? undefined,
  clientSecret: params.get("secret") ?? undefined,
  onChange: () => {
    if (repaintQueued) return;
    repaintQueued = true;
    requestAnimationFrame(() => {
      repaintQueued = false;
      render(refs, session.state, Date.now());
    });
  },
});

/** Surface rejected control calls; service errors are already recorded verbatim. */
function act(work: Promise<unknown>): void {
  work.catch((err) => {
    if (session.state.lastError === null) {
      session.state.lastError = err instanceof Error ? err.message : String(err);
    }
    render(refs, session.state, Date.now());
  });
}

const root = document.getElementById("app");
if (root === null) throw new Error("missing #app root");
const refs = buildConsole(root, {
  profileSelect: (name, how) => act(session.selectProfile(name, how)),
  profileSave: () => act(session.saveProfile()),
  trainStart: (label) => act(session.trainingStart(label)),
  trainAccept: () => act(session.trainingAccept()),
  trainReject: () => act(session.trainingReject()),
  inject: (kind, label, lengthS) => act(session.injectEpisode(kind, label, lengthS)),
});

act(
  session.connect().then(async () => {
    const profile = params.get("profile");
    if (profile !== null) await session.selectProfile(profile, "load");
  }),
);
session.connectTelemetry();

// periodic repaint so stale indicators flip even when no frames arrive
setInterval(() => render(refs, session.state, Date.now()), 500);

// while a take is recording, keep the progress bar moving
setInterval(() => {
  if (session.state.training.state === "recording" && session.connectedSession !== null) {
    act(session.pollTraining());
  }
}, 500);

render(refs, session.state, Date.now());
