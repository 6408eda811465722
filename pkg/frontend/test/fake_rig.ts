/** Scripted stand-ins for the headset service and the telemetry relay.
 *
 * Both speak the same wire protocol as the Python rig: JSON-RPC 2.0 text
 * frames with "event" notifications on the cortex side, bare telemetry
 * JSON rows on the relay side. Method handling, token checks, and the
 * training state machine mirror the service, including its exact error
 * codes and message texts, so "surfaced verbatim" assertions mean what
 * they say. Tests drive what gets emitted and when.
 */

import { AddressInfo } from "node:net";
import { WebSocket, WebSocketServer } from "ws";

export const METHOD_NOT_FOUND = -32601;
export const INVALID_PARAMS = -32602;
export const BAD_TOKEN = -32003;
export const TRAINING_ORDER = -32004;
export const INJECTION_FAILED = -32005;

const WINDOWS_PER_TAKE = 7;
const MENTAL = ["neutral", "push", "pull", "left", "right", "lift", "drop"];

interface Training {
  label: string;
  state: "recording" | "ready" | "accepted" | "rejected";
  windows: number;
}

export interface FakeCortexOptions {
  allowInjection?: boolean;
  token?: string;
}

export class FakeCortex {
  readonly received: any[] = [];
  readonly injections: { kind: string; label: string; duration: number }[] = [];
  profile: { name: string; neutral: boolean; labels: string[] } | null = null;
  training: Training | null = null;
  /** Scheduled start handed back by inject; tests set it per scenario. */
  nextInjectStart = 12.0;

  private server: WebSocketServer | null = null;
  private conns = new Set<WebSocket>();
  private readonly token: string;
  private readonly allowInjection: boolean;
  port = 0;

  constructor(options: FakeCortexOptions = {}) {
    this.allowInjection = options.allowInjection ?? true;
    this.token = options.token ?? "tok-fake";
  }

  start(): Promise<number> {
    this.server = new WebSocketServer({ host: "127.0.0.1", port: 0 });
    this.server.on("connection", (ws) => {
      this.conns.add(ws);
      ws.on("close", () => this.conns.delete(ws));
      ws.on("message", (data) => this.handle(ws, data.toString()));
    });
    return new Promise((resolve) => {
      this.server!.on("listening", () => {
        this.port = (this.server!.address() as AddressInfo).port;
        resolve(this.port);
      });
    });
  }

  url(): string {
    return `ws://127.0.0.1:${this.port}/`;
  }

  close(): void {
    for (const ws of this.conns) ws.terminate();
    this.server?.close();
  }

  /** Broadcast one stream event notification to every client. */
  emit(stream: string, time: number, data: unknown[]): void {
    this.notify({ jsonrpc: "2.0", method: "event", params: { stream, time, data } });
  }

  emitStreamEnd(time: number): void {
    this.notify({ jsonrpc: "2.0", method: "streamEnd", params: { time } });
  }

  /** Advance the active recording as the pipeline would, capped at ready. */
  feedTrainingWindows(n: number): void {
    const tr = this.training;
    if (tr === null || tr.state !== "recording") return;
    tr.windows = Math.min(tr.windows + n, WINDOWS_PER_TAKE);
    if (tr.windows >= WINDOWS_PER_TAKE) tr.state = "ready";
  }

  private notify(frame: object): void {
    const text = JSON.stringify(frame);
    for (const ws of this.conns) {
      if (ws.readyState === WebSocket.OPEN) ws.send(text);
    }
  }

  private handle(ws: WebSocket, text: string): void {
    let request: any;
    try {
      request = JSON.parse(text);
    } catch {
      return;
    }
    this.received.push(request);
    const id = request.id;
    const reply = (body: object) => ws.send(JSON.stringify({ jsonrpc: "2.0", id, ...body }));
    const fail = (code: number, message: string) => reply({ error: { code, message } });

    const method = request.method;
    const params = request.params ?? {};
    if (method === "authorize") {
      reply({ result: { cortexToken: this.token } });
      return;
    }
    if (method === "inject" && !this.allowInjection) {
      fail(METHOD_NOT_FOUND, "unknown method 'inject'");
      return;
    }
    if (params.cortexToken !== this.token) {
      fail(BAD_TOKEN, "unknown token");
      return;
    }
    try {
      reply({ result: this.dispatch(method, params) });
    } catch (err: any) {
      if (err instanceof Rpc) fail(err.code, err.message);
      else fail(-32603, String(err?.message ?? err));
    }
  }

  private dispatch(method: string, params: any): object {
    switch (method) {
      case "createSession":
        return { id: "s-fake" };
      case "subscribe":
        return { success: params.streams ?? [], failure: [] };
      case "setupProfile":
        return this.setupProfile(params);
      case "queryProfile":
        return this.profileReport();
      case "training":
        return this.trainingControl(params);
      case "queryTraining":
        return this.trainingReport();
      case "inject":
        return this.inject(params);
      default:
        throw new Rpc(METHOD_NOT_FOUND, `unknown method '${method}'`);
    }
  }

  private setupProfile(params: any): object {
    const status = params.status;
    if (status === "unload") {
      this.profile = null;
      this.training = null;
      return { status, name: null };
    }
    if (status === "save") {
      if (this.profile === null) throw new Rpc(TRAINING_ORDER, "no profile loaded");
      return { ...this.profileReport(), status };
    }
    this.profile = { name: params.name, neutral: false, labels: [] };
    this.training = null;
    return { ...this.profileReport(), status };
  }

  private profileReport(): object {
    if (this.profile === null) {
      return { name: null, neutralTrained: false, trainedLabels: [] };
    }
    return {
      name: this.profile.name,
      neutralTrained: this.profile.neutral,
      trainedLabels: [...this.profile.labels].sort(),
    };
  }

  private trainingControl(params: any): object {
    const status = params.status;
    if (this.profile === null) throw new Rpc(TRAINING_ORDER, "no profile loaded");
    if (status === "start") {
      const label = params.label;
      if (!MENTAL.includes(label)) {
        throw new Rpc(INVALID_PARAMS, `label must be one of ${JSON.stringify([...MENTAL].sort())}`);
      }
      this.training = { label, state: "recording", windows: 0 };
    } else if (this.training === null) {
      throw new Rpc(TRAINING_ORDER, "no training recording to act on");
    } else if (status === "accept") {
      if (this.training.state !== "ready") {
        throw new Rpc(TRAINING_ORDER, `cannot accept in state '${this.training.state}'`);
      }
      if (this.training.label === "neutral") {
        this.profile.neutral = true;
      } else if (!this.profile.neutral) {
        throw new Rpc(TRAINING_ORDER, "train neutral before any command");
      } else if (!this.profile.labels.includes(this.training.label)) {
        this.profile.labels.push(this.training.label);
      }
      this.training.state = "accepted";
    } else {
      if (this.training.state !== "recording" && this.training.state !== "ready") {
        throw new Rpc(TRAINING_ORDER, `cannot reject in state '${this.training.state}'`);
      }
      this.training.state = "rejected";
    }
    return this.trainingReport();
  }

  private trainingReport(): object {
    if (this.training === null) return { label: null, state: "idle", windows: 0 };
    return {
      label: this.training.label,
      state: this.training.state,
      windows: this.training.windows,
    };
  }

  private inject(params: any): object {
    this.injections.push({ kind: params.kind, label: params.label, duration: params.duration });
    return { start: this.nextInjectStart };
  }
}

class Rpc extends Error {
  constructor(
    readonly code: number,
    message: string,
  ) {
    super(message);
  }
}

/** Telemetry relay double: pushes rows out, records anything pushed in. */
export class FakeRelay {
  /** Inbound frames from clients. The console must never produce any. */
  readonly received: string[] = [];
  port = 0;

  private server: WebSocketServer | null = null;
  private conns = new Set<WebSocket>();

  start(): Promise<number> {
    this.server = new WebSocketServer({ host: "127.0.0.1", port: 0 });
    this.server.on("connection", (ws) => {
      this.conns.add(ws);
      ws.on("close", () => this.conns.delete(ws));
      ws.on("message", (data) => this.received.push(data.toString()));
    });
    return new Promise((resolve) => {
      this.server!.on("listening", () => {
        this.port = (this.server!.address() as AddressInfo).port;
        resolve(this.port);
      });
    });
  }

  url(): string {
    return `ws://127.0.0.1:${this.port}/`;
  }

  get clientCount(): number {
    return this.conns.size;
  }

  broadcast(row: object | string): void {
    const text = typeof row === "string" ? row : JSON.stringify(row);
    for (const ws of this.conns) {
      if (ws.readyState === WebSocket.OPEN) ws.send(text);
    }
  }

  close(): void {
    for (const ws of this.conns) ws.terminate();
    this.server?.close();
  }
}

export function telemetryRow(partial: Partial<Record<string, number | string>> = {}): object {
  return {
    battery: 100,
    mode: "Hovering",
    t: 0,
    x: 0,
    y: 0,
    yaw: 0,
    z: 1,
    ...partial,
  };
}

/** Poll until cond() or fail after timeoutMs. */
export async function waitFor(cond: () => boolean, timeoutMs = 5000, what = "condition"): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (!cond()) {
    if (Date.now() > deadline) throw new Error(`timed out waiting for ${what}`);
    await new Promise((r) => setTimeout(r, 10));
  }
}
