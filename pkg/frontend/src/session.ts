/** One operator session: a JSON-RPC link to the headset service and a
 * read-only telemetry link to the relay.
 *
 * All control the console can exert goes through the headset service
 * (training and episode injection). The telemetry socket is listen-only
 * by construction: this module never calls send() on it, and no code in
 * the console publishes to the command topic. Flying happens only via
 * the same pipeline the pilot uses.
 */

import { RpcClient, RpcServiceError, SocketFactory, WireSocket } from "./rpc.js";
import { applyStreamEvent, applyTelemetry, ConsoleState, ProfileInfo, TrainingInfo } from "./state.js";

export const STREAMS = ["com", "fac", "eeg", "pow"] as const;

/** Windows in one accepted training take. With 2 s windows on a 1 s hop
 * the seventh window completes 8 s after recording starts, which is the
 * recording length the service trains from. */
export const WINDOWS_PER_TAKE = 7;

export interface SessionConfig {
  cortexUrl: string;
  telemetryUrl?: string | null;
  appName?: string;
  clientId?: string;
  clientSecret?: string;
  sockets?: SocketFactory;
  nowMs?: () => number;
  /** Called after any state mutation so the UI can repaint. */
  onChange?: () => void;
}

const defaultFactory: SocketFactory = (url) => new (globalThis as any).WebSocket(url) as WireSocket;

export class ConsoleSession {
  readonly state = new ConsoleState();

  private readonly sockets: SocketFactory;
  private readonly nowMs: () => number;
  private readonly onChange: () => void;
  private rpc: RpcClient | null = null;
  private telemetrySocket: WireSocket | null = null;
  private token: string | null = null;
  private sessionId: string | null = null;

  constructor(private readonly config: SessionConfig) {
    this.sockets = config.sockets ?? defaultFactory;
    this.nowMs = config.nowMs ?? (() => Date.now());
    this.onChange = config.onChange ?? (() => {});
  }

  get connectedSession(): string | null {
    return this.sessionId;
  }

  /** Authorize, open a session, and subscribe to all four streams. */
  async connect(): Promise<void> {
    const socket = this.sockets(this.config.cortexUrl);
    this.rpc = new RpcClient(socket, {
      onEvent: (stream, time, data) => {
        this.touchCortex();
        applyStreamEvent(this.state, stream, time, data);
        this.onChange();
      },
      onTraffic: () => this.touchCortex(),
      onStreamEnd: (time) => {
        this.state.streamEndedAt = time;
        this.onChange();
      },
      onClose: () => {
        this.state.cortexConnected = false;
        this.onChange();
      },
    });
    const auth = await this.rpc.call<{ cortexToken: string }>("authorize", {
      appName: this.config.appName ?? "minddrone",
      clientId: this.config.clientId ?? "local-operator",
      clientSecret: this.config.clientSecret ?? "local-secret",
    });
    this.token = auth.cortexToken;
    const created = await this.rpc.call<{ id: string }>("createSession", {
      cortexToken: this.token,
    });
    this.sessionId = created.id;
    await this.rpc.call("subscribe", {
      cortexToken: this.token,
      session: this.sessionId,
      streams: [...STREAMS],
    });
    this.state.cortexConnected = true;
    this.touchCortex();
    this.onChange();
  }

  /** Attach to the telemetry relay. Frames are drone state rows; the
   * socket is never written to. */
  connectTelemetry(url?: string): void {
    const target = url ?? this.config.telemetryUrl;
    if (!target) return;
    const socket = this.sockets(target);
    this.telemetrySocket = socket;
    socket.addEventListener("open", () => {
      this.state.telemetryConnected = true;
      this.state.lastTelemetryMs = this.nowMs();
      this.onChange();
    });
    socket.addEventListener("message", (ev: any) => {
      const raw = ev?.data;
      const text = typeof raw === "string" ? raw : raw?.toString?.();
      if (typeof text !== "string") return;
      this.state.lastTelemetryMs = this.nowMs();
      applyTelemetry(this.state, text);
      this.onChange();
    });
    const dropped = () => {
      this.state.telemetryConnected = false;
      this.onChange();
    };
    socket.addEventListener("close", dropped);
    socket.addEventListener("error", dropped);
  }

  async selectProfile(name: string, how: "create" | "load"): Promise<ProfileInfo> {
    const report = await this.control<ProfileInfo>("setupProfile", { status: how, name });
    this.state.profile = report;
    this.onChange();
    return report;
  }

  async saveProfile(): Promise<void> {
    await this.control("setupProfile", { status: "save" });
  }

  async refreshProfile(): Promise<void> {
    const report = await this.control<ProfileInfo>("queryProfile", {});
    this.state.profile = report;
    this.onChange();
  }

  async trainingStart(label: string): Promise<TrainingInfo> {
    const report = await this.control<TrainingInfo>("training", { status: "start", label });
    this.state.training = report;
    this.onChange();
    return report;
  }

  async trainingAccept(): Promise<TrainingInfo> {
    const report = await this.control<TrainingInfo>("training", { status: "accept" });
    this.state.training = report;
    // accepting folds the take into the profile; badges come from there
    await this.refreshProfile();
    return report;
  }

  async trainingReject(): Promise<TrainingInfo> {
    const report = await this.control<TrainingInfo>("training", { status: "reject" });
    this.state.training = report;
    this.onChange();
    return report;
  }

  /** Refresh the recording progress; cheap enough to poll while recording. */
  async pollTraining(): Promise<void> {
    const report = await this.control<TrainingInfo>("queryTraining", {});
    this.state.training = report;
    this.onChange();
  }

  async injectEpisode(kind: "mental" | "facial", label: string, lengthS: number): Promise<number> {
    const ack = await this.control<{ start: number }>("inject", {
      kind,
      label,
      duration: lengthS,
    });
    this.state.lastInjectStart = ack.start;
    this.onChange();
    return ack.start;
  }

  close(): void {
    this.rpc?.close();
    try {
      this.telemetrySocket?.close();
    } catch {
      // already gone
    }
    this.state.cortexConnected = false;
    this.state.telemetryConnected = false;
    this.onChange();
  }

  /** Wrap a control call so service errors land in the error banner
   * exactly as sent, then rethrow for the caller. */
  private async control<T>(method: string, params: Record<string, unknown>): Promise<T> {
    if (this.rpc === null || this.token === null) throw new Error("not connected");
    const body: Record<string, unknown> = { ...params, cortexToken: this.token };
    if (this.sessionId !== null && method !== "inject") body.session = this.sessionId;
    try {
      const result = await this.rpc.call<T>(method, body);
      this.state.lastError = null;
      return result;
    } catch (err) {
      if (err instanceof RpcServiceError) {
        this.state.lastError = err.message;
        this.onChange();
      }
      throw err;
    }
  }

  private touchCortex(): void {
    this.state.lastCortexMs = this.nowMs();
  }
}
