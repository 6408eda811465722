/** Minimal JSON-RPC 2.0 client over a WebSocket-shaped transport.
 *
 * One JSON text frame per request, response, or notification. Responses
 * are matched to calls by id; frames without an id are notifications and
 * go to the event callbacks. The transport is injected so tests can run
 * against a node-side socket while the browser uses the native one.
 */

export interface WireSocket {
  readyState: number;
  send(data: string): void;
  close(): void;
  addEventListener(type: string, listener: (ev: any) => void): void;
}

export type SocketFactory = (url: string) => WireSocket;

const OPEN = 1;

export class RpcServiceError extends Error {
  constructor(
    readonly code: number,
    message: string,
  ) {
    super(message);
    this.name = "RpcServiceError";
  }
}

interface Pending {
  resolve: (value: any) => void;
  reject: (err: Error) => void;
  timer: ReturnType<typeof setTimeout>;
}

export interface RpcHooks {
  /** Stream notification: {stream, time, data} per event frame. */
  onEvent?: (stream: string, time: number, data: unknown[]) => void;
  onStreamEnd?: (time: number) => void;
  /** Every inbound frame, before dispatch. Drives staleness tracking. */
  onTraffic?: () => void;
  onClose?: () => void;
}

export class RpcClient {
  private nextId = 1;
  private pending = new Map<number, Pending>();
  private sendQueue: string[] = [];
  private open: boolean;
  private closed = false;

  constructor(
    private readonly socket: WireSocket,
    private readonly hooks: RpcHooks = {},
    private readonly callTimeoutMs = 10_000,
  ) {
    this.open = socket.readyState === OPEN;
    socket.addEventListener("open", () => this.flush());
    socket.addEventListener("message", (ev: any) => this.receive(ev));
    socket.addEventListener("close", () => this.drop(new Error("connection closed")));
    socket.addEventListener("error", () => this.drop(new Error("connection error")));
  }

  call<T = any>(method: string, params: Record<string, unknown> = {}): Promise<T> {
    if (this.closed) return Promise.reject(new Error("connection closed"));
    const id = this.nextId++;
    const text = JSON.stringify({ jsonrpc: "2.0", id, method, params });
    return new Promise<T>((resolve, reject) => {
      const timer = setTimeout(() => {
        this.pending.delete(id);
        reject(new Error(`${method}: no response within ${this.callTimeoutMs} ms`));
      }, this.callTimeoutMs);
      this.pending.set(id, { resolve, reject, timer });
      if (this.open) {
        this.socket.send(text);
      } else {
        this.sendQueue.push(text);
      }
    });
  }

  close(): void {
    this.drop(new Error("connection closed"));
    try {
      this.socket.close();
    } catch {
      // already gone
    }
  }

  private flush(): void {
    this.open = true;
    for (const text of this.sendQueue) this.socket.send(text);
    this.sendQueue = [];
  }

  private receive(ev: any): void {
    const raw = ev?.data;
    const text = typeof raw === "string" ? raw : raw?.toString?.();
    if (typeof text !== "string") return;
    let frame: any;
    try {
      frame = JSON.parse(text);
    } catch {
      return; // not ours to diagnose; the service never sends non-JSON
    }
    this.hooks.onTraffic?.();
    if (frame === null || typeof frame !== "object") return;
    if ("id" in frame && frame.id !== null) {
      const entry = this.pending.get(frame.id);
      if (entry === undefined) return;
      this.pending.delete(frame.id);
      clearTimeout(entry.timer);
      if (frame.error !== undefined) {
        entry.reject(new RpcServiceError(frame.error.code, frame.error.message));
      } else {
        entry.resolve(frame.result);
      }
      return;
    }
    if (frame.method === "event" && frame.params) {
      const { stream, time, data } = frame.params;
      if (typeof stream === "string" && typeof time === "number" && Array.isArray(data)) {
        this.hooks.onEvent?.(stream, time, data);
      }
    } else if (frame.method === "streamEnd") {
      this.hooks.onStreamEnd?.(Number(frame.params?.time ?? NaN));
    }
  }

  private drop(err: Error): void {
    if (this.closed) return;
    this.closed = true;
    for (const entry of this.pending.values()) {
      clearTimeout(entry.timer);
      entry.reject(err);
    }
    this.pending.clear();
    this.hooks.onClose?.();
  }
}
