/** JSON-RPC 2.0 client over one multiplexed WebSocket.
 *
 * Replies match by id, so long-running calls (session/run) never block
 * short ones on the same socket. Server-pushed notifications fan out to
 * registered handlers. An unexpected close triggers reconnect with
 * exponential backoff capped at 10 s; close() is final.
 */

export type ConnState = "connecting" | "open" | "reconnecting" | "closed";

export interface RpcErrorData {
  code?: string;
  violations?: Array<{ path: string; expected: string; got: string }>;
  [k: string]: unknown;
}

export class RpcCallError extends Error {
  constructor(
    message: string,
    readonly code: number,
    readonly data?: RpcErrorData,
  ) {
    super(message);
    this.name = "RpcCallError";
  }
}

// the overlap of browser WebSocket and the `ws` package, property-handler style
export interface SocketLike {
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  send(data: string): void;
  close(): void;
}

export type SocketFactory = (url: string) => SocketLike;

export function backoffDelayMs(attempt: number, baseMs = 500, capMs = 10_000): number {
  return Math.min(capMs, baseMs * 2 ** Math.max(0, attempt));
}

type Pending = {
  resolve: (v: unknown) => void;
  reject: (e: Error) => void;
  timer: ReturnType<typeof setTimeout>;
};

export type NotificationHandler = (method: string, params: Record<string, unknown>) => void;

const defaultFactory: SocketFactory = (url) => {
  const Ctor = (globalThis as Record<string, unknown>).WebSocket as
    | (new (url: string) => SocketLike)
    | undefined;
  if (!Ctor) throw new Error("no WebSocket implementation available; pass a factory");
  return new Ctor(url);
};

export class RpcClient {
  state: ConnState = "closed";

  private socket: SocketLike | null = null;
  private nextId = 1;
  private pending = new Map<number, Pending>();
  private noteHandlers: NotificationHandler[] = [];
  private stateHandlers: Array<(s: ConnState) => void> = [];
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;
  private attempt = 0;
  private closedByUs = false;
  private queued: string[] = []; // sends issued while (re)connecting

  constructor(
    readonly url: string,
    private makeSocket: SocketFactory = defaultFactory,
  ) {}

  /** Resolves once the first connection opens; keeps retrying until close(). */
  connect(): Promise<void> {
    this.closedByUs = false;
    return new Promise((resolve) => {
      const off = this.onState((s) => {
        if (s === "open") {
          off();
          resolve();
        }
      });
      this.dial();
    });
  }

  call(
    method: string,
    params: Record<string, unknown> = {},
    timeoutMs = 30_000,
  ): Promise<any> {
    const id = this.nextId++;
    const raw = JSON.stringify({ jsonrpc: "2.0", id, method, params });
    return new Promise((resolve, reject) => {
      const timer = setTimeout(() => {
        this.pending.delete(id);
        reject(new RpcCallError(`${method} timed out after ${timeoutMs}ms`, -1));
      }, timeoutMs);
      this.pending.set(id, { resolve, reject, timer });
      this.sendRaw(raw);
    });
  }

  onNotification(handler: NotificationHandler): () => void {
    this.noteHandlers.push(handler);
    return () => {
      this.noteHandlers = this.noteHandlers.filter((h) => h !== handler);
    };
  }

  onState(handler: (s: ConnState) => void): () => void {
    this.stateHandlers.push(handler);
    return () => {
      this.stateHandlers = this.stateHandlers.filter((h) => h !== handler);
    };
  }

  close(): void {
    this.closedByUs = true;
    if (this.reconnectTimer !== null) {
      clearTimeout(this.reconnectTimer);
      this.reconnectTimer = null;
    }
    this.socket?.close();
    this.socket = null;
    this.failPending(new RpcCallError("connection closed", -1));
    this.setState("closed");
  }

  // ---------------------------------------------------------------- wiring

  private dial(): void {
    this.setState(this.attempt === 0 ? "connecting" : "reconnecting");
    let sock: SocketLike;
    try {
      sock = this.makeSocket(this.url);
    } catch {
      this.scheduleReconnect();
      return;
    }
    this.socket = sock;
    sock.onopen = () => {
      this.attempt = 0;
      this.setState("open");
      const backlog = this.queued;
      this.queued = [];
      for (const raw of backlog) sock.send(raw);
    };
    sock.onmessage = (ev) => this.dispatch(String(ev.data));
    sock.onerror = () => {
      /* onclose always follows; nothing to do here */
    };
    sock.onclose = () => {
      if (this.socket !== sock) return; // superseded
      this.socket = null;
      this.failPending(new RpcCallError("connection lost", -1));
      if (!this.closedByUs) this.scheduleReconnect();
    };
  }

  private scheduleReconnect(): void {
    if (this.closedByUs) return;
    this.setState("reconnecting");
    const delay = backoffDelayMs(this.attempt++);
    this.reconnectTimer = setTimeout(() => {
      this.reconnectTimer = null;
      this.dial();
    }, delay);
  }

  private sendRaw(raw: string): void {
    if (this.state === "open" && this.socket) {
      this.socket.send(raw);
    } else if (this.closedByUs) {
      throw new RpcCallError("client is closed", -1);
    } else {
      this.queued.push(raw);
    }
  }

  private dispatch(text: string): void {
    let doc: Record<string, unknown>;
    try {
      doc = JSON.parse(text);
    } catch {
      return; // not ours to crash over
    }
    if (typeof doc.method === "string" && doc.id === undefined) {
      const params = (doc.params ?? {}) as Record<string, unknown>;
      for (const h of [...this.noteHandlers]) h(doc.method, params);
      return;
    }
    const id = doc.id as number;
    const entry = this.pending.get(id);
    if (!entry) return;
    this.pending.delete(id);
    clearTimeout(entry.timer);
    if (doc.error) {
      const err = doc.error as { message?: string; code?: number; data?: RpcErrorData };
      entry.reject(new RpcCallError(err.message ?? "rpc error", err.code ?? -1, err.data));
    } else {
      entry.resolve(doc.result);
    }
  }

  private failPending(err: Error): void {
    for (const [, entry] of this.pending) {
      clearTimeout(entry.timer);
      entry.reject(err);
    }
    this.pending.clear();
  }

  private setState(s: ConnState): void {
    if (this.state === s) return;
    this.state = s;
    for (const h of [...this.stateHandlers]) h(s);
  }
}
