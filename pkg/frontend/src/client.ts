// HTTP + streaming client for the prediction service.
//
// Control frames are validated before they touch the socket, and nothing is
// ever queued while disconnected: sends fail fast so the UI can surface a
// reconnect prompt instead of silently buffering stale commands.

import {
  clientFrameSchema,
  controlFrame,
  selectModelFrame,
  type ClientFrame,
  type ControlAction,
} from "./protocol.js";

export interface ModelEntry {
  id: string;
  kind: string;
  accuracy_meta?: number;
}

export interface StreamHooks {
  onFrame: (raw: string) => void;
  onOpen?: () => void;
  onClose?: () => void;
}

/** Minimal socket surface so tests can substitute a fake. */
export interface SocketLike {
  readyState: number;
  send(data: string): void;
  close(): void;
  onmessage: ((ev: { data: string }) => void) | null;
  onopen: (() => void) | null;
  onclose: (() => void) | null;
}

const SOCKET_OPEN = 1;

export class StreamClient {
  private socket: SocketLike | null = null;

  constructor(
    private baseUrl: string,
    private socketFactory: (url: string) => SocketLike = (url) =>
      new WebSocket(url) as unknown as SocketLike,
  ) {}

  private http(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  private ws(path: string): string {
    return this.http(path).replace(/^http/, "ws");
  }

  async listModels(): Promise<ModelEntry[]> {
    const resp = await fetch(this.http("/models"));
    if (!resp.ok) throw new Error(`GET /models failed: ${resp.status}`);
    return (await resp.json()).models as ModelEntry[];
  }

  async predictOnce(model: string, window: number[][], attention = false): Promise<unknown> {
    const resp = await fetch(this.http("/predict"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ model, window, attention }),
    });
    if (!resp.ok) throw new Error(`POST /predict failed: ${resp.status}`);
    return resp.json();
  }

  async startReplay(model: string, windows: string, speed: number, attention = false): Promise<string> {
    const resp = await fetch(this.http("/replay"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ model, windows, speed, attention }),
    });
    if (!resp.ok) throw new Error(`POST /replay failed: ${resp.status}`);
    return (await resp.json()).session as string;
  }

  connectStream(sessionToken: string, hooks: StreamHooks): void {
    this.disconnect();
    const socket = this.socketFactory(this.ws(`/stream?session=${sessionToken}`));
    socket.onmessage = (ev) => hooks.onFrame(ev.data);
    socket.onopen = () => hooks.onOpen?.();
    socket.onclose = () => {
      this.socket = null;
      hooks.onClose?.();
    };
    this.socket = socket;
  }

  disconnect(): void {
    if (this.socket) {
      this.socket.close();
      this.socket = null;
    }
  }

  get connected(): boolean {
    return this.socket !== null && this.socket.readyState === SOCKET_OPEN;
  }

  private sendFrame(frame: ClientFrame): boolean {
    if (!this.connected || !this.socket) return false;
    // belt and braces: never emit anything that violates the wire schema
    this.socket.send(JSON.stringify(clientFrameSchema.parse(frame)));
    return true;
  }

  /** Returns false when disconnected; the caller must prompt for reconnect. */
  sendControl(action: ControlAction, value?: number): boolean {
    return this.sendFrame(controlFrame(action, value));
  }

  sendSelectModel(id: string): boolean {
    return this.sendFrame(selectModelFrame(id));
  }
}
