/** Steering session state machine, transport-agnostic.
 *
 * The session owns the parameter table and the frame pairing logic; a
 * Transport delivers parsed JSON records plus raw binary payloads and
 * ships outgoing records. The browser uses the WebSocket transport, the
 * scripted clients a TCP one; both feed the same class, so protocol
 * behaviour is tested once.
 */

import {
  ParamDesc,
  ServerRecord,
  FrameHeader,
  Welcome,
  Status,
  Ack,
  ErrorMsg,
  Verb,
  decodePayload,
} from "./protocol";

export interface Transport {
  send(obj: Record<string, unknown>): void;
  close(): void;
  onrecord: ((r: ServerRecord) => void) | null;
  onbinary: ((data: Uint8Array) => void) | null;
  onclose: ((reason: string) => void) | null;
}

export interface Frame {
  header: FrameHeader;
  data: Float32Array;
}

export interface ParamRow {
  desc: ParamDesc;
  /** value sent but not yet acknowledged; undefined when settled */
  pending?: number | string;
}

export interface SessionEvents {
  welcome?: (w: Welcome) => void;
  status?: (s: Status) => void;
  params?: (rows: ParamRow[]) => void;
  ack?: (a: Ack) => void;
  error?: (e: ErrorMsg) => void;
  frame?: (f: Frame) => void;
  close?: (reason: string) => void;
}

/** Coupling names g:<a>:<b> mean the same knob in either order. */
export function canonicalParam(name: string): string {
  if (name.startsWith("g:")) {
    const parts = name.split(":");
    if (parts.length === 3) {
      const [a, b] = parts.slice(1).sort();
      return `g:${a}:${b}`;
    }
  }
  return name;
}

export class Session {
  runId = "";
  dims: [number, number, number] = [0, 0, 0];
  fields: string[] = [];
  timestep = -1;
  maxSteps = 0;
  paused = false;
  connected = false;

  private params = new Map<string, ParamRow>();
  private pendingFrame: FrameHeader | null = null;
  private lastFrameStep = new Map<string, number>();

  constructor(
    private transport: Transport,
    private events: SessionEvents = {},
  ) {
    transport.onrecord = (r) => this.handle(r);
    transport.onbinary = (b) => this.handleBinary(b);
    transport.onclose = (reason) => {
      this.connected = false;
      this.events.close?.(reason);
    };
    transport.send({ type: "hello", client: "console", version: 1 });
  }

  paramRows(): ParamRow[] {
    return Array.from(this.params.values());
  }

  param(name: string): ParamRow | undefined {
    return this.params.get(canonicalParam(name));
  }

  setParam(name: string, value: number | string): void {
    const key = canonicalParam(name);
    const row = this.params.get(key);
    if (row) row.pending = value;
    this.transport.send({ type: "set", name: key, value });
    this.events.params?.(this.paramRows());
  }

  command(verb: Verb): void {
    this.transport.send({ type: "command", verb });
  }

  subscribeSlice(field: string, axis: "x" | "y" | "z", index: number): void {
    this.transport.send({ type: "subscribe", field, slice: { axis, index } });
  }

  subscribeVolume(field: string, step: number): void {
    this.transport.send({ type: "subscribe", field, downsample: step });
  }

  unsubscribe(field: string): void {
    this.transport.send({ type: "unsubscribe", field });
    for (const key of this.lastFrameStep.keys()) {
      if (key.startsWith(field + "|")) this.lastFrameStep.delete(key);
    }
  }

  ping(): void {
    this.transport.send({ type: "ping" });
  }

  detach(): void {
    this.transport.send({ type: "detach" });
    this.transport.close();
  }

  private handle(r: ServerRecord): void {
    switch (r.type) {
      case "welcome": {
        const w = r as Welcome;
        this.connected = true;
        this.runId = w.run_id;
        this.dims = w.dims;
        this.fields = w.fields;
        this.timestep = w.timestep;
        this.maxSteps = w.max_steps;
        this.paused = w.paused;
        this.params.clear();
        for (const p of w.params) this.params.set(p.name, { desc: p });
        this.events.welcome?.(w);
        this.events.params?.(this.paramRows());
        break;
      }
      case "status": {
        const s = r as Status;
        this.timestep = s.timestep;
        this.paused = s.paused;
        this.maxSteps = s.max_steps;
        this.events.status?.(s);
        break;
      }
      case "ack": {
        const a = r as Ack;
        if (a.cmd === "set" && typeof a.name === "string") {
          const row = this.params.get(a.name);
          if (row) {
            row.desc.value = a.value as number | string;
            row.pending = undefined;
            this.events.params?.(this.paramRows());
          }
        }
        if (typeof a.timestep === "number") this.timestep = a.timestep;
        this.events.ack?.(a);
        break;
      }
      case "error": {
        const e = r as ErrorMsg;
        if (e.cmd === "set" && typeof e.name === "string") {
          const row = this.params.get(e.name);
          if (row) {
            row.pending = undefined; // revert to last acked value
            this.events.params?.(this.paramRows());
          }
        }
        this.events.error?.(e);
        break;
      }
      case "pong": {
        this.timestep = r.timestep;
        break;
      }
      case "frame": {
        this.pendingFrame = r as FrameHeader;
        break;
      }
    }
  }

  private handleBinary(data: Uint8Array): void {
    const header = this.pendingFrame;
    if (header === null) return; // stray payload, drop
    this.pendingFrame = null;
    if (data.byteLength !== header.nbytes) return;

    // per-subscription monotonicity: never show an older frame
    const key = `${header.field}|${header.kind}|${header.axis ?? ""}${
      header.index ?? ""
    }${header.step ?? ""}`;
    const last = this.lastFrameStep.get(key) ?? -1;
    if (header.timestep < last) return;
    this.lastFrameStep.set(key, header.timestep);

    if (header.timestep > this.timestep) this.timestep = header.timestep;
    this.events.frame?.({ header, data: decodePayload(data) });
  }
}
