/** Wire codec shared by every transport.
 *
 * Canonical stream framing (TCP): each message is a u32 little-endian byte
 * count followed by that many bytes of UTF-8 JSON encoding one object.
 * After a message of type "frame", exactly header.nbytes bytes of raw
 * little-endian float32 payload follow. Over WebSocket the same JSON
 * records travel one per text message and the payload as one binary
 * message; this module still does the record/payload pairing.
 */

export const MAX_MESSAGE = 1 << 20;

export type Verb = "pause" | "resume" | "stop" | "checkpoint" | "emit";

export interface ParamDesc {
  name: string;
  kind: "int" | "real" | "enum";
  value: number | string;
  mutable: boolean;
  lo: number;
  hi: number;
  choices?: string[];
}

export interface Welcome {
  type: "welcome";
  run_id: string;
  timestep: number;
  max_steps: number;
  dims: [number, number, number];
  paused: boolean;
  fields: string[];
  params: ParamDesc[];
  protocol: number;
}

export interface FrameHeader {
  type: "frame";
  field: string;
  kind: "slice" | "volume";
  axis?: "x" | "y" | "z";
  index?: number;
  step?: number;
  shape: number[];
  dtype: "f32";
  nbytes: number;
  timestep: number;
}

export interface Ack {
  type: "ack";
  cmd: string;
  timestep?: number;
  name?: string;
  value?: number | string;
  field?: string;
  path?: string | null;
  [k: string]: unknown;
}

export interface ErrorMsg {
  type: "error";
  cmd?: string;
  name?: string;
  field?: string;
  reason: string;
}

export interface Status {
  type: "status";
  timestep: number;
  paused: boolean;
  max_steps: number;
  error?: string;
}

export type ServerRecord =
  | Welcome
  | { type: "pong"; timestep: number }
  | Ack
  | ErrorMsg
  | Status
  | FrameHeader;

const utf8encode = new TextEncoder();
const utf8decode = new TextDecoder("utf-8", { fatal: true });

/** One JSON record in canonical stream framing. */
export function encodeMessage(obj: Record<string, unknown>): Uint8Array {
  const body = utf8encode.encode(JSON.stringify(obj));
  const out = new Uint8Array(4 + body.length);
  new DataView(out.buffer).setUint32(0, body.length, true);
  out.set(body, 4);
  return out;
}

export type WireEvent =
  | { kind: "record"; record: ServerRecord }
  | { kind: "payload"; data: Uint8Array };

/** Incremental decoder for the canonical byte stream. Feed arbitrary
 * chunks; records and frame payloads come out in arrival order. */
export class WireDecoder {
  private buf = new Uint8Array(0);
  private payloadWanted = 0;

  push(chunk: Uint8Array): WireEvent[] {
    const joined = new Uint8Array(this.buf.length + chunk.length);
    joined.set(this.buf, 0);
    joined.set(chunk, this.buf.length);
    this.buf = joined;

    const out: WireEvent[] = [];
    for (;;) {
      if (this.payloadWanted > 0) {
        if (this.buf.length < this.payloadWanted) break;
        out.push({
          kind: "payload",
          data: this.buf.slice(0, this.payloadWanted),
        });
        this.buf = this.buf.slice(this.payloadWanted);
        this.payloadWanted = 0;
        continue;
      }
      if (this.buf.length < 4) break;
      const n = new DataView(
        this.buf.buffer,
        this.buf.byteOffset,
        4,
      ).getUint32(0, true);
      if (n > MAX_MESSAGE) {
        throw new Error(`message of ${n} bytes exceeds limit`);
      }
      if (this.buf.length < 4 + n) break;
      const record = JSON.parse(
        utf8decode.decode(this.buf.slice(4, 4 + n)),
      ) as ServerRecord;
      this.buf = this.buf.slice(4 + n);
      out.push({ kind: "record", record });
      if (record.type === "frame") {
        this.payloadWanted = (record as FrameHeader).nbytes;
      }
    }
    return out;
  }
}

const littleEndianHost = (() => {
  const probe = new Uint8Array(new Uint16Array([1]).buffer);
  return probe[0] === 1;
})();

/** Frame payload bytes (little-endian f32) as a Float32Array. */
export function decodePayload(data: Uint8Array): Float32Array {
  const n = data.byteLength >> 2;
  if (littleEndianHost) {
    // aligned copy so the view owns its own buffer
    return new Float32Array(data.slice().buffer, 0, n);
  }
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  const out = new Float32Array(n);
  for (let i = 0; i < n; i++) out[i] = view.getFloat32(4 * i, true);
  return out;
}

export function hexToBytes(hex: string): Uint8Array {
  const out = new Uint8Array(hex.length / 2);
  for (let i = 0; i < out.length; i++) {
    out[i] = parseInt(hex.slice(2 * i, 2 * i + 2), 16);
  }
  return out;
}

export function bytesToHex(data: Uint8Array): string {
  return Array.from(data, (b) => b.toString(16).padStart(2, "0")).join("");
}
