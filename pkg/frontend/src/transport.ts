/** WebSocket transport: one JSON record per text message, frame payloads
 * as single binary messages. The service carries this on its HTTP port at
 * path /ws next to the static console and GET /info. */

import { ServerRecord } from "./protocol";
import { Transport } from "./client";

export class WsTransport implements Transport {
  onrecord: ((r: ServerRecord) => void) | null = null;
  onbinary: ((data: Uint8Array) => void) | null = null;
  onclose: ((reason: string) => void) | null = null;

  private ws: WebSocket;
  private queue: string[] = [];

  constructor(url: string) {
    this.ws = new WebSocket(url);
    this.ws.binaryType = "arraybuffer";
    this.ws.onopen = () => {
      for (const msg of this.queue) this.ws.send(msg);
      this.queue.length = 0;
    };
    this.ws.onmessage = (ev) => {
      if (typeof ev.data === "string") {
        let record: ServerRecord;
        try {
          record = JSON.parse(ev.data);
        } catch {
          console.warn("malformed record dropped", ev.data.slice(0, 80));
          return;
        }
        this.onrecord?.(record);
      } else {
        this.onbinary?.(new Uint8Array(ev.data as ArrayBuffer));
      }
    };
    this.ws.onclose = (ev) => {
      this.onclose?.(ev.reason || `closed (${ev.code})`);
    };
    this.ws.onerror = () => {
      this.onclose?.("connection error");
    };
  }

  send(obj: Record<string, unknown>): void {
    const msg = JSON.stringify(obj);
    if (this.ws.readyState === WebSocket.CONNECTING) {
      this.queue.push(msg);
    } else if (this.ws.readyState === WebSocket.OPEN) {
      this.ws.send(msg);
    }
  }

  close(): void {
    this.ws.onclose = null;
    this.ws.close();
  }
}

/** ws:// endpoint for a run's HTTP port, from whatever the user typed. */
export function wsUrl(endpoint: string): string {
  let e = endpoint.trim();
  if (e.startsWith("http://")) e = e.slice(7);
  if (e.startsWith("ws://")) e = e.slice(5);
  e = e.replace(/\/+$/, "");
  if (!e.includes("/")) e += "/ws";
  return "ws://" + e;
}
