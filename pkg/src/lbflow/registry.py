"""Run registry: a tiny HTTP directory of live simulations.

Separate process from any simulation. Runs announce themselves with POST
/register, keep the entry fresh with POST /heartbeat, and optionally POST
/deregister on exit. GET /list returns the live entries; an entry whose
last heartbeat is older than three heartbeat intervals is expired and
silently dropped. Everything is JSON; responses carry a permissive CORS
header so the browser console can poll the registry directly.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


@dataclass
class RegistryEntry:
    run_id: str
    host: str
    port: int
    http_port: int | None
    dims: tuple
    heartbeat: float            # interval the run promised, seconds
    meta: dict = field(default_factory=dict)
    last_seen: float = 0.0

    def describe(self) -> dict:
        return {"run_id": self.run_id, "host": self.host, "port": self.port,
                "http_port": self.http_port, "dims": list(self.dims),
                "heartbeat": self.heartbeat, "meta": self.meta,
                "age": round(time.monotonic() - self.last_seen, 3)}


class Registry:
    """Entry table with expiry; thread-safe."""

    def __init__(self):
        self._entries: dict[str, RegistryEntry] = {}
        self._lock = threading.Lock()

    def register(self, rec: dict) -> RegistryEntry:
        entry = RegistryEntry(
            run_id=str(rec["run_id"]),
            host=str(rec.get("host", "")),
            port=int(rec["port"]),
            http_port=(int(rec["http_port"])
                       if rec.get("http_port") is not None else None),
            dims=tuple(rec.get("dims", ())),
            heartbeat=float(rec.get("heartbeat", 10.0)),
            meta=dict(rec.get("meta", {})),
            last_seen=time.monotonic())
        with self._lock:
            self._entries[entry.run_id] = entry
        return entry

    def heartbeat(self, run_id: str) -> bool:
        with self._lock:
            entry = self._entries.get(run_id)
            if entry is None:
                return False
            entry.last_seen = time.monotonic()
            return True

    def deregister(self, run_id: str) -> bool:
        with self._lock:
            return self._entries.pop(run_id, None) is not None

    def expire(self):
        now = time.monotonic()
        with self._lock:
            dead = [k for k, e in self._entries.items()
                    if now - e.last_seen > 3.0 * e.heartbeat]
            for k in dead:
                del self._entries[k]

    def list(self) -> list[dict]:
        self.expire()
        with self._lock:
            return [e.describe() for e in self._entries.values()]


class _Handler(BaseHTTPRequestHandler):
    registry: Registry = None

    def _reply(self, code: int, obj):
        body = json.dumps(obj).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _body(self):
        n = int(self.headers.get("Content-Length", 0))
        return json.loads(self.rfile.read(n) or b"{}")

    def do_GET(self):
        if self.path.split("?", 1)[0] == "/list":
            self._reply(200, {"runs": self.registry.list()})
        else:
            self._reply(404, {"error": "unknown path"})

    def do_POST(self):
        path = self.path.split("?", 1)[0]
        try:
            rec = self._body()
        except (ValueError, KeyError):
            self._reply(400, {"error": "malformed body"})
            return
        try:
            if path == "/register":
                entry = self.registry.register(rec)
                self._reply(200, {"registered": entry.run_id})
            elif path == "/heartbeat":
                ok = self.registry.heartbeat(str(rec.get("run_id", "")))
                self._reply(200 if ok else 404,
                            {"ok": ok} if ok else {"error": "unknown run"})
            elif path == "/deregister":
                ok = self.registry.deregister(str(rec.get("run_id", "")))
                self._reply(200, {"ok": ok})
            else:
                self._reply(404, {"error": "unknown path"})
        except (KeyError, TypeError, ValueError) as e:
            self._reply(400, {"error": str(e)})

    def log_message(self, fmt, *args):   # quiet; registry is chatty
        pass


class RegistryServer:
    """HTTP front-end; `serve` blocks, `start` runs in a daemon thread."""

    def __init__(self, host="127.0.0.1", port=0):
        self.registry = Registry()
        handler = type("BoundHandler", (_Handler,),
                       {"registry": self.registry})
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self.host, self.port = self.httpd.server_address[:2]
        self._thread = None

    def start(self):
        self._thread = threading.Thread(target=self.httpd.serve_forever,
                                        name="registry", daemon=True)
        self._thread.start()
        return self

    def serve(self):
        self.httpd.serve_forever()

    def stop(self):
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5.0)


class RegistryClient:
    """Simulation-side announcer. Never raises into the run: an
    unreachable registry is logged once and then ignored."""

    def __init__(self, address: str, run_id: str, payload: dict,
                 heartbeat: float = 10.0):
        self.address = address.rstrip("/")
        if not self.address.startswith("http"):
            self.address = "http://" + self.address
        self.run_id = run_id
        self.payload = dict(payload, run_id=run_id, heartbeat=heartbeat)
        self.heartbeat_interval = heartbeat
        self._stop = threading.Event()
        self._thread = None
        self._warned = False

    def _post(self, path: str, obj: dict) -> bool:
        import urllib.request
        req = urllib.request.Request(
            self.address + path, data=json.dumps(obj).encode(),
            headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=5.0) as resp:
                resp.read()
            return True
        except OSError as e:
            if not self._warned:
                import logging
                logging.getLogger("lbflow.registry").warning(
                    "registry %s unreachable (%s); continuing without it",
                    self.address, e)
                self._warned = True
            return False

    def start(self):
        self._post("/register", self.payload)
        self._thread = threading.Thread(target=self._beat,
                                        name="registry-client", daemon=True)
        self._thread.start()
        return self

    def _beat(self):
        while not self._stop.wait(self.heartbeat_interval):
            self._post("/heartbeat", {"run_id": self.run_id})

    def stop(self):
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
        self._post("/deregister", {"run_id": self.run_id})
