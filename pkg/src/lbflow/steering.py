"""Live steering: wire protocol, session handling, frame streaming.

Wire grammar (the same JSON records travel over both transports):

* TCP (canonical): each message is a u32 little-endian byte count followed
  by that many bytes of UTF-8 JSON encoding one object. After a message of
  type "frame", exactly header["nbytes"] bytes of raw little-endian f32
  payload follow.
* WebSocket: one JSON object per text message; a frame header message is
  followed by one binary message holding the payload. The HTTP server that
  carries the WebSocket endpoint (path /ws) also serves the static console
  and GET /info.

Client -> server: hello, ping, set {name, value}, command {verb}, subscribe
{field, slice|downsample}, unsubscribe {field}, detach.
Server -> client: welcome, pong, ack, error, status, frame.

Sessions are independent; an idle attached client exchanges no state with
the step loop, so the run's trajectory is bit-identical to an unattached
run. Mutations are validated here (type, bounds, mutability) but applied
only by the step loop at the next timestep boundary; the ack carries the
timestep at which the value takes effect. Frame fan-out uses a bounded
per-session queue that drops the oldest frame rather than block the loop.
"""

from __future__ import annotations

import asyncio
import json
import logging
import struct
import threading
from dataclasses import dataclass
from http import HTTPStatus
from pathlib import Path

import numpy as np

log = logging.getLogger("lbflow.steering")

MAX_MESSAGE = 1 << 20
OUTBOX_DEPTH = 8     # frames buffered per session before drop-oldest

_MIME = {".html": "text/html; charset=utf-8",
         ".js": "text/javascript", ".mjs": "text/javascript",
         ".css": "text/css", ".map": "application/json",
         ".json": "application/json", ".png": "image/png",
         ".svg": "image/svg+xml", ".ico": "image/x-icon"}


@dataclass
class SteerableParam:
    """One live-tunable knob. get/set close over the owning config object;
    only the step loop calls set."""
    name: str
    kind: str            # "int" | "real" | "enum"
    lo: float
    hi: float
    get: callable
    set: callable
    mutable: bool = True
    choices: tuple = ()

    def describe(self) -> dict:
        d = {"name": self.name, "kind": self.kind, "value": self.get(),
             "mutable": self.mutable, "lo": self.lo, "hi": self.hi}
        if self.choices:
            d["choices"] = list(self.choices)
        return d

    def validate(self, value):
        """Returns the coerced value or raises ValueError."""
        if not self.mutable:
            raise ValueError(f"{self.name} is immutable")
        if self.kind == "int":
            if not (isinstance(value, int)
                    or (isinstance(value, float) and value.is_integer())):
                raise ValueError(f"{self.name} takes an integer")
            value = int(value)
        elif self.kind == "real":
            if not isinstance(value, (int, float)):
                raise ValueError(f"{self.name} takes a number")
            value = float(value)
        elif self.kind == "enum":
            if value not in self.choices:
                raise ValueError(f"{self.name} must be one of "
                                 f"{self.choices}")
            return value
        if not (self.lo <= value <= self.hi):
            raise ValueError(f"{self.name}={value} outside "
                             f"[{self.lo}, {self.hi}]")
        return value


@dataclass
class Command:
    verb: str            # "set" | "pause" | "resume" | "stop" | ...
    args: dict
    session: "Session"


def canonical_param(name):
    """Coupling names g:<a>:<b> mean the same knob in either order."""
    if isinstance(name, str) and name.startswith("g:"):
        parts = name.split(":")
        if len(parts) == 3:
            a, b = sorted(parts[1:])
            return f"g:{a}:{b}"
    return name


def encode_message(obj: dict) -> bytes:
    data = json.dumps(obj, separators=(",", ":")).encode("utf-8")
    return struct.pack("<I", len(data)) + data


def decode_messages(buf: bytearray):
    """Yields decoded objects from a growing byte buffer, consuming them."""
    while len(buf) >= 4:
        (n,) = struct.unpack_from("<I", buf)
        if n > MAX_MESSAGE:
            raise ValueError(f"message of {n} bytes exceeds limit")
        if len(buf) < 4 + n:
            return
        data = bytes(buf[4:4 + n])
        del buf[:4 + n]
        yield json.loads(data.decode("utf-8"))


class Session:
    """One attached client, transport-agnostic: `sender(header, payload)`
    ships a JSON record and optional binary payload."""

    _next_id = 0

    def __init__(self, service, sender):
        Session._next_id += 1
        self.ident = Session._next_id
        self.service = service
        self._sender = sender
        self.subscriptions = {}   # field -> spec dict
        self.outbox = asyncio.Queue()
        self.alive = True

    # called from the service event loop
    def post(self, header: dict, payload: bytes | None = None):
        if self.outbox.qsize() >= OUTBOX_DEPTH:
            try:
                self.outbox.get_nowait()   # drop oldest, never block
            except asyncio.QueueEmpty:
                pass
        self.outbox.put_nowait((header, payload))

    # called from the runner thread
    def post_threadsafe(self, header, payload=None):
        self.service.loop.call_soon_threadsafe(self.post, header, payload)

    async def drain(self):
        while True:
            header, payload = await self.outbox.get()
            await self._sender(header, payload)

    def handle(self, msg: dict):
        """Decode one client record; returns an immediate reply dict or
        None when the reply will come from the loop later."""
        svc = self.service
        mtype = msg.get("type")
        if mtype == "hello":
            return {"type": "welcome", **svc.state_view(),
                    "protocol": 1}
        if mtype == "ping":
            return {"type": "pong", "timestep": svc.state_view()["timestep"]}
        if mtype == "detach":
            self.alive = False
            return {"type": "ack", "cmd": "detach"}
        if mtype == "set":
            name = canonical_param(msg.get("name"))
            param = svc.params.get(name)
            if param is None:
                return {"type": "error", "cmd": "set", "name": name,
                        "reason": f"unknown parameter {name!r}"}
            try:
                value = param.validate(msg.get("value"))
            except ValueError as e:
                return {"type": "error", "cmd": "set", "name": name,
                        "reason": str(e)}
            svc.commands.put(Command("set", {"name": name, "value": value},
                                     self))
            return None
        if mtype == "command":
            verb = msg.get("verb")
            if verb not in ("pause", "resume", "stop", "checkpoint", "emit"):
                return {"type": "error", "cmd": verb,
                        "reason": f"unknown command {verb!r}"}
            svc.commands.put(Command(verb, {}, self))
            return None
        if mtype == "subscribe":
            return self._subscribe(msg)
        if mtype == "unsubscribe":
            self.subscriptions.pop(msg.get("field"), None)
            return {"type": "ack", "cmd": "unsubscribe",
                    "field": msg.get("field")}
        return {"type": "error", "reason": f"unknown message type {mtype!r}"}

    def _subscribe(self, msg):
        field = msg.get("field")
        state = self.service.state_view()
        if field not in state["fields"]:
            return {"type": "error", "cmd": "subscribe", "field": field,
                    "reason": f"unknown field {field!r}; have "
                              f"{state['fields']}"}
        nx, ny, nz = state["dims"]
        spec = {}
        if "slice" in msg:
            sl = msg["slice"] or {}
            axis = sl.get("axis", "z")
            index = sl.get("index", 0)
            if axis not in ("x", "y", "z"):
                return {"type": "error", "cmd": "subscribe",
                        "reason": f"bad slice axis {axis!r}"}
            lim = {"x": nx, "y": ny, "z": nz}[axis]
            if not isinstance(index, int) or not (0 <= index < lim):
                return {"type": "error", "cmd": "subscribe",
                        "reason": f"slice index {index} outside 0..{lim - 1}"}
            spec = {"kind": "slice", "axis": axis, "index": index}
        elif "downsample" in msg:
            k = msg["downsample"]
            if not isinstance(k, int) or k < 1:
                return {"type": "error", "cmd": "subscribe",
                        "reason": f"bad downsample factor {k!r}"}
            spec = {"kind": "volume", "step": k}
        else:
            spec = {"kind": "slice", "axis": "z", "index": 0}
        self.subscriptions[field] = spec
        return {"type": "ack", "cmd": "subscribe", "field": field, **spec}


def extract_frame(field_name, flat, dims, spec):
    """Cut the subscribed view out of a snapshot volume. Returns
    (header dict, payload bytes, f32 little-endian)."""
    nx, ny, nz = dims
    vol = flat.reshape(nz, ny, nx)
    if spec["kind"] == "slice":
        axis, index = spec["axis"], spec["index"]
        if axis == "z":
            img = vol[index]
        elif axis == "y":
            img = vol[:, index, :]
        else:
            img = vol[:, :, index]
        data = np.ascontiguousarray(img, dtype="<f4")
        header = {"type": "frame", "field": field_name, "kind": "slice",
                  "axis": axis, "index": index,
                  "shape": list(data.shape), "dtype": "f32"}
    else:
        k = spec["step"]
        sub = np.ascontiguousarray(vol[::k, ::k, ::k], dtype="<f4")
        data = sub
        header = {"type": "frame", "field": field_name, "kind": "volume",
                  "step": k, "shape": list(data.shape), "dtype": "f32"}
    payload = data.tobytes()
    header["nbytes"] = len(payload)
    return header, payload


class SteeringService:
    """Socket front-end for one running simulation.

    Owns no physics state: reads flow through `state_view` (a callable the
    runner provides, snapshotting status/params), writes flow through the
    command queue the runner drains at each timestep boundary.
    """

    def __init__(self, steer_cfg, state_view, commands, params,
                 console_dir=None):
        self.cfg = steer_cfg
        self.state_view = state_view
        self.commands = commands
        self.params = params
        self.console_dir = Path(console_dir) if console_dir else None
        self.sessions = set()
        self.loop = None
        self._thread = None
        self._ready = threading.Event()
        self._stop = None
        self.tcp_port = None
        self.http_port = None
        self.start_error = None

    # -- lifecycle ---------------------------------------------------------

    def start(self, timeout=10.0):
        self._thread = threading.Thread(target=self._run_loop,
                                        name="steering", daemon=True)
        self._thread.start()
        if not self._ready.wait(timeout):
            raise RuntimeError("steering service failed to start")
        if self.start_error is not None:
            raise self.start_error
        return self

    def stop(self):
        if self.loop is not None and self._stop is not None:
            self.loop.call_soon_threadsafe(self._stop.set)
            self._thread.join(timeout=5.0)

    def _run_loop(self):
        try:
            asyncio.run(self._serve())
        except Exception as e:    # surface bind errors to the caller
            self.start_error = e
            self._ready.set()

    async def _serve(self):
        self.loop = asyncio.get_running_loop()
        self._stop = asyncio.Event()
        host = self.cfg.host
        tcp_server = await asyncio.start_server(
            self._tcp_client, host, self.cfg.port)
        self.tcp_port = tcp_server.sockets[0].getsockname()[1]
        ws_server = None
        if self.cfg.http_port:
            from websockets.asyncio.server import serve as ws_serve
            port = self.cfg.http_port
            ws_server = await ws_serve(
                self._ws_client, host, 0 if port < 0 else port,
                process_request=self._http_request)
            self.http_port = ws_server.sockets[0].getsockname()[1]
        self._ready.set()
        try:
            await self._stop.wait()
        finally:
            tcp_server.close()
            await tcp_server.wait_closed()
            if ws_server is not None:
                ws_server.close()
                await ws_server.wait_closed()

    # -- transports ----------------------------------------------------------

    async def _tcp_client(self, reader, writer):
        async def send(header, payload):
            writer.write(encode_message(header))
            if payload is not None:
                writer.write(payload)
            await writer.drain()

        session = Session(self, send)
        self.sessions.add(session)
        drainer = asyncio.ensure_future(session.drain())
        try:
            buf = bytearray()
            while session.alive:
                chunk = await reader.read(65536)
                if not chunk:
                    break
                buf.extend(chunk)
                for msg in decode_messages(buf):
                    reply = session.handle(msg)
                    if reply is not None:
                        session.post(reply)
        except (ConnectionError, ValueError, json.JSONDecodeError) as e:
            log.debug("session %d dropped: %s", session.ident, e)
        finally:
            self.sessions.discard(session)
            drainer.cancel()
            writer.close()

    async def _ws_client(self, ws):
        if ws.request.path not in ("/ws", "/"):
            await ws.close(code=4004, reason="unknown path")
            return

        async def send(header, payload):
            await ws.send(json.dumps(header, separators=(",", ":")))
            if payload is not None:
                await ws.send(payload)

        session = Session(self, send)
        self.sessions.add(session)
        drainer = asyncio.ensure_future(session.drain())
        try:
            async for raw in ws:
                if isinstance(raw, bytes):
                    continue
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError:
                    session.post({"type": "error",
                                  "reason": "malformed JSON"})
                    continue
                reply = session.handle(msg)
                if reply is not None:
                    session.post(reply)
                if not session.alive:
                    break
        except Exception as e:
            log.debug("ws session %d dropped: %s", session.ident, e)
        finally:
            self.sessions.discard(session)
            drainer.cancel()

    def _http_request(self, connection, request):
        """Plain HTTP on the WebSocket port: /info for discovery, anything
        else from the static console directory."""
        from websockets.datastructures import Headers
        from websockets.http11 import Response

        path = request.path.split("?", 1)[0]
        if path in ("/ws",) or "Upgrade" in request.headers.get(
                "Connection", ""):
            return None
        if path == "/info":
            body = json.dumps(self.state_view()).encode()
            return Response(200, "OK", Headers([
                ("Content-Type", "application/json"),
                ("Access-Control-Allow-Origin", "*"),
                ("Content-Length", str(len(body)))]), body)
        if self.console_dir is None:
            return Response(404, "Not Found", Headers(), b"no console\n")
        if path == "/":
            path = "/index.html"
        target = (self.console_dir / path.lstrip("/")).resolve()
        try:
            target.relative_to(self.console_dir.resolve())
        except ValueError:
            return Response(403, "Forbidden", Headers(), b"")
        if not target.is_file():
            return Response(404, "Not Found", Headers(), b"not found\n")
        body = target.read_bytes()
        ctype = _MIME.get(target.suffix, "application/octet-stream")
        return Response(200, "OK", Headers([
            ("Content-Type", ctype),
            ("Content-Length", str(len(body)))]), body)

    # -- called by the runner thread -----------------------------------------

    def reply(self, session, payload: dict):
        if session is not None and session.alive:
            session.post_threadsafe(payload)

    def broadcast(self, payload: dict):
        if self.loop is None:
            return
        for s in list(self.sessions):
            s.post_threadsafe(payload)

    def publish_frames(self, timestep: int, fields: dict, dims):
        """Fan a post-step snapshot out to every subscription. fields maps
        name -> flat f64 copy owned by nobody else."""
        if self.loop is None:
            return
        for s in list(self.sessions):
            for fname, spec in list(s.subscriptions.items()):
                flat = fields.get(fname)
                if flat is None:
                    continue
                header, payload = extract_frame(fname, flat, dims, spec)
                header["timestep"] = timestep
                s.post_threadsafe(header, payload)

    def subscribed_fields(self):
        out = set()
        for s in list(self.sessions):
            out.update(s.subscriptions.keys())
        return out


# -- plain blocking client (tests, scripts) -----------------------------------


class SteerClient:
    """Minimal synchronous TCP client speaking the protocol above."""

    def __init__(self, host, port, timeout=10.0):
        import socket
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self._buf = bytearray()

    def send(self, obj: dict):
        self.sock.sendall(encode_message(obj))

    def _fill(self):
        chunk = self.sock.recv(65536)
        if not chunk:
            raise ConnectionError("server closed")
        self._buf.extend(chunk)

    def recv(self) -> dict:
        while True:
            for msg in decode_messages(self._buf):
                return msg
            self._fill()

    def recv_payload(self, nbytes: int) -> bytes:
        while len(self._buf) < nbytes:
            self._fill()
        out = bytes(self._buf[:nbytes])
        del self._buf[:nbytes]
        return out

    def request(self, obj: dict) -> dict:
        self.send(obj)
        return self.recv()

    def wait_for(self, **match) -> dict:
        """Reads messages (skipping frame payloads) until one carries every
        key=value in `match`."""
        while True:
            msg = self.recv()
            if msg.get("type") == "frame" and not all(
                    msg.get(k) == v for k, v in match.items()):
                self.recv_payload(msg["nbytes"])
                continue
            if all(msg.get(k) == v for k, v in match.items()):
                return msg

    def close(self):
        self.sock.close()
