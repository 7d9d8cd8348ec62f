"""Network front of the backend: the SBD TCP listener and the JSON/HTTP API.

Endpoints:
    GET  /health
    GET  /records?since=SEQ&limit=N
    GET  /stream                  (server-sent events, one record per push)
    GET  /prediction/{seed}
    POST /command                 {"command": ..., "target": ..., "issued_by": ...}
    GET  /command/{id}
    GET  /commands
    POST /ingest/{channel}        raw frame bytes (rxsm | lora-test)
    GET  /uplink?since=N&wait=S   long-poll for signed uplink frames
"""
from __future__ import annotations

import json
import mimetypes
import os
import queue
import socket
import socketserver
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from ..errors import InsufficientData, PhaseError
from .core import Backend, CHANNELS


class _SbdServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class _SbdHandler(socketserver.BaseRequestHandler):
    def handle(self):
        backend: Backend = self.server.backend

        def read(n: int) -> bytes:
            buf = b""
            while len(buf) < n:
                chunk = self.request.recv(n - len(buf))
                if not chunk:
                    break
                buf += chunk
            return buf

        backend.handle_sbd_connection(read)


class _ApiHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    backend: Backend = None
    static_dir: str = None

    def log_message(self, fmt, *args):  # quiet by default
        pass

    # -- helpers -------------------------------------------------------------

    def _json(self, status: int, obj) -> None:
        body = json.dumps(obj).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _read_body(self) -> bytes:
        length = int(self.headers.get("Content-Length", 0))
        return self.rfile.read(length)

    # -- routes --------------------------------------------------------------

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        url = urlparse(self.path)
        parts = [p for p in url.path.split("/") if p]
        query = {k: v[-1] for k, v in parse_qs(url.query).items()}
        if url.path == "/health":
            return self._json(200, self.backend.health())
        if url.path == "/records":
            since = int(query.get("since", 0))
            limit = int(query.get("limit", 500))
            records = self.backend.store.records_since(since, limit)
            next_since = records[-1]["sequence"] + 1 if records else since
            return self._json(200, {"records": records, "next_since": next_since})
        if url.path == "/stream":
            return self._stream()
        if len(parts) == 2 and parts[0] == "prediction":
            try:
                pred = self.backend.prediction(int(parts[1]))
            except (InsufficientData, ValueError) as exc:
                return self._json(404, {"error": str(exc)})
            return self._json(200, pred.to_dict())
        if len(parts) == 2 and parts[0] == "command":
            try:
                cmd = self.backend.command_status(int(parts[1]))
            except (KeyError, ValueError):
                return self._json(404, {"error": "unknown command id"})
            return self._json(200, cmd.to_dict())
        if url.path == "/commands":
            return self._json(200, {"commands": self.backend.commands()})
        if url.path == "/uplink":
            since = int(query.get("since", 0))
            wait = float(query.get("wait", 0.0))
            frames = self.backend.uplink_since(since, wait)
            next_since = frames[-1]["seq"] + 1 if frames else since
            return self._json(200, {"frames": frames, "next_since": next_since})
        if self.static_dir:
            return self._static(url.path)
        return self._json(404, {"error": f"no route {url.path}"})

    def do_POST(self):
        url = urlparse(self.path)
        parts = [p for p in url.path.split("/") if p]
        if url.path == "/command":
            try:
                body = json.loads(self._read_body() or b"{}")
            except json.JSONDecodeError:
                return self._json(400, {"error": "body must be JSON"})
            try:
                req = self.backend.dispatch_command(
                    body.get("command", ""), body.get("target", ""),
                    issued_by=body.get("issued_by", "operator"))
            except PhaseError as exc:
                return self._json(409, {"error": "PhaseError", "detail": str(exc)})
            except ValueError as exc:
                return self._json(400, {"error": str(exc)})
            return self._json(201, req.to_dict())
        if len(parts) == 2 and parts[0] == "ingest":
            channel = parts[1]
            if channel not in CHANNELS:
                return self._json(400, {"error": f"unknown channel {channel!r}"})
            record = self.backend.ingest_frame(self._read_body(), channel)
            status = 200 if "error" not in record else 202  # quarantined but stored
            return self._json(status, {"sequence": record["sequence"],
                                       "error": record.get("error")})
        return self._json(404, {"error": f"no route {url.path}"})

    # -- server-sent events ----------------------------------------------------

    def _stream(self):
        q = self.backend.store.subscribe()

        def chunk(data: bytes) -> None:
            self.wfile.write(f"{len(data):X}\r\n".encode() + data + b"\r\n")
            self.wfile.flush()

        try:
            self.send_response(200)
            self.send_header("Content-Type", "text/event-stream")
            self.send_header("Cache-Control", "no-cache")
            self.send_header("Transfer-Encoding", "chunked")
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            chunk(b": connected\n\n")
            while True:
                try:
                    record = q.get(timeout=15.0)
                except queue.Empty:
                    chunk(b": keepalive\n\n")
                    continue
                chunk(b"data: " + json.dumps(record).encode() + b"\n\n")
        except (BrokenPipeError, ConnectionResetError):
            pass
        finally:
            self.backend.store.unsubscribe(q)

    # -- static frontend --------------------------------------------------------

    def _static(self, path: str):
        rel = path.lstrip("/") or "index.html"
        full = os.path.realpath(os.path.join(self.static_dir, rel))
        if not full.startswith(os.path.realpath(self.static_dir)) or not os.path.isfile(full):
            return self._json(404, {"error": f"no route {path}"})
        ctype = mimetypes.guess_type(full)[0] or "application/octet-stream"
        with open(full, "rb") as fh:
            body = fh.read()
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


class BackendHandle:
    """Running servers plus their bound ports; use as a context manager."""

    def __init__(self, backend: Backend, http_server, sbd_server):
        self.backend = backend
        self.http_server = http_server
        self.sbd_server = sbd_server
        self.http_port = http_server.server_address[1]
        self.sbd_port = sbd_server.server_address[1]

    def close(self) -> None:
        self.http_server.shutdown()
        self.sbd_server.shutdown()
        self.http_server.server_close()
        self.sbd_server.server_close()
        self.backend.store.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def serve(backend: Backend, http_port: int = 8300, sbd_port: int = 8301,
          host: str = "127.0.0.1", static_dir: str = None) -> BackendHandle:
    """Start the HTTP API and the SBD TCP listener on daemon threads."""
    handler = type("BoundApiHandler", (_ApiHandler,),
                   {"backend": backend, "static_dir": static_dir})
    http_server = ThreadingHTTPServer((host, http_port), handler)
    http_server.daemon_threads = True
    sbd_server = _SbdServer((host, sbd_port), _SbdHandler)
    sbd_server.backend = backend
    threading.Thread(target=http_server.serve_forever, daemon=True).start()
    threading.Thread(target=sbd_server.serve_forever, daemon=True).start()
    return BackendHandle(backend, http_server, sbd_server)


def send_sbd_over_tcp(host: str, port: int, payload: bytes) -> None:
    """Client helper: wrap one SBD payload in the wire header and send it."""
    import struct as _struct
    from .core import SBD_MAGIC
    with socket.create_connection((host, port), timeout=10.0) as sock:
        sock.sendall(_struct.pack("<HH", SBD_MAGIC, len(payload)) + payload)
