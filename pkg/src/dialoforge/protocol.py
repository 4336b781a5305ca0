"""Newline-delimited JSON wire protocol for external NLU/NLG components.

Handshake: {"op": "hello"} -> {"name": <text>, "roles": ["nlu", "nlg"]}.
Requests carry monotonically increasing ids:

    {"id": 3, "op": "nlu", "utterance": "..."}      -> {"id": 3, "result": {...}}
    {"id": 4, "op": "nlg", "frame": "inform(...)"}  -> {"id": 4, "result": {...}}

Errors come back as {"id": n, "error": "..."}. A request is retried once on
an id mismatch or malformed reply before the caller falls back to the
template components.
"""

from __future__ import annotations

import json
import logging
import queue
import socket
import subprocess
import threading

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 10.0


class ProtocolError(RuntimeError):
    pass


class _StdioTransport:
    """Child process speaking the protocol on its standard streams."""

    def __init__(self, cmd):
        self.proc = subprocess.Popen(
            cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True,
            bufsize=1,
        )
        self._lines = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def send(self, obj):
        if self.proc.poll() is not None:
            raise ProtocolError("component process exited")
        self.proc.stdin.write(json.dumps(obj) + "\n")
        self.proc.stdin.flush()

    def recv(self, timeout):
        try:
            line = self._lines.get(timeout=timeout)
        except queue.Empty:
            raise ProtocolError("timed out waiting for component reply")
        if line is None:
            raise ProtocolError("component closed its output stream")
        return line

    def close(self):
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self.proc.kill()


class _TcpTransport:
    def __init__(self, host, port):
        self.sock = socket.create_connection((host, port), timeout=DEFAULT_TIMEOUT)
        self._reader = self.sock.makefile("r", encoding="utf-8")
        self._writer = self.sock.makefile("w", encoding="utf-8")

    def send(self, obj):
        self._writer.write(json.dumps(obj) + "\n")
        self._writer.flush()

    def recv(self, timeout):
        self.sock.settimeout(timeout)
        try:
            line = self._reader.readline()
        except (TimeoutError, socket.timeout):
            raise ProtocolError("timed out waiting for component reply")
        if not line:
            raise ProtocolError("component closed the connection")
        return line

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass


class ComponentEndpoint:
    """A connected component bound to one role (nlu or nlg)."""

    def __init__(self, role, transport, name, timeout=DEFAULT_TIMEOUT):
        self.role = role
        self.transport = transport
        self.negotiated_name = name
        self.timeout = timeout
        self._next_id = 0

    def _request_once(self, payload):
        self._next_id += 1
        request_id = self._next_id
        self.transport.send({"id": request_id, "op": self.role, **payload})
        line = self.transport.recv(self.timeout)
        try:
            reply = json.loads(line)
        except json.JSONDecodeError:
            raise ProtocolError(f"malformed component reply: {line!r}")
        if reply.get("id") != request_id:
            raise ProtocolError(
                f"reply id {reply.get('id')!r} does not match request {request_id}"
            )
        if "error" in reply:
            raise ProtocolError(f"component error: {reply['error']}")
        if "result" not in reply:
            raise ProtocolError(f"reply has neither result nor error: {reply!r}")
        return reply["result"]

    def call(self, payload):
        """One request with a single retry before giving up."""
        try:
            return self._request_once(payload)
        except ProtocolError as exc:
            log.warning("component %s request failed (%s); retrying once",
                        self.negotiated_name, exc)
            return self._request_once(payload)

    def close(self):
        self.transport.close()


def _open_transport(endpoint_spec):
    transport = endpoint_spec.get("transport", "stdio")
    if transport == "stdio":
        return _StdioTransport(endpoint_spec["cmd"])
    if transport == "tcp":
        return _TcpTransport(endpoint_spec["host"], endpoint_spec["port"])
    raise ValueError(f"unknown transport {transport!r}")


def connect_component(endpoint_spec, role, timeout=DEFAULT_TIMEOUT):
    """Open the transport, run the hello handshake, and validate the role."""
    if role not in ("nlu", "nlg"):
        raise ValueError(f"role must be nlu or nlg, got {role!r}")
    transport = _open_transport(endpoint_spec)
    try:
        transport.send({"op": "hello"})
        line = transport.recv(timeout)
        try:
            hello = json.loads(line)
        except json.JSONDecodeError:
            raise ProtocolError(f"malformed hello reply: {line!r}")
        roles = hello.get("roles", [])
        if role not in roles:
            raise ProtocolError(
                f"component {hello.get('name')!r} does not advertise role {role!r}"
            )
        return ComponentEndpoint(role, transport, hello.get("name", "component"),
                                 timeout)
    except Exception:
        transport.close()
        raise
