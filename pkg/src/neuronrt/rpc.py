"""JSON-RPC 2.0 endpoint in front of the orchestrator.

Two transports serve the same method table:

  stdio   Content-Length framed messages on stdin/stdout, one client.
  TCP     per-connection sniff: an HTTP "GET " upgrade becomes a WebSocket
          (RFC 6455, text frames, one message per frame); anything else is
          newline-delimited JSON.

Methods:

  tools/list        -> {"revision", "tools"}
  tools/call        {"name", "arguments"?} -> tool result
  status/nodes      -> {"nodes"}
  status/topics     -> {"topics", "services"}
  topics/tap        {"topic"} -> {"tap_id"}; envelopes then stream as
                    "topics/envelope" notifications until untapped
  topics/untap      {"tap_id"} -> {"stopped"}
  session/run       {"instruction"} -> session transcript; step records
                    stream as "session/step" notifications while it runs.
                    Runs off-thread and replies by id on completion, so
                    the connection stays responsive to other calls (an
                    emergency stop can interleave with a running session)

Tool failures map onto JSON-RPC errors with the tool error table's codes;
data.code carries the symbolic name. Byte payloads (camera frames) travel
base64-encoded via the shared JSON fallback.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import queue
import socket
import struct
import threading

from .errors import NeuronError, UnknownTopicError
from .orchestrator import INTERNAL, RPC_CODES, ToolCallError
from .wire import json_default

PARSE_ERROR = -32700
INVALID_REQUEST = -32600
METHOD_NOT_FOUND = -32601
INVALID_PARAMS = -32602

# returned by a handler that owns its own (later) reply
_DEFERRED = object()
INTERNAL_ERROR = -32603

_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"
_MAX_MESSAGE = 64 * 1024 * 1024


def _dumps(doc: dict) -> bytes:
    return json.dumps(doc, separators=(",", ":"),
                      default=json_default).encode("utf-8")


class RpcError(Exception):
    """Error response surfaced to a client."""

    def __init__(self, code: int, message: str, data=None):
        super().__init__(message)
        self.code = code
        self.data = data


# ------------------------------------------------------------------ server

class _Connection:
    """One client: serialized writes plus the taps it owns."""

    def __init__(self, send_doc):
        self._send_doc = send_doc
        self._lock = threading.Lock()
        self.taps: dict[str, "_Tap"] = {}
        self.closed = False

    def send(self, doc: dict) -> None:
        with self._lock:
            if not self.closed:
                self._send_doc(doc)

    def notify(self, method: str, params: dict) -> None:
        try:
            self.send({"jsonrpc": "2.0", "method": method, "params": params})
        except OSError:
            self.closed = True

    def close(self) -> None:
        self.closed = True
        for tap in list(self.taps.values()):
            tap.stop()
        self.taps.clear()


class _Tap:
    """Pumps one topic subscription into notifications on a connection."""

    def __init__(self, tap_id: str, topic: str, bus, connection: _Connection):
        self.tap_id = tap_id
        self.topic = topic
        self._bus = bus
        self._connection = connection
        self._sub = bus.subscribe(topic)
        self._thread = threading.Thread(target=self._pump, daemon=True,
                                        name=f"rpc-{tap_id}")
        self._thread.start()

    def _pump(self) -> None:
        while not self._connection.closed:
            envelope = self._sub.get(timeout=0.2)
            if envelope is None:
                if self._sub.closed:
                    break
                continue
            params = envelope.as_dict()
            params["tap_id"] = self.tap_id
            self._connection.notify("topics/envelope", params)

    def stop(self) -> None:
        self._bus.unsubscribe(self._sub)


class RpcServer:
    """Transport-independent dispatch over one orchestrator."""

    def __init__(self, orchestrator):
        self.orchestrator = orchestrator
        self._tap_seq = 0
        self._lock = threading.Lock()
        self._methods = {
            "tools/list": self._tools_list,
            "tools/call": self._tools_call,
            "status/nodes": self._status_nodes,
            "status/topics": self._status_topics,
            "topics/tap": self._topics_tap,
            "topics/untap": self._topics_untap,
            "session/run": self._session_run,
        }

    # one inbound message -> zero or one response docs
    def handle(self, doc, connection: _Connection):
        if not isinstance(doc, dict) or doc.get("jsonrpc") != "2.0" \
                or not isinstance(doc.get("method"), str):
            return _error_doc(None, INVALID_REQUEST, "not a JSON-RPC 2.0 request")
        request_id = doc.get("id")
        params = doc.get("params") or {}
        if not isinstance(params, dict):
            return _error_doc(request_id, INVALID_PARAMS,
                              "params must be an object")
        method = self._methods.get(doc["method"])
        if method is None:
            return _error_doc(request_id, METHOD_NOT_FOUND,
                              f"unknown method {doc['method']!r}")
        try:
            result = method(params, connection, request_id)
        except ToolCallError as e:
            data = {"code": e.code}
            if e.data:
                data.update(e.data)
            return _error_doc(request_id, e.rpc_code, str(e), data)
        except RpcError as e:
            return _error_doc(request_id, e.code, str(e), e.data)
        except NeuronError as e:
            return _error_doc(request_id, RPC_CODES[INTERNAL], str(e),
                              {"code": INTERNAL})
        except Exception as e:  # noqa: BLE001 - a bad call must not kill the loop
            return _error_doc(request_id, RPC_CODES[INTERNAL],
                              f"{type(e).__name__}: {e}", {"code": INTERNAL})
        if result is _DEFERRED or request_id is None:
            return None
        return {"jsonrpc": "2.0", "id": request_id, "result": result}

    # --- methods ----------------------------------------------------------

    def _tools_list(self, params, connection, request_id):
        return self.orchestrator.registry.catalog()

    def _tools_call(self, params, connection, request_id):
        name = params.get("name")
        if not isinstance(name, str):
            raise RpcError(INVALID_PARAMS, "tools/call needs a tool name")
        return self.orchestrator.call_tool(name, params.get("arguments"))

    def _status_nodes(self, params, connection, request_id):
        return {"nodes": self.orchestrator.status_nodes()}

    def _status_topics(self, params, connection, request_id):
        return {"topics": self.orchestrator.status_topics(),
                "services": self.orchestrator.bus.service_info()}

    def _topics_tap(self, params, connection, request_id):
        topic = params.get("topic")
        if not isinstance(topic, str):
            raise RpcError(INVALID_PARAMS, "topics/tap needs a topic")
        with self._lock:
            self._tap_seq += 1
            tap_id = f"tap-{self._tap_seq}"
        try:
            tap = _Tap(tap_id, topic, self.orchestrator.bus, connection)
        except UnknownTopicError as e:
            raise RpcError(RPC_CODES["CAPABILITY_ERROR"], str(e),
                           {"code": "CAPABILITY_ERROR"}) from e
        connection.taps[tap_id] = tap
        return {"tap_id": tap_id, "topic": topic}

    def _topics_untap(self, params, connection, request_id):
        tap = connection.taps.pop(params.get("tap_id"), None)
        if tap is None:
            return {"stopped": False}
        tap.stop()
        return {"stopped": True}

    def _session_run(self, params, connection, request_id):
        instruction = params.get("instruction")
        if not isinstance(instruction, str):
            raise RpcError(INVALID_PARAMS, "session/run needs an instruction")

        def on_step(record):
            connection.notify("session/step", {
                "instruction": instruction, "step": record.as_dict()})

        # Sessions run off-thread and reply by id when done, so the
        # connection keeps dispatching (an emergency stop must be able to
        # interleave with a running session on the same socket). The
        # session always runs to completion; a dead peer only loses the
        # reply, never the cleanup.
        def work():
            try:
                transcript = self.orchestrator.run_session(instruction, on_step)
                reply = {"jsonrpc": "2.0", "id": request_id,
                         "result": transcript.as_dict()}
            except Exception as e:  # noqa: BLE001 - reply, never unwind
                reply = _error_doc(request_id, RPC_CODES[INTERNAL],
                                   f"{type(e).__name__}: {e}",
                                   {"code": INTERNAL})
            if request_id is not None:
                try:
                    connection.send(reply)
                except OSError:
                    pass

        threading.Thread(target=work, daemon=True, name="rpc-session").start()
        return _DEFERRED


def _error_doc(request_id, code: int, message: str, data=None) -> dict:
    error: dict = {"code": code, "message": message}
    if data is not None:
        error["data"] = data
    return {"jsonrpc": "2.0", "id": request_id, "error": error}


# ------------------------------------------------------------------- stdio

def read_framed(stream) -> dict | None:
    """One Content-Length framed JSON doc; None at EOF."""
    length = None
    while True:
        line = stream.readline()
        if not line:
            return None
        line = line.strip()
        if not line:
            break
        if line.lower().startswith(b"content-length:"):
            length = int(line.split(b":", 1)[1])
    if length is None:
        raise RpcError(PARSE_ERROR, "missing Content-Length header")
    body = stream.read(length)
    if len(body) < length:
        return None
    return json.loads(body.decode("utf-8"))


def write_framed(stream, doc: dict) -> None:
    body = _dumps(doc)
    stream.write(b"Content-Length: %d\r\n\r\n" % len(body))
    stream.write(body)
    stream.flush()


def serve_stdio(orchestrator, stdin=None, stdout=None) -> None:
    """Serve one client over Content-Length framed stdio until EOF."""
    stdin = stdin if stdin is not None else _binary(io_in=True)
    stdout = stdout if stdout is not None else _binary(io_in=False)
    server = RpcServer(orchestrator)
    connection = _Connection(lambda doc: write_framed(stdout, doc))
    try:
        while True:
            try:
                doc = read_framed(stdin)
            except (RpcError, json.JSONDecodeError, ValueError) as e:
                connection.send(_error_doc(None, PARSE_ERROR, str(e)))
                continue
            if doc is None:
                break
            response = server.handle(doc, connection)
            if response is not None:
                connection.send(response)
    finally:
        connection.close()


def _binary(io_in: bool):
    import sys
    stream = sys.stdin if io_in else sys.stdout
    return getattr(stream, "buffer", stream)


# --------------------------------------------------------------------- tcp

class TcpRpcServer:
    """Accepts NDJSON and WebSocket clients on one port."""

    def __init__(self, orchestrator, host: str = "127.0.0.1", port: int = 0):
        self.server = RpcServer(orchestrator)
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(8)
        self.host, self.port = self._sock.getsockname()
        self._accept_thread: threading.Thread | None = None
        self._stopping = threading.Event()

    def start(self) -> "TcpRpcServer":
        self._accept_thread = threading.Thread(
            target=self._accept_loop, daemon=True, name="rpc-accept")
        self._accept_thread.start()
        return self

    def _accept_loop(self) -> None:
        while not self._stopping.is_set():
            try:
                client, _ = self._sock.accept()
            except OSError:
                return
            threading.Thread(target=self._serve_client, args=(client,),
                             daemon=True, name="rpc-client").start()

    def _serve_client(self, sock: socket.socket) -> None:
        try:
            head = sock.recv(4, socket.MSG_PEEK)
            if head.startswith(b"GET"):
                self._serve_websocket(sock)
            else:
                self._serve_ndjson(sock)
        except (OSError, ConnectionError, ValueError):
            pass
        finally:
            sock.close()

    def _serve_ndjson(self, sock: socket.socket) -> None:
        reader = sock.makefile("rb")
        connection = _Connection(lambda doc: sock.sendall(_dumps(doc) + b"\n"))
        try:
            for line in reader:
                line = line.strip()
                if not line:
                    continue
                try:
                    doc = json.loads(line)
                except json.JSONDecodeError as e:
                    connection.send(_error_doc(None, PARSE_ERROR, str(e)))
                    continue
                response = self.server.handle(doc, connection)
                if response is not None:
                    connection.send(response)
        finally:
            connection.close()

    def _serve_websocket(self, sock: socket.socket) -> None:
        reader = sock.makefile("rb")
        _websocket_handshake(sock, reader)
        connection = _Connection(
            lambda doc: sock.sendall(_ws_frame(0x1, _dumps(doc))))
        try:
            while True:
                opcode, payload = _ws_read_message(reader)
                if opcode == 0x8:   # close
                    sock.sendall(_ws_frame(0x8, payload[:2]))
                    return
                if opcode == 0x9:   # ping
                    sock.sendall(_ws_frame(0xA, payload))
                    continue
                if opcode != 0x1:
                    continue
                try:
                    doc = json.loads(payload.decode("utf-8"))
                except (json.JSONDecodeError, UnicodeDecodeError) as e:
                    connection.send(_error_doc(None, PARSE_ERROR, str(e)))
                    continue
                response = self.server.handle(doc, connection)
                if response is not None:
                    connection.send(response)
        finally:
            connection.close()

    def shutdown(self) -> None:
        self._stopping.set()
        try:
            self._sock.close()
        except OSError:
            pass


# ------------------------------------------------------------ websocket io

def _websocket_handshake(sock: socket.socket, reader) -> None:
    request = bytearray()
    while not request.endswith(b"\r\n\r\n"):
        chunk = reader.readline()
        if not chunk:
            raise ConnectionError("websocket handshake cut short")
        request += chunk
    key = None
    for line in request.split(b"\r\n")[1:]:
        if line.lower().startswith(b"sec-websocket-key:"):
            key = line.split(b":", 1)[1].strip().decode("ascii")
    if key is None:
        raise ValueError("not a websocket upgrade: no Sec-WebSocket-Key")
    accept = base64.b64encode(
        hashlib.sha1((key + _WS_GUID).encode("ascii")).digest()).decode("ascii")
    sock.sendall(
        b"HTTP/1.1 101 Switching Protocols\r\n"
        b"Upgrade: websocket\r\n"
        b"Connection: Upgrade\r\n"
        b"Sec-WebSocket-Accept: " + accept.encode("ascii") + b"\r\n\r\n")


def _ws_frame(opcode: int, payload: bytes, mask: bool = False) -> bytes:
    header = bytearray([0x80 | opcode])
    mask_bit = 0x80 if mask else 0
    n = len(payload)
    if n < 126:
        header.append(mask_bit | n)
    elif n < 1 << 16:
        header.append(mask_bit | 126)
        header += struct.pack(">H", n)
    else:
        header.append(mask_bit | 127)
        header += struct.pack(">Q", n)
    if mask:
        key = os.urandom(4)
        header += key
        payload = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
    return bytes(header) + payload


def _ws_read_exactly(reader, n: int) -> bytes:
    data = reader.read(n)
    if data is None or len(data) < n:
        raise ConnectionError("websocket stream cut short")
    return data


def _ws_read_message(reader) -> tuple[int, bytes]:
    """One complete message; continuation frames are concatenated."""
    opcode, payload = None, bytearray()
    while True:
        first, second = _ws_read_exactly(reader, 2)
        fin, code = first & 0x80, first & 0x0F
        masked, length = second & 0x80, second & 0x7F
        if length == 126:
            (length,) = struct.unpack(">H", _ws_read_exactly(reader, 2))
        elif length == 127:
            (length,) = struct.unpack(">Q", _ws_read_exactly(reader, 8))
        if length > _MAX_MESSAGE:
            raise ValueError(f"websocket frame too large: {length}")
        key = _ws_read_exactly(reader, 4) if masked else None
        chunk = _ws_read_exactly(reader, length) if length else b""
        if key:
            chunk = bytes(b ^ key[i % 4] for i, b in enumerate(chunk))
        if code in (0x8, 0x9, 0xA):
            return code, bytes(chunk)   # control frames are never fragmented
        if code:
            opcode = code
        payload += chunk
        if fin:
            return opcode or 0x1, bytes(payload)


# ------------------------------------------------------------------ client

class JsonRpcClient:
    """Blocking JSON-RPC client; notifications land on a queue.

    One call in flight at a time, which is all the CLI and tests need.
    """

    def __init__(self, send, close, label: str):
        self._send = send
        self._close = close
        self._label = label
        self._next_id = 0
        self._lock = threading.Lock()
        self._pending: dict[int, queue.Queue] = {}
        self.notifications: queue.Queue = queue.Queue()

    @classmethod
    def connect_tcp(cls, host: str, port: int,
                    timeout: float = 10.0) -> "JsonRpcClient":
        sock = socket.create_connection((host, port), timeout=timeout)
        sock.settimeout(None)
        reader = sock.makefile("rb")
        client = cls(lambda doc: sock.sendall(_dumps(doc) + b"\n"),
                     sock.close, f"tcp://{host}:{port}")

        def pump():
            for line in reader:
                line = line.strip()
                if line:
                    client._dispatch(json.loads(line))
            client._fail_pending("connection closed")

        threading.Thread(target=pump, daemon=True,
                         name="rpc-client-read").start()
        return client

    @classmethod
    def connect_websocket(cls, host: str, port: int, path: str = "/",
                          timeout: float = 10.0) -> "JsonRpcClient":
        sock = socket.create_connection((host, port), timeout=timeout)
        sock.settimeout(None)
        reader = sock.makefile("rb")
        key = base64.b64encode(os.urandom(16))
        sock.sendall(
            b"GET " + path.encode("ascii") + b" HTTP/1.1\r\n"
            b"Host: " + f"{host}:{port}".encode("ascii") + b"\r\n"
            b"Upgrade: websocket\r\nConnection: Upgrade\r\n"
            b"Sec-WebSocket-Key: " + key + b"\r\n"
            b"Sec-WebSocket-Version: 13\r\n\r\n")
        status = reader.readline()
        if b"101" not in status:
            raise ConnectionError(f"websocket upgrade refused: {status!r}")
        while reader.readline() not in (b"\r\n", b""):
            pass
        client = cls(
            lambda doc: sock.sendall(_ws_frame(0x1, _dumps(doc), mask=True)),
            sock.close, f"ws://{host}:{port}")

        def pump():
            try:
                while True:
                    opcode, payload = _ws_read_message(reader)
                    if opcode == 0x8:
                        break
                    if opcode == 0x1:
                        client._dispatch(json.loads(payload.decode("utf-8")))
            except (ConnectionError, OSError, ValueError):
                pass
            client._fail_pending("connection closed")

        threading.Thread(target=pump, daemon=True,
                         name="rpc-client-read").start()
        return client

    @classmethod
    def over_pipes(cls, writer, reader) -> "JsonRpcClient":
        """Client on the parent side of a stdio-served subprocess."""
        lock = threading.Lock()

        def send(doc):
            with lock:
                write_framed(writer, doc)

        client = cls(send, writer.close, "stdio")

        def pump():
            while True:
                try:
                    doc = read_framed(reader)
                except (RpcError, ValueError):
                    continue
                if doc is None:
                    break
                client._dispatch(doc)
            client._fail_pending("stream closed")

        threading.Thread(target=pump, daemon=True,
                         name="rpc-client-read").start()
        return client

    def _dispatch(self, doc: dict) -> None:
        if "id" in doc and doc["id"] is not None:
            with self._lock:
                waiter = self._pending.pop(doc["id"], None)
            if waiter is not None:
                waiter.put(doc)
        else:
            self.notifications.put(doc)

    def _fail_pending(self, reason: str) -> None:
        with self._lock:
            waiters = list(self._pending.values())
            self._pending.clear()
        for waiter in waiters:
            waiter.put({"error": {"code": INTERNAL_ERROR, "message": reason}})

    def call(self, method: str, params: dict | None = None,
             timeout: float = 60.0):
        waiter: queue.Queue = queue.Queue()
        with self._lock:
            self._next_id += 1
            request_id = self._next_id
            self._pending[request_id] = waiter
        self._send({"jsonrpc": "2.0", "id": request_id, "method": method,
                    "params": params or {}})
        try:
            doc = waiter.get(timeout=timeout)
        except queue.Empty:
            with self._lock:
                self._pending.pop(request_id, None)
            raise TimeoutError(
                f"{method} on {self._label}: no reply in {timeout:g}s") from None
        if "error" in doc:
            err = doc["error"]
            raise RpcError(err["code"], err.get("message", ""),
                           err.get("data"))
        return doc["result"]

    def next_notification(self, timeout: float = 5.0) -> dict | None:
        try:
            return self.notifications.get(timeout=timeout)
        except queue.Empty:
            return None

    def close(self) -> None:
        try:
            self._close()
        except OSError:
            pass
