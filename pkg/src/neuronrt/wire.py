"""TCP transport for subprocess nodes.

Frames are a 4-byte big-endian length prefix followed by a UTF-8 JSON
object. Envelopes serialize as {"topic","seq","stamp_ns","type","payload"}.
Control requests are {"op": ..., ...} answered by {"ok": true, ...} or
{"ok": false, "error": <exception class>, "detail": <message>}.

Ops: advertise, subscribe, publish, spawn, stop, status, plus three
extensions: read_latest (parity with the in-process API), and hello/goodbye
(subprocess lifecycle reporting). A connection that sends `subscribe`
becomes a one-way envelope stream; everything else stays request/reply on
the control connection. The port comes from NEURON_BUS_PORT (0 or unset
means ephemeral, printed on startup).
"""

from __future__ import annotations

import base64
import json
import os
import socket
import struct
import threading

from . import errors
from .bus import DEFAULT_QUEUE_CAPACITY, Envelope, MessageBus
from .errors import NeuronError, ServiceCallError

_LEN = struct.Struct(">I")
MAX_FRAME = 64 * 1024 * 1024


def json_default(value):
    """Fallback for payload values JSON cannot carry natively: raw byte
    buffers (uint8[] fields) become base64 text."""
    if isinstance(value, (bytes, bytearray)):
        return base64.b64encode(bytes(value)).decode("ascii")
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def encode_frame(obj) -> bytes:
    data = json.dumps(obj, separators=(",", ":"), default=json_default).encode("utf-8")
    return _LEN.pack(len(data)) + data


class FrameReader:
    """Buffers socket bytes and yields complete frames; a read timeout never
    desyncs the stream because partial frames stay in the buffer."""

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self._buf = bytearray()
        self._eof = False

    def read(self, timeout: float | None = None):
        """One decoded frame; None on timeout; raises ConnectionError at EOF."""
        while True:
            if len(self._buf) >= 4:
                (length,) = _LEN.unpack(bytes(self._buf[:4]))
                if length > MAX_FRAME:
                    raise ConnectionError(f"frame of {length} bytes exceeds limit")
                if len(self._buf) >= 4 + length:
                    data = bytes(self._buf[4:4 + length])
                    del self._buf[:4 + length]
                    return json.loads(data.decode("utf-8"))
            if self._eof:
                raise ConnectionError("connection closed")
            self.sock.settimeout(timeout)
            try:
                chunk = self.sock.recv(65536)
            except (socket.timeout, BlockingIOError):
                return None
            except OSError as e:
                raise ConnectionError(str(e)) from e
            if not chunk:
                self._eof = True
                continue
            self._buf.extend(chunk)


class BusServer:
    """Serves the wire protocol for one MessageBus/NodeRuntime pair."""

    def __init__(self, bus: MessageBus, runtime=None, port: int | None = None):
        self.bus = bus
        self.runtime = runtime
        if port is None:
            port = int(os.environ.get("NEURON_BUS_PORT", "0") or "0")
        self._requested_port = port
        self._listener: socket.socket | None = None
        self._threads: list[threading.Thread] = []
        self._conns: set[socket.socket] = set()
        self._lock = threading.Lock()
        self._closing = False
        self.port = 0

    def start(self) -> int:
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind(("127.0.0.1", self._requested_port))
        listener.listen(32)
        self._listener = listener
        self.port = listener.getsockname()[1]
        if self._requested_port == 0:
            print(f"[neuronrt] bus wire transport on 127.0.0.1:{self.port}", flush=True)
        accept_thread = threading.Thread(target=self._accept_loop,
                                         name="bus-wire-accept", daemon=True)
        accept_thread.start()
        self._threads.append(accept_thread)
        return self.port

    def close(self) -> None:
        self._closing = True
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
        with self._lock:
            conns = list(self._conns)
        for conn in conns:
            try:
                conn.close()
            except OSError:
                pass

    def _accept_loop(self) -> None:
        while not self._closing:
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            with self._lock:
                self._conns.add(conn)
            thread = threading.Thread(target=self._serve_conn, args=(conn,),
                                      name="bus-wire-conn", daemon=True)
            thread.start()

    def _serve_conn(self, conn: socket.socket) -> None:
        reader = FrameReader(conn)
        node_id = None
        try:
            while not self._closing:
                msg = reader.read(timeout=1.0)
                if msg is None:
                    continue
                op = msg.get("op")
                if op == "hello":
                    node_id = msg.get("node_id")
                try:
                    reply, stream_sub = self._dispatch(op, msg, node_id)
                except NeuronError as e:
                    reply, stream_sub = {"ok": False, "error": type(e).__name__,
                                         "detail": str(e)}, None
                except (KeyError, TypeError, ValueError) as e:
                    reply, stream_sub = {"ok": False, "error": type(e).__name__,
                                         "detail": str(e)}, None
                conn.sendall(encode_frame(reply))
                if stream_sub is not None:
                    self._pump_subscription(conn, stream_sub)
                    return
        except ConnectionError:
            pass
        finally:
            with self._lock:
                self._conns.discard(conn)
            try:
                conn.close()
            except OSError:
                pass

    def _dispatch(self, op, msg, node_id):
        if op == "hello":
            if self.runtime is not None:
                self.runtime.mark_node_running(msg["node_id"])
            return {"ok": True}, None
        if op == "goodbye":
            if self.runtime is not None:
                self.runtime.mark_node_goodbye(msg["node_id"], msg.get("error"))
            return {"ok": True}, None
        if op == "advertise":
            self.bus.advertise(msg["topic"], msg["type"], owner=msg.get("owner", node_id))
            return {"ok": True}, None
        if op == "publish":
            envelope = self.bus.publish(msg["topic"], msg["payload"])
            return {"ok": True, "seq": envelope.seq, "stamp_ns": envelope.stamp_ns}, None
        if op == "read_latest":
            envelope = self.bus.read_latest(msg["topic"])
            return {"ok": True,
                    "envelope": None if envelope is None else envelope.as_dict()}, None
        if op == "subscribe":
            sub = self.bus.subscribe(msg["topic"],
                                     capacity=msg.get("capacity", DEFAULT_QUEUE_CAPACITY))
            return {"ok": True, "mode": "stream"}, sub
        if op == "spawn":
            from .runtime import NodeSpec
            snapshot = self.runtime.spawn(NodeSpec(**msg["spec"]))
            return {"ok": True, "node": snapshot}, None
        if op == "stop":
            kwargs = {}
            if "grace" in msg:
                kwargs["grace"] = msg["grace"]
            snapshot = self.runtime.stop(msg["node_id"], **kwargs)
            return {"ok": True, "node": snapshot}, None
        if op == "status":
            nodes = [] if self.runtime is None else self.runtime.status()
            return {"ok": True, "nodes": nodes, "topics": self.bus.topic_info()}, None
        raise ValueError(f"unknown op {op!r}")

    def _pump_subscription(self, conn, sub) -> None:
        try:
            while not self._closing:
                envelope = sub.get(timeout=0.25)
                if envelope is None:
                    if sub.closed:
                        return
                    continue
                conn.sendall(encode_frame(envelope.as_dict()))
        except OSError:
            pass
        finally:
            self.bus.unsubscribe(sub)


class WireSubscription:
    """Client side of a streamed subscription. `gaps` counts envelopes the
    topic published but this stream never delivered (drops, plus anything
    before attach), derived from seq arithmetic since the server-side drop
    counter is not visible here."""

    def __init__(self, sock: socket.socket, topic: str):
        self.topic = topic
        self._sock = sock
        self._reader = FrameReader(sock)
        self._closed = False
        self.last_seq = 0
        self.gaps = 0

    def get(self, timeout: float | None = None) -> Envelope | None:
        if self._closed:
            return None
        try:
            doc = self._reader.read(timeout)
        except ConnectionError:
            self._closed = True
            return None
        if doc is None:
            return None
        envelope = Envelope.from_dict(doc)
        if envelope.seq > self.last_seq + 1:
            self.gaps += envelope.seq - self.last_seq - 1
        self.last_seq = envelope.seq
        return envelope

    def try_get(self) -> Envelope | None:
        return self.get(timeout=0.0)

    def drain(self) -> list[Envelope]:
        out = []
        while True:
            envelope = self.get(timeout=0.0)
            if envelope is None:
                return out
            out.append(envelope)

    @property
    def closed(self) -> bool:
        return self._closed

    def close(self) -> None:
        self._closed = True
        try:
            self._sock.close()
        except OSError:
            pass


class BusClient:
    """Bus facade for subprocess nodes; mirrors the MessageBus surface that
    node entries use. Services are in-process only."""

    def __init__(self, port: int, host: str = "127.0.0.1"):
        self.host = host
        self.port = port
        self._sock = socket.create_connection((host, port), timeout=10.0)
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._reader = FrameReader(self._sock)
        self._lock = threading.Lock()

    def _request(self, msg: dict) -> dict:
        with self._lock:
            self._sock.sendall(encode_frame(msg))
            reply = self._reader.read(timeout=None)
        if reply is None:
            raise ConnectionError("no reply")
        if not reply.get("ok", False):
            raise self._remote_error(reply)
        return reply

    @staticmethod
    def _remote_error(reply: dict) -> Exception:
        name = reply.get("error", "NeuronError")
        detail = reply.get("detail", "")
        cls = getattr(errors, name, None)
        if isinstance(cls, type) and issubclass(cls, NeuronError):
            err = NeuronError.__new__(cls)
            Exception.__init__(err, detail)
            return err
        return NeuronError(f"{name}: {detail}")

    def hello(self, node_id: str) -> None:
        self._request({"op": "hello", "node_id": node_id})

    def goodbye(self, node_id: str, error: str | None = None) -> None:
        msg = {"op": "goodbye", "node_id": node_id}
        if error:
            msg["error"] = error
        self._request(msg)

    def advertise(self, topic: str, type_name: str, owner: str | None = None) -> None:
        msg = {"op": "advertise", "topic": topic, "type": type_name}
        if owner is not None:
            msg["owner"] = owner
        self._request(msg)

    def publish(self, topic: str, payload) -> dict:
        reply = self._request({"op": "publish", "topic": topic, "payload": payload})
        return {"seq": reply["seq"], "stamp_ns": reply["stamp_ns"]}

    def read_latest(self, topic: str) -> Envelope | None:
        reply = self._request({"op": "read_latest", "topic": topic})
        doc = reply.get("envelope")
        return None if doc is None else Envelope.from_dict(doc)

    def has_topic(self, topic: str) -> bool:
        try:
            self.read_latest(topic)
            return True
        except errors.UnknownTopicError:
            return False

    def subscribe(self, topic: str,
                  capacity: int = DEFAULT_QUEUE_CAPACITY) -> WireSubscription:
        sock = socket.create_connection((self.host, self.port), timeout=10.0)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        sock.sendall(encode_frame({"op": "subscribe", "topic": topic,
                                   "capacity": capacity}))
        reader = FrameReader(sock)
        reply = reader.read(timeout=10.0)
        if reply is None or not reply.get("ok", False):
            sock.close()
            raise (self._remote_error(reply) if reply
                   else ConnectionError("subscribe timed out"))
        sub = WireSubscription(sock, topic)
        sub._reader = reader  # keep any bytes already buffered
        return sub

    def unsubscribe(self, sub: WireSubscription) -> None:
        sub.close()

    def spawn(self, spec_fields: dict) -> dict:
        return self._request({"op": "spawn", "spec": spec_fields})["node"]

    def stop(self, node_id: str, grace: float | None = None) -> dict:
        msg = {"op": "stop", "node_id": node_id}
        if grace is not None:
            msg["grace"] = grace
        return self._request(msg)["node"]

    def status(self) -> dict:
        reply = self._request({"op": "status"})
        return {"nodes": reply["nodes"], "topics": reply["topics"]}

    def advertise_service(self, *args, **kwargs):
        raise ServiceCallError("services are not available over the wire transport")

    def call_service(self, *args, **kwargs):
        raise ServiceCallError("services are not available over the wire transport")

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass
