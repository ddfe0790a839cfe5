"""Node lifecycle supervision on top of the message bus.

Nodes are entry functions (module:function) run either as an in-process
daemon thread or as a subprocess talking to the bus over the TCP wire
transport. Both modes satisfy the same observable contract: states move
starting -> running -> stopping -> stopped, any state may jump to
failed(reason), and a stopped or failed node's advertised topics are
retired. A node that ignores its stop signal is abandoned (in-process) or
killed (subprocess) after the grace period and still reports stopped.
"""

from __future__ import annotations

import importlib
import json
import subprocess
import sys
import threading
import time
from dataclasses import dataclass, field

from .bus import MessageBus
from .errors import DuplicateNodeIdError, SpawnFailureError, UnknownNodeError

NODE_KINDS = ("perception", "inference", "control", "platform")
ISOLATION_MODES = ("in-process-task", "subprocess")
DEFAULT_GRACE_S = 2.0
SPAWN_TIMEOUT_S = 10.0

_TERMINAL = ("stopped", "failed")
_ALLOWED = {
    "starting": ("running", "stopping", "failed"),
    "running": ("stopping", "failed"),
    "stopping": ("stopped", "failed"),
    "stopped": (),
    "failed": (),
}


@dataclass(frozen=True)
class NodeSpec:
    node_id: str
    kind: str
    entry: str                    # "package.module:function"
    params: dict = field(default_factory=dict)
    isolation: str = "in-process-task"

    def __post_init__(self):
        if not self.node_id:
            raise ValueError("node_id must be non-empty")
        if self.kind not in NODE_KINDS:
            raise ValueError(f"kind must be one of {NODE_KINDS}, got {self.kind!r}")
        if self.isolation not in ISOLATION_MODES:
            raise ValueError(
                f"isolation must be one of {ISOLATION_MODES}, got {self.isolation!r}")
        if ":" not in self.entry:
            raise ValueError("entry must look like module:function")


class NodeContext:
    """What an entry function gets: the bus, its params, and a stop signal."""

    def __init__(self, node_id: str, bus, params: dict, stop_event: threading.Event):
        self.node_id = node_id
        self.bus = bus
        self.params = params
        self.stop_event = stop_event

    @property
    def stopped(self) -> bool:
        return self.stop_event.is_set()

    def sleep(self, seconds: float) -> None:
        """Sleep that wakes early when a stop is requested."""
        self.stop_event.wait(seconds)


class NodeHandle:
    """Mutable supervision record; use snapshot() for a stable view."""

    def __init__(self, spec: NodeSpec, started_at_ns: int):
        self.spec = spec
        self.state = "starting"
        self.reason: str | None = None
        self.started_at_ns = started_at_ns
        self.stop_event = threading.Event()
        self.thread: threading.Thread | None = None
        self.proc: subprocess.Popen | None = None
        self.ready = threading.Event()      # running reached (or terminal)
        self.exited = threading.Event()     # terminal state reached
        self.goodbye_error: str | None = None
        self.saw_goodbye = False

    @property
    def node_id(self) -> str:
        return self.spec.node_id

    @property
    def terminal(self) -> bool:
        return self.state in _TERMINAL

    def snapshot(self) -> dict:
        return {
            "node_id": self.spec.node_id,
            "kind": self.spec.kind,
            "entry": self.spec.entry,
            "isolation": self.spec.isolation,
            "state": self.state,
            "reason": self.reason,
            "started_at_ns": self.started_at_ns,
        }


def resolve_entry(entry: str):
    """module:function -> callable; raises SpawnFailureError."""
    module_name, _, func_name = entry.partition(":")
    try:
        module = importlib.import_module(module_name)
    except ImportError as e:
        raise SpawnFailureError(f"cannot import {module_name!r}: {e}") from e
    fn = getattr(module, func_name, None)
    if fn is None or not callable(fn):
        raise SpawnFailureError(f"{entry!r} is not a callable entry point")
    return fn


class NodeRuntime:
    """Spawns, tracks, and stops nodes; one handle per node id (latest wins
    after a terminal respawn)."""

    def __init__(self, bus: MessageBus, wire_port: int | None = None):
        self.bus = bus
        self._lock = threading.RLock()
        self._nodes: dict[str, NodeHandle] = {}
        self._order: list[str] = []
        self._server = None
        self._wire_port = wire_port

    # --- state transitions ------------------------------------------------

    def _transition(self, handle: NodeHandle, new_state: str,
                    reason: str | None = None) -> bool:
        with self._lock:
            if new_state == "failed" and not handle.terminal:
                handle.state, handle.reason = "failed", reason
            elif new_state in _ALLOWED.get(handle.state, ()):
                handle.state = new_state
                if reason is not None:
                    handle.reason = reason
            else:
                return False
        if new_state in ("running",):
            handle.ready.set()
        if new_state in _TERMINAL:
            self.bus.retire_owner(handle.node_id)
            handle.ready.set()
            handle.exited.set()
        return True

    def _finish_clean(self, handle: NodeHandle) -> None:
        # clean entry return: pass through stopping so observers never see
        # running -> stopped directly
        self._transition(handle, "stopping")
        self._transition(handle, "stopped")

    # --- spawn --------------------------------------------------------------

    def spawn(self, spec: NodeSpec) -> dict:
        with self._lock:
            existing = self._nodes.get(spec.node_id)
            if existing is not None and not existing.terminal:
                raise DuplicateNodeIdError(spec.node_id)
            handle = NodeHandle(spec, self.bus.now_ns())
            self._nodes[spec.node_id] = handle
            if spec.node_id in self._order:
                self._order.remove(spec.node_id)
            self._order.append(spec.node_id)
        try:
            if spec.isolation == "in-process-task":
                self._spawn_thread(handle)
            else:
                self._spawn_subprocess(handle)
        except SpawnFailureError:
            with self._lock:
                self._nodes.pop(spec.node_id, None)
                if spec.node_id in self._order:
                    self._order.remove(spec.node_id)
            raise
        return handle.snapshot()

    def _spawn_thread(self, handle: NodeHandle) -> None:
        fn = resolve_entry(handle.spec.entry)  # fail before the thread starts
        ctx = NodeContext(handle.node_id, self.bus, handle.spec.params, handle.stop_event)

        def body():
            self._transition(handle, "running")
            try:
                fn(ctx)
            except Exception as e:
                self._transition(handle, "failed", reason=repr(e))
            else:
                self._finish_clean(handle)

        thread = threading.Thread(target=body, name=f"node-{handle.node_id}", daemon=True)
        handle.thread = thread
        thread.start()

    def _spawn_subprocess(self, handle: NodeHandle) -> None:
        port = self.ensure_wire_server()
        cmd = [
            sys.executable, "-m", "neuronrt.node_host",
            "--node-id", handle.node_id,
            "--entry", handle.spec.entry,
            "--port", str(port),
            "--params", json.dumps(handle.spec.params),
        ]
        try:
            handle.proc = subprocess.Popen(
                cmd, stdout=subprocess.DEVNULL, stderr=subprocess.PIPE, text=True)
        except OSError as e:
            raise SpawnFailureError(f"cannot start subprocess: {e}") from e
        threading.Thread(target=self._monitor_subprocess, args=(handle,),
                         name=f"monitor-{handle.node_id}", daemon=True).start()
        handle.ready.wait(SPAWN_TIMEOUT_S)
        with self._lock:
            state = handle.state
        if state == "running" or state == "stopping":
            return
        if state in _TERMINAL:
            raise SpawnFailureError(
                f"node {handle.node_id!r} exited during startup: {handle.reason}")
        handle.proc.kill()
        raise SpawnFailureError(f"node {handle.node_id!r} sent no ready signal "
                                f"within {SPAWN_TIMEOUT_S}s")

    def _monitor_subprocess(self, handle: NodeHandle) -> None:
        proc = handle.proc
        try:
            # communicate drains stderr while waiting so the child never
            # blocks on a full pipe
            _, stderr_data = proc.communicate()
        except Exception:
            stderr_data = ""
            proc.wait()
        rc = proc.returncode
        stderr_tail = (stderr_data or "")[-2000:]
        with self._lock:
            stopping = handle.state == "stopping"
        if handle.goodbye_error:
            self._transition(handle, "failed", reason=handle.goodbye_error)
        elif handle.saw_goodbye or stopping or rc == 0:
            self._transition(handle, "stopping")
            self._transition(handle, "stopped")
        else:
            reason = f"exit code {rc}"
            if stderr_tail.strip():
                reason += f": {stderr_tail.strip()[-500:]}"
            self._transition(handle, "failed", reason=reason)

    # --- wire callbacks -----------------------------------------------------

    def mark_node_running(self, node_id: str) -> None:
        with self._lock:
            handle = self._nodes.get(node_id)
        if handle is not None:
            self._transition(handle, "running")

    def mark_node_goodbye(self, node_id: str, error: str | None) -> None:
        with self._lock:
            handle = self._nodes.get(node_id)
            if handle is not None:
                handle.saw_goodbye = True
                handle.goodbye_error = error or None

    # --- stop / status --------------------------------------------------------

    def stop(self, node_id: str, grace: float = DEFAULT_GRACE_S) -> dict:
        with self._lock:
            handle = self._nodes.get(node_id)
        if handle is None:
            raise UnknownNodeError(node_id)
        if handle.terminal:
            return handle.snapshot()   # idempotent
        self._transition(handle, "stopping")
        handle.stop_event.set()
        if handle.proc is not None:
            handle.proc.terminate()
            if not handle.exited.wait(grace):
                handle.proc.kill()
                handle.exited.wait(grace)
        else:
            thread = handle.thread
            if thread is not None:
                thread.join(grace)
            if thread is not None and thread.is_alive():
                # daemon thread is abandoned; it can no longer publish because
                # its topics are retired with the handle
                self._transition(handle, "stopped",
                                 reason=f"force-stopped after {grace}s grace")
            else:
                # body may have already finalized; make sure we land terminal
                self._transition(handle, "stopped")
        return handle.snapshot()

    def stop_all(self, grace: float = DEFAULT_GRACE_S) -> list[dict]:
        with self._lock:
            order = list(reversed(self._order))
        return [self.stop(node_id, grace=grace) for node_id in order
                if node_id in self._nodes]

    def status(self) -> list[dict]:
        with self._lock:
            return [self._nodes[node_id].snapshot() for node_id in self._order
                    if node_id in self._nodes]

    def handle(self, node_id: str) -> dict:
        with self._lock:
            handle = self._nodes.get(node_id)
        if handle is None:
            raise UnknownNodeError(node_id)
        return handle.snapshot()

    def is_running(self, node_id: str) -> bool:
        with self._lock:
            handle = self._nodes.get(node_id)
            return handle is not None and handle.state in ("starting", "running")

    def running_nodes(self, kinds: tuple[str, ...] | None = None) -> list[str]:
        with self._lock:
            return [h.node_id for h in self._nodes.values()
                    if h.state in ("starting", "running")
                    and (kinds is None or h.spec.kind in kinds)]

    # --- wire server ------------------------------------------------------------

    def ensure_wire_server(self) -> int:
        """Start the TCP transport lazily; returns its port."""
        with self._lock:
            if self._server is None:
                from .wire import BusServer
                self._server = BusServer(self.bus, self, port=self._wire_port)
                self._server.start()
            return self._server.port

    def shutdown(self, grace: float = DEFAULT_GRACE_S) -> None:
        self.stop_all(grace=grace)
        with self._lock:
            server, self._server = self._server, None
        if server is not None:
            server.close()
